// Copyright 2026 The brwlab Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "brw/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <numeric>
#include <random>

#include "brw/analytics.hpp"
#include "brw/errors.hpp"
#include "brw/simulator.hpp"

namespace brw {

namespace {

constexpr double kZ975 = 1.959963984540054;
constexpr double kZ99One = 2.3263478740408408;

template <class Body>
void parallel_for(int count, bool parallel, Body&& body) {
  if (!parallel) {
    for (int i = 0; i < count; ++i) body(i);
    return;
  }
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 4)
  for (int i = 0; i < count; ++i) {
    try {
      body(i);
    } catch (...) {
#pragma omp critical(brw_statistics)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
}

double snapshot_max(const ClusterModel& model, double lambda, int n, double level, double eps,
                    RandomStream rng) {
  const auto gen = sample_snapshot(model, lambda, 1.0, n, level, eps, rng);
  if (gen.size() == 0) return -kInfinity;
  return *std::max_element(gen.positions.begin(), gen.positions.end());
}

}  // namespace

double kolmogorov_sf(double x) {
  if (x < 0.2) return 1.0;
  double sum = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = std::exp(-2.0 * k * k * x * x);
    sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
  }
  return std::clamp(sum, 0.0, 1.0);
}

KsResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf) {
  std::vector<double> xs(samples.begin(), samples.end());
  std::sort(xs.begin(), xs.end());
  const double n = static_cast<double>(xs.size());
  KsResult r;
  if (xs.empty()) return r;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double f = cdf(xs[i]);
    r.d = std::max({r.d, (i + 1) / n - f, f - i / n});
  }
  r.p = kolmogorov_sf(std::sqrt(n) * r.d);
  return r;
}

KsResult ks_two_sample(std::span<const double> a, std::span<const double> b) {
  std::vector<double> x(a.begin(), a.end());
  std::vector<double> y(b.begin(), b.end());
  std::sort(x.begin(), x.end());
  std::sort(y.begin(), y.end());
  KsResult r;
  if (x.empty() || y.empty()) return r;
  const double nx = static_cast<double>(x.size());
  const double ny = static_cast<double>(y.size());
  std::size_t i = 0;
  std::size_t j = 0;
  while (i < x.size() && j < y.size()) {
    const double v = std::min(x[i], y[j]);
    while (i < x.size() && x[i] == v) ++i;
    while (j < y.size() && y[j] == v) ++j;
    r.d = std::max(r.d, std::abs(i / nx - j / ny));
  }
  r.p = kolmogorov_sf(std::sqrt(nx * ny / (nx + ny)) * r.d);
  return r;
}

double mean(std::span<const double> xs) {
  if (xs.empty()) return 0.0;
  return std::accumulate(xs.begin(), xs.end(), 0.0) / static_cast<double>(xs.size());
}

double trimmed_mean(std::span<const double> xs, double trim) {
  std::vector<double> v(xs.begin(), xs.end());
  std::sort(v.begin(), v.end());
  const auto cut = static_cast<std::size_t>(std::floor(trim * static_cast<double>(v.size())));
  if (2 * cut >= v.size()) return mean(v);
  return mean(std::span<const double>(v).subspan(cut, v.size() - 2 * cut));
}

Interval95 bootstrap_mean_ci(std::span<const double> xs, RandomStream rng, int resamples,
                             double level) {
  if (xs.empty()) return {};
  std::vector<double> means(static_cast<std::size_t>(resamples));
  std::uniform_int_distribution<std::size_t> pick(0, xs.size() - 1);
  for (int b = 0; b < resamples; ++b) {
    double s = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) s += xs[pick(rng)];
    means[b] = s / static_cast<double>(xs.size());
  }
  std::sort(means.begin(), means.end());
  const double alpha = 0.5 * (1.0 - level);
  auto quantile = [&](double q) {
    const double pos = q * (resamples - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, means.size() - 1);
    return means[lo] + (pos - lo) * (means[hi] - means[lo]);
  };
  return {quantile(alpha), quantile(1.0 - alpha)};
}

std::string to_string(CEstimator e) {
  switch (e) {
    case CEstimator::Direct:
      return "direct";
    case CEstimator::SizeBiased:
      return "size-biased";
    case CEstimator::Auto:
      return "auto";
  }
  return "?";
}

CEstimator resolve_estimator(const ClusterModel& model, double t, CEstimator requested) {
  if (requested != CEstimator::Auto) return requested;
  // At phi'(t) = beta0 the direct average has infinite variance; the tilted
  // ratio stays in (0, 1].
  return phi_prime(model, t) >= beta0(model) - 1e-9 ? CEstimator::SizeBiased : CEstimator::Direct;
}

namespace {

CEstimate estimate_c_impl(const ClusterModel& model, double t, int n, int reps,
                          const RandomStream& rng, const CEstimateOptions& options, bool parallel) {
  if (reps < 1) throw PreconditionError("estimate_c needs reps >= 1");
  CEstimate out;
  out.n = n;
  out.t = t;
  out.reps = reps;
  out.method = resolve_estimator(model, t, options.method);
  out.values.assign(static_cast<std::size_t>(reps), 0.0);
  std::vector<double> pruned(static_cast<std::size_t>(reps), 0.0);
  const double drift = n * phi(model, t);
  parallel_for(reps, parallel, [&](int j) {
    RandomStream local = rng.split(static_cast<std::uint64_t>(j));
    if (out.method == CEstimator::SizeBiased) {
      const auto r = tilted_max_ratio(model, t, n, local, options.delta);
      out.values[j] = r.ratio;
      pruned[j] = r.pruned_rel_mass;
    } else {
      const auto r = brw_max(model, n, local, options.delta);
      out.values[j] = r.max == -kInfinity ? 0.0 : std::exp(t * r.max - drift);
      pruned[j] = r.pruned_mass;
    }
  });
  out.c_hat = mean(out.values);
  out.trimmed = trimmed_mean(out.values);
  out.pruned_mass = std::accumulate(pruned.begin(), pruned.end(), 0.0);
  out.ci = bootstrap_mean_ci(out.values, rng.split(0xB007'5742ULL), options.resamples);
  if (n > 0) {
    out.log_c_over_n = std::log(out.c_hat) / n;
    out.log_ci_over_n = {std::log(out.ci.lo) / n, std::log(out.ci.hi) / n};
  }
  return out;
}

}  // namespace

CEstimate estimate_c(const ClusterModel& model, double t, int n, int reps, const RandomStream& rng,
                     const CEstimateOptions& options) {
  return estimate_c_impl(model, t, n, reps, rng, options, true);
}

CEstimate estimate_c_serial(const ClusterModel& model, double t, int n, int reps,
                            const RandomStream& rng, const CEstimateOptions& options) {
  return estimate_c_impl(model, t, n, reps, rng, options, false);
}

double gumbel_cdf(double z, double lambda, double c) {
  return std::exp(-(c / lambda) * std::exp(-lambda * z));
}

GumbelFit fit_gumbel(std::span<const double> maxima, double lambda) {
  if (!(lambda > 0.0)) throw PreconditionError("fit_gumbel needs lambda > 0");
  std::vector<double> finite;
  for (double z : maxima)
    if (std::isfinite(z)) finite.push_back(z);
  if (finite.size() < 200) throw PreconditionError("fit_gumbel needs at least 200 finite samples");
  const auto [lo, hi] = std::minmax_element(finite.begin(), finite.end());
  if (*lo == *hi) throw PreconditionError("fit_gumbel: degenerate sample (all values equal)");
  // Shift by the minimum so e^{-lambda z} cannot overflow.
  const double shift = *lo;
  double s = 0.0;
  for (double z : finite) s += std::exp(-lambda * (z - shift));
  GumbelFit fit;
  fit.lambda = lambda;
  fit.n = static_cast<int>(finite.size());
  fit.c_hat = lambda * fit.n / s * std::exp(lambda * shift);
  const double c = fit.c_hat;
  fit.goodness = ks_statistic(finite, [&](double z) { return gumbel_cdf(z, lambda, c); });
  return fit;
}

SpeedFit speed_fit(std::span<const std::pair<double, double>> series, double n_min) {
  std::vector<std::pair<double, double>> pts;
  for (const auto& p : series)
    if (p.first >= n_min && std::isfinite(p.second)) pts.push_back(p);
  if (pts.size() < 5) throw PreconditionError("speed_fit needs at least 5 points with n >= n_min");
  const double m = static_cast<double>(pts.size());
  double xbar = 0.0, ybar = 0.0;
  for (const auto& [x, y] : pts) {
    xbar += x;
    ybar += y;
  }
  xbar /= m;
  ybar /= m;
  double sxx = 0.0, sxy = 0.0;
  for (const auto& [x, y] : pts) {
    sxx += (x - xbar) * (x - xbar);
    sxy += (x - xbar) * (y - ybar);
  }
  if (sxx == 0.0) throw PreconditionError("speed_fit needs at least two distinct n");
  SpeedFit fit;
  fit.slope = sxy / sxx;
  fit.intercept = ybar - fit.slope * xbar;
  double meat = 0.0;
  fit.n_lo = pts.front().first;
  fit.n_hi = pts.front().first;
  for (const auto& [x, y] : pts) {
    const double e = y - fit.intercept - fit.slope * x;
    meat += (x - xbar) * (x - xbar) * e * e;
    fit.n_lo = std::min(fit.n_lo, x);
    fit.n_hi = std::max(fit.n_hi, x);
  }
  fit.stderr_ = std::sqrt(meat / (sxx * sxx) * m / (m - 2.0));
  fit.points = static_cast<int>(pts.size());
  return fit;
}

double superposed_shift(double lambda, double u1, double u2) {
  const double hi = std::max(lambda * u1, lambda * u2);
  const double lo = std::min(lambda * u1, lambda * u2);
  return (hi + std::log1p(std::exp(lo - hi))) / lambda;
}

SuperposabilityReport superposability_test(const ClusterModel& model, double lambda, double u1,
                                           double u2, int reps, const RandomStream& rng,
                                           const SuperposabilityOptions& options) {
  if (!(lambda > 0.0)) throw PreconditionError("superposability_test needs lambda > 0");
  const auto cls = classify(model, lambda);
  if (cls.verdict != Verdict::Persistent) {
    throw PreconditionError("superposability_test needs a persistent (model, lambda)");
  }
  SuperposabilityReport r;
  r.u1 = u1;
  r.u2 = u2;
  r.u = superposed_shift(lambda, u1, u2);
  r.reps = reps;
  r.superposed.assign(static_cast<std::size_t>(reps), 0.0);
  r.shifted.assign(static_cast<std::size_t>(reps), 0.0);
  const double level = options.level;
  parallel_for(reps, true, [&](int i) {
    const RandomStream s = rng.split(static_cast<std::uint64_t>(i));
    const double m1 = u1 + snapshot_max(model, lambda, options.burn_in, level - u1,
                                        options.eps_prune, s.split(1));
    const double m2 = u2 + snapshot_max(model, lambda, options.burn_in, level - u2,
                                        options.eps_prune, s.split(2));
    const double m = r.u + snapshot_max(model, lambda, options.burn_in, level - r.u,
                                        options.eps_prune, s.split(3));
    r.superposed[i] = std::max(m1, m2);
    r.shifted[i] = m;
  });
  r.ks = ks_two_sample(r.superposed, r.shifted);
  return r;
}

BoundaryReport boundary_decay_test(double drift_c, double t, std::span<const int> n_list, int reps,
                                   const RandomStream& rng, const CEstimateOptions& options) {
  if (n_list.size() < 2) throw PreconditionError("boundary_decay_test needs at least two n values");
  if (!std::is_sorted(n_list.begin(), n_list.end()) ||
      std::adjacent_find(n_list.begin(), n_list.end()) != n_list.end()) {
    throw PreconditionError("boundary_decay_test needs a strictly increasing n_list");
  }
  const ClusterModel model = UnitTimeBbm{drift_c};
  BoundaryReport r;
  r.drift_c = drift_c;
  r.t = t;
  for (std::size_t i = 0; i < n_list.size(); ++i) {
    r.rows.push_back({n_list[i], estimate_c(model, t, n_list[i], reps,
                                            rng.split(static_cast<std::uint64_t>(n_list[i])),
                                            options)});
  }
  r.strictly_decreasing = true;
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    r.strictly_decreasing =
        r.strictly_decreasing && r.rows[i].estimate.c_hat < r.rows[i - 1].estimate.c_hat;
  }
  const auto& first = r.rows.front().estimate;
  const auto& last = r.rows.back().estimate;
  r.ends_disjoint = last.ci.hi < first.ci.lo;
  r.plateau = true;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    for (std::size_t j = i + 1; j < r.rows.size(); ++j) {
      const auto& a = r.rows[i].estimate.ci;
      const auto& b = r.rows[j].estimate.ci;
      r.plateau = r.plateau && a.lo <= b.hi && b.lo <= a.hi;
    }
  }
  // Weighted trend of c_hat on n; standard errors from the bootstrap widths.
  double sw = 0.0, sx = 0.0, sy = 0.0;
  std::vector<double> w;
  for (const auto& row : r.rows) {
    const double se = std::max((row.estimate.ci.hi - row.estimate.ci.lo) / (2.0 * kZ975), 1e-300);
    w.push_back(1.0 / (se * se));
    sw += w.back();
    sx += w.back() * row.n;
    sy += w.back() * row.estimate.c_hat;
  }
  const double xbar = sx / sw;
  const double ybar = sy / sw;
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    sxx += w[i] * (r.rows[i].n - xbar) * (r.rows[i].n - xbar);
    sxy += w[i] * (r.rows[i].n - xbar) * (r.rows[i].estimate.c_hat - ybar);
  }
  r.trend_slope = sxy / sxx;
  r.trend_z = r.trend_slope * std::sqrt(sxx);
  if (r.strictly_decreasing && r.ends_disjoint && r.trend_z < -kZ99One) {
    r.verdict = "decay-consistent";
  } else if (r.plateau) {
    r.verdict = "plateau-consistent";
  } else {
    r.verdict = "inconclusive";
  }
  return r;
}

}  // namespace brw
