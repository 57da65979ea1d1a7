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

#include "brw/backward_tree.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <string>
#include <type_traits>
#include <variant>

#include <boost/math/distributions/students_t.hpp>

#include "brw/analytics.hpp"
#include "brw/errors.hpp"

namespace brw {

namespace {

const IidCluster& iid_or_throw(const ClusterModel& model, const char* what) {
  const auto* iid = std::get_if<IidCluster>(&model);
  if (!iid) throw UnsupportedModelError(std::string(what) + " supports i.i.d. clusters only");
  return *iid;
}

constexpr double kZ99 = 2.5758293035489004;     // two-sided 99%

// Wilson score interval.
std::pair<double, double> wilson(std::int64_t hits, int trials, double z) {
  if (trials == 0) return {0.0, 1.0};
  const double n = trials;
  const double p = hits / n;
  const double z2 = z * z;
  const double centre = (p + z2 / (2 * n)) / (1 + z2 / n);
  const double half = z * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n)) / (1 + z2 / n);
  return {std::max(0.0, centre - half), std::min(1.0, centre + half)};
}

}  // namespace

double TiltedStepLaw::mean() const {
  return std::visit(
      [](const auto& law) {
        using T = std::decay_t<decltype(law)>;
        if constexpr (std::is_same_v<T, GaussianDisp>) {
          return law.mean;
        } else {
          double m = 0.0;
          for (const auto& atom : law.atoms) m += atom.value * atom.prob;
          return m;
        }
      },
      tilted);
}

double TiltedStepLaw::sample(RandomStream& rng) const { return sample_displacement(tilted, rng); }

TiltedStepLaw tilted_step(const ClusterModel& model, double lambda) {
  const auto& iid = iid_or_throw(model, "tilted_step");
  if (!(std::abs(phi(model, lambda)) <= kIsRootTolerance)) {
    throw PreconditionError("tilted_step needs lambda to be a root of phi");
  }
  return {iid.displacement, lambda, tilt(iid.displacement, lambda)};
}

ClusterSample palm_siblings(const ClusterModel& model, RandomStream& rng) {
  const auto& iid = iid_or_throw(model, "palm_siblings");
  const int k = sample_sibling_count(iid.count, rng);
  ClusterSample out;
  out.reserve(static_cast<std::size_t>(k));
  for (int i = 0; i < k; ++i) out.push_back(sample_displacement(iid.displacement, rng));
  return out;
}

BackwardTreeSample sample_backward_tree(const ClusterModel& model, double lambda, int n_max,
                                        double a, RandomStream& rng,
                                        const BackwardOptions& options) {
  const auto law = tilted_step(model, lambda);
  BackwardTreeSample out;
  out.n_max = n_max;
  double s = 0.0;
  std::vector<double> targets;
  for (int n = 1; n <= n_max; ++n) {
    s += law.sample(rng);
    const ClusterSample sibs = palm_siblings(model, rng);
    out.s.push_back(s);
    out.k.push_back(static_cast<int>(sibs.size()));

    if (out.truncated_at) {
      out.rho_count.push_back(0);
      out.hit.push_back(1);
      continue;
    }
    ParticleGeneration gen;
    gen.root_positions = {0.0};
    for (double z : sibs) {
      gen.positions.push_back(-s + z);
      gen.root_ids.push_back(0);
    }
    try {
      for (int g = 0; g < n - 1 && gen.size() > 0; ++g) {
        std::optional<double> cut;
        if (options.eps_prune > 0.0) {
          targets.assign(static_cast<std::size_t>(n - 1 - g), -kInfinity);
          targets.back() = a;
          cut = prune_level_for_targets(model, targets,
                                        options.eps_prune / n_max / (n - 1) / gen.size());
        }
        gen = step(gen, model, rng, cut, options.level_cap);
      }
    } catch (const ResourceCapError&) {
      out.truncated_at = n;
      out.rho_count.push_back(0);
      out.hit.push_back(1);
      continue;
    }
    std::int64_t count = 0;
    for (double x : gen.positions) count += x >= a ? 1 : 0;
    out.rho_count.push_back(count);
    out.hit.push_back(count > 0 ? 1 : 0);
  }
  return out;
}

std::string to_string(StabilityVerdict v) {
  switch (v) {
    case StabilityVerdict::StableConsistent:
      return "stable-consistent";
    case StabilityVerdict::UnstableConsistent:
      return "unstable-consistent";
    case StabilityVerdict::Inconclusive:
      return "inconclusive";
  }
  return "?";
}

StabilityReport summarize_stability(std::vector<BackwardTreeSample> samples, int n_max, double a) {
  StabilityReport r;
  r.n_max = n_max;
  r.a = a;
  r.replicates = static_cast<int>(samples.size());
  r.hits.assign(static_cast<std::size_t>(n_max), 0);
  for (const auto& smp : samples) {
    if (smp.truncated_at) ++r.truncated;
    for (int n = 0; n < n_max; ++n) r.hits[n] += smp.hit[n];
  }
  double partial = 0.0;
  for (int n = 0; n < n_max; ++n) {
    const double p = r.replicates ? static_cast<double>(r.hits[n]) / r.replicates : 0.0;
    const auto [lo, hi] = wilson(r.hits[n], r.replicates, kZ99);
    r.p_hat.push_back(p);
    r.ci_lo.push_back(lo);
    r.ci_hi.push_back(hi);
    partial += p;
    r.partial_sums.push_back(partial);
  }

  // Least-squares fit of log p_hat on n over the leading run of positive
  // levels; residual standard error, Student t bound.
  int run = 0;
  while (run < n_max && r.p_hat[run] > 0.0) ++run;
  r.fit_points = run;
  bool decay_significant = false;
  if (run >= 3) {
    const double k = run;
    double xbar = 0.0, ybar = 0.0;
    for (int i = 0; i < run; ++i) {
      xbar += (i + 1) / k;
      ybar += std::log(r.p_hat[i]) / k;
    }
    double sxx = 0.0, sxy = 0.0;
    for (int i = 0; i < run; ++i) {
      sxx += (i + 1 - xbar) * (i + 1 - xbar);
      sxy += (i + 1 - xbar) * (std::log(r.p_hat[i]) - ybar);
    }
    r.slope = sxy / sxx;
    double rss = 0.0;
    for (int i = 0; i < run; ++i) {
      const double e = std::log(r.p_hat[i]) - ybar - r.slope * (i + 1 - xbar);
      rss += e * e;
    }
    r.slope_se = std::sqrt(rss / (k - 2.0) / sxx);
    const double tq = boost::math::quantile(boost::math::students_t(k - 2.0), 0.99);
    r.ratio = std::exp(r.slope);
    r.ratio_upper = std::exp(r.slope + tq * r.slope_se);
    decay_significant = r.ratio_upper < 1.0;
  }

  const int half_start = n_max / 2;
  bool tail_empty = n_max > 0;
  for (int n = half_start; n < n_max; ++n) tail_empty = tail_empty && r.hits[n] == 0;
  bool all_zero = true;
  for (auto h : r.hits) all_zero = all_zero && h == 0;

  const int third_start = n_max - std::max(1, n_max / 3);
  bool bounded_away = n_max > 0;
  for (int n = third_start; n < n_max; ++n) bounded_away = bounded_away && r.ci_lo[n] > 0.01;

  // A slow but significant decay with the tail still bounded away from 0 is
  // evidence for both; report neither.
  if (all_zero || tail_empty || (decay_significant && !bounded_away)) {
    r.verdict = StabilityVerdict::StableConsistent;
  } else if (bounded_away && !decay_significant) {
    r.verdict = StabilityVerdict::UnstableConsistent;
  }
  r.samples = std::move(samples);
  return r;
}

StabilityReport stability_diagnostic_serial(const ClusterModel& model, double lambda, int n_max,
                                            double a, int replicates, const RandomStream& rng,
                                            const BackwardOptions& options) {
  std::vector<BackwardTreeSample> samples(static_cast<std::size_t>(replicates));
  for (int i = 0; i < replicates; ++i) {
    RandomStream local = rng.split(static_cast<std::uint64_t>(i));
    samples[i] = sample_backward_tree(model, lambda, n_max, a, local, options);
  }
  return summarize_stability(std::move(samples), n_max, a);
}

StabilityReport stability_diagnostic(const ClusterModel& model, double lambda, int n_max, double a,
                                     int replicates, const RandomStream& rng,
                                     const BackwardOptions& options) {
  tilted_step(model, lambda);  // fail fast outside the parallel region
  std::vector<BackwardTreeSample> samples(static_cast<std::size_t>(replicates));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < replicates; ++i) {
    try {
      RandomStream local = rng.split(static_cast<std::uint64_t>(i));
      samples[i] = sample_backward_tree(model, lambda, n_max, a, local, options);
    } catch (...) {
#pragma omp critical(brw_backward)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return summarize_stability(std::move(samples), n_max, a);
}

}  // namespace brw
