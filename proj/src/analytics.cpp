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

#include "brw/analytics.hpp"

#include <algorithm>
#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <cmath>
#include <optional>
#include <sstream>

#include "brw/errors.hpp"

namespace brw {

namespace {

// phi(t) = a + b t + q t^2 / 2 for Gaussian displacements and for BBM.
struct Quadratic {
  double a;
  double b;
  double q;
};

std::optional<Quadratic> quadratic_form(const ClusterModel& model) {
  if (const auto* bbm = std::get_if<UnitTimeBbm>(&model)) {
    return Quadratic{1.0, -bbm->drift_c, 1.0};
  }
  const auto& iid = std::get<IidCluster>(model);
  if (const auto* g = std::get_if<GaussianDisp>(&iid.displacement)) {
    return Quadratic{std::log(count_mean(iid.count)), g->mean, g->variance};
  }
  return std::nullopt;
}

void require_two_sided(const ClusterModel& model) {
  const auto [lo, hi] = displacement_support(model);
  if (!(lo < 0.0 && hi > 0.0)) {
    throw PreconditionError("intensity is concentrated on a half-line: " + describe(model));
  }
}

// Bisection on a nondecreasing function g for g(t) = 0 inside [lo, hi] with
// g(lo) <= 0 <= g(hi).
template <class F>
double bisect(F&& g, double lo, double hi) {
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (mid <= lo || mid >= hi) break;
    if (g(mid) <= 0.0) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return std::abs(g(lo)) <= std::abs(g(hi)) ? lo : hi;
}

}  // namespace

std::string to_string(Criticality c) {
  switch (c) {
    case Criticality::Subcritical:
      return "subcritical";
    case Criticality::Critical:
      return "critical";
    case Criticality::Supercritical:
      return "supercritical";
  }
  return "?";
}

std::string to_string(Verdict v) {
  switch (v) {
    case Verdict::Persistent:
      return "persistent";
    case Verdict::Extinct:
      return "extinct";
    case Verdict::Inconclusive:
      return "inconclusive";
  }
  return "?";
}

double phi_prime(const ClusterModel& model, double t) { return log_laplace_derivative(model, t); }

Criticality criticality(const ClusterModel& model) {
  const double p0 = phi(model, 0.0);
  if (std::abs(p0) <= kTangencyTolerance) return Criticality::Critical;
  return p0 > 0.0 ? Criticality::Supercritical : Criticality::Subcritical;
}

double slope_inverse(const ClusterModel& model, double z) {
  if (auto quad = quadratic_form(model)) return (z - quad->b) / quad->q;
  const auto [lo_s, hi_s] = displacement_support(model);
  if (!(z > lo_s && z < hi_s)) {
    throw PreconditionError("slope outside the range of phi'");
  }
  double lo = -1.0;
  double hi = 1.0;
  while (phi_prime(model, hi) < z) {
    lo = hi;
    hi *= 2.0;
    if (hi > kBracketCap) throw PreconditionError("bracket cap exceeded solving phi'(t) = z");
  }
  while (phi_prime(model, lo) > z) {
    hi = lo;
    lo *= 2.0;
    if (lo < -kBracketCap) throw PreconditionError("bracket cap exceeded solving phi'(t) = z");
  }
  return bisect([&](double t) { return phi_prime(model, t) - z; }, lo, hi);
}

double argmin_phi(const ClusterModel& model) {
  require_two_sided(model);
  return slope_inverse(model, 0.0);
}

std::vector<double> find_roots(const ClusterModel& model) {
  const double t0 = argmin_phi(model);
  const double floor = phi(model, t0);
  if (std::abs(floor) <= kTangencyTolerance) return {t0};
  if (floor > 0.0) return {};

  auto side = [&](double direction) {
    double step = 1.0;
    double inner = t0;
    double outer = t0 + direction * step;
    while (phi(model, outer) <= 0.0) {
      inner = outer;
      step *= 2.0;
      outer = t0 + direction * step;
      if (std::abs(outer) > kBracketCap) throw PreconditionError("bracket cap exceeded in find_roots");
    }
    // phi is monotone on each side of t0; orient so the bisected map increases.
    if (direction > 0) return bisect([&](double t) { return phi(model, t); }, inner, outer);
    return bisect([&](double t) { return -phi(model, t); }, outer, inner);
  };
  return {side(-1.0), side(1.0)};
}

double legendre(const ClusterModel& model, double z) {
  if (auto quad = quadratic_form(model)) {
    const double d = z - quad->b;
    return d * d / (2.0 * quad->q) - quad->a;
  }
  const auto& iid = std::get<IidCluster>(model);
  const auto& atoms = std::get<AtomicDisp>(iid.displacement).atoms;
  const auto [lo, hi] = displacement_support(model);
  if (z > hi || z < lo) return kInfinity;
  if (z == hi || z == lo) {
    // Supremum reached as t -> +-infinity: -log(mean * P[X = edge]).
    double p_edge = 0.0;
    for (const auto& a : atoms)
      if (a.value == z) p_edge += a.prob;
    return -std::log(count_mean(iid.count)) - std::log(p_edge);
  }
  const double t = slope_inverse(model, z);
  return z * t - phi(model, t);
}

double beta0(const ClusterModel& model) {
  switch (criticality(model)) {
    case Criticality::Subcritical:
      return -kInfinity;
    case Criticality::Critical:
      return phi_prime(model, 0.0);
    case Criticality::Supercritical:
      break;
  }
  const double z_lo = phi_prime(model, 0.0);  // argmin of I, where I = -phi(0) < 0
  const auto [s_lo, s_hi] = displacement_support(model);
  double z_hi;
  if (std::isfinite(s_hi)) {
    if (legendre(model, s_hi) <= 0.0) return s_hi;
    z_hi = s_hi;
  } else {
    double step = 1.0;
    z_hi = z_lo + step;
    while (legendre(model, z_hi) <= 0.0) {
      step *= 2.0;
      z_hi = z_lo + step;
      if (step > kBracketCap) throw PreconditionError("bracket cap exceeded in beta0");
    }
  }
  return bisect([&](double z) { return legendre(model, z); }, z_lo, z_hi);
}

Classification classify(const ClusterModel& model, double lambda) {
  const double value = phi(model, lambda);
  if (!(std::abs(value) <= kIsRootTolerance)) {
    std::ostringstream os;
    os << "lambda=" << lambda << " is not a root of phi (phi=" << value << ")";
    throw PreconditionError(os.str());
  }
  Classification out;
  out.product = lambda * phi_prime(model, lambda);
  if (out.product > kVerdictTolerance) {
    out.verdict = Verdict::Persistent;
  } else if (out.product < -kVerdictTolerance) {
    out.verdict = Verdict::Extinct;
  } else {
    out.verdict = Verdict::Inconclusive;
  }
  return out;
}

Classification classify_multidim(const MultidimLaplace& laplace, std::span<const double> lambda) {
  const double value = laplace.value(lambda);
  if (!(std::abs(value) <= kIsRootTolerance)) {
    throw PreconditionError("lambda is not a root of the multidimensional phi");
  }
  const auto grad = laplace.gradient(lambda);
  if (grad.size() != lambda.size()) throw PreconditionError("gradient dimension mismatch");
  Classification out;
  for (std::size_t i = 0; i < lambda.size(); ++i) out.product += lambda[i] * grad[i];
  if (out.product > kVerdictTolerance) {
    out.verdict = Verdict::Persistent;
  } else if (out.product < -kVerdictTolerance) {
    out.verdict = Verdict::Extinct;
  }
  return out;
}

LaplaceProfile profile(const ClusterModel& model) {
  LaplaceProfile p;
  p.model = model;
  p.phi0 = phi(model, 0.0);
  p.criticality = criticality(model);
  p.roots = find_roots(model);
  p.beta0 = beta0(model);
  for (double r : p.roots) {
    if (r * phi_prime(model, r) > kVerdictTolerance) p.k_st.push_back(r);
  }
  return p;
}

double chernoff_bound(const ClusterModel& model, int n, double a) {
  if (n < 1) throw PreconditionError("chernoff_bound needs n >= 1");
  const double mean_slope = phi_prime(model, 0.0);
  if (a < n * mean_slope - 1e-12 * std::max(1.0, std::abs(n * mean_slope))) {
    throw PreconditionError("chernoff_bound needs a >= n phi'(0)");
  }
  const double rate = legendre(model, a / n);
  if (rate == kInfinity) return 0.0;
  return std::clamp(std::exp(-n * rate), 0.0, 1.0);
}

double first_moment_tail(const ClusterModel& model, int m, double gap) {
  const double z = gap / m;
  const double rate = z >= phi_prime(model, 0.0) ? legendre(model, z) : -phi(model, 0.0);
  if (rate == kInfinity) return 0.0;
  return std::exp(-m * rate);
}

double expected_count_above(const ClusterModel& model, int m, double gap) {
  if (m <= 0) return gap <= 0.0 ? 1.0 : 0.0;
  if (auto quad = quadratic_form(model)) {
    const double z = (gap - m * quad->b) / std::sqrt(2.0 * m * quad->q);
    const double tail = 0.5 * std::erfc(z);
    return tail > 0.0 ? std::exp(m * quad->a + std::log(tail)) : 0.0;
  }
  return first_moment_tail(model, m, gap);
}

double truncation_bound(const ClusterModel& model, double lambda, double c_mult, double lower,
                        std::span<const double> targets) {
  if (!(lambda > 0.0)) throw PreconditionError("truncation_bound needs lambda > 0");
  const double mean_slope = phi_prime(model, 0.0);
  const double log_c = std::log(c_mult);
  const double hi_support = displacement_support(model).second;
  double total = 0.0;
  for (std::size_t idx = 0; idx < targets.size(); ++idx) {
    const double k = static_cast<double>(idx + 1);
    const double gap = targets[idx] - lower;
    if (gap / k < mean_slope) {
      throw PreconditionError("seed window too small for the horizon (target - L < k phi'(0))");
    }
    // s = lower - u >= 0;  log f(s) is concave in s.
    auto log_f = [&](double s) {
      const double rate = legendre(model, (gap + s) / k);
      if (rate == kInfinity) return -kInfinity;
      return log_c - lambda * (lower - s) - k * rate;
    };
    double s_end = kInfinity;
    if (std::isfinite(hi_support)) {
      s_end = k * hi_support - gap;
      if (s_end <= 0.0) continue;
    }
    // Mode: lambda = I'((gap+s)/k), i.e. (gap+s)/k = phi'(lambda).
    double mode = std::max(0.0, k * phi_prime(model, lambda) - gap);
    if (mode > s_end) mode = s_end;
    const double peak = log_f(mode);
    if (peak == -kInfinity) continue;
    // Extend the upper limit until the integrand is negligible.
    if (!std::isfinite(s_end)) {
      double width = 1.0;
      while (log_f(mode + width) > peak - 60.0) width *= 2.0;
      s_end = mode + width;
    }
    auto f = [&](double s) {
      const double v = log_f(s);
      return v == -kInfinity ? 0.0 : std::exp(v);
    };
    using boost::math::quadrature::gauss_kronrod;
    double piece = 0.0;
    if (mode > 0.0) piece += gauss_kronrod<double, 31>::integrate(f, 0.0, mode, 15, 1e-10);
    if (s_end > mode) piece += gauss_kronrod<double, 31>::integrate(f, mode, s_end, 15, 1e-10);
    total += piece;
  }
  return total;
}

double truncation_bound(const ClusterModel& model, double lambda, double c_mult, double lower,
                        int n, double a_obs) {
  std::vector<double> targets(static_cast<std::size_t>(std::max(n, 0)), a_obs);
  return truncation_bound(model, lambda, c_mult, lower, targets);
}

}  // namespace brw
