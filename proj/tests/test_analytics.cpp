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


#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "brw/analytics.hpp"
#include "brw/errors.hpp"
#include "models.hpp"

using namespace brw;
using namespace brw::testing;

namespace {

const double kSqrt2 = std::numbers::sqrt2;

std::vector<ClusterModel> suite() {
  return {bbm(1.5), fixed2_gauss(), poisson_gauss(), fixed2_two_point(), fixed2_skewed(), geometric_atoms()};
}

// sup_t (z t - phi(t)) over a dense grid.
double grid_legendre(const ClusterModel& m, double z) {
  double best = -kInfinity;
  for (int i = -200000; i <= 200000; ++i) {
    const double t = i * 1e-4;
    best = std::max(best, z * t - phi(m, t));
  }
  return best;
}

}  // namespace

TEST_CASE("phi prime") {
  CHECK(phi_prime(bbm(1.5), 2.0) == doctest::Approx(0.5));
  CHECK(phi_prime(frozen(), 1.3) == 0.0);
  CHECK(phi_prime(fixed2_gauss(), 1.0) == doctest::Approx(-1.0));
}

TEST_CASE("roots") {
  const auto r = find_roots(bbm(1.5));
  REQUIRE(r.size() == 2);
  CHECK(std::abs(r[0] - 1.0) < 1e-9);
  CHECK(std::abs(r[1] - 2.0) < 1e-9);

  const auto tangent = find_roots(bbm(kSqrt2));
  REQUIRE(tangent.size() == 1);
  CHECK(tangent[0] == doctest::Approx(kSqrt2).epsilon(1e-6));

  const auto p = find_roots(poisson_gauss());
  REQUIRE(p.size() == 2);
  const double s = std::sqrt(2.0 * std::log(2.0));
  CHECK(std::abs(p[0] + s) < 1e-9);
  CHECK(std::abs(p[1] - s) < 1e-9);

  CHECK(find_roots(bbm(1.0)).empty());
  CHECK_THROWS_AS(find_roots(frozen()), PreconditionError);
}

TEST_CASE("roots separate the sign pattern of phi") {
  for (const auto& m : suite()) {
    const auto r = find_roots(m);
    for (double x : r) CHECK(std::abs(phi(m, x)) <= 1e-10);
    if (r.size() == 2) {
      for (int i = 1; i < 20; ++i) CHECK(phi(m, r[0] + (r[1] - r[0]) * i / 20.0) < 0.0);
      CHECK(phi(m, r[0] - 0.1) > 0.0);
      CHECK(phi(m, r[1] + 0.1) > 0.0);
    }
  }
}

TEST_CASE("phi is convex") {
  for (const auto& m : suite()) {
    for (double t1 = -4.0; t1 <= 4.0; t1 += 0.37) {
      for (double t3 = t1 + 0.2; t3 <= 4.5; t3 += 0.41) {
        const double t2 = 0.3 * t1 + 0.7 * t3;
        CHECK(phi(m, t2) <= 0.3 * phi(m, t1) + 0.7 * phi(m, t3) + 1e-12);
      }
    }
  }
}

TEST_CASE("Legendre transform examples") {
  CHECK(legendre(bbm(1.5), 0.0) == doctest::Approx(0.125).epsilon(1e-10));
  for (const auto& m : suite()) CHECK(legendre(m, phi_prime(m, 0.0)) == doctest::Approx(-phi(m, 0.0)));
  CHECK(legendre(fixed2_two_point(), 2.0) == kInfinity);
}

TEST_CASE("Legendre duality on a grid") {
  for (const auto& m : suite()) {
    for (double t = -3.0; t <= 3.0; t += 0.1) {
      const double z = phi_prime(m, t);
      CHECK(std::abs(legendre(m, z) - (t * z - phi(m, t))) < 1e-8);
    }
  }
}

TEST_CASE("Legendre transform agrees with a brute-force supremum") {
  for (const auto& m : {bbm(1.5), fixed2_gauss(), fixed2_two_point()}) {
    for (double z : {-2.5, -1.0, -0.3, 0.0, 0.4, 0.9}) {
      const double exact = legendre(m, z);
      if (!std::isfinite(exact)) continue;
      CHECK(std::abs(exact - grid_legendre(m, z)) < 1e-6);
    }
  }
}

TEST_CASE("beta0") {
  CHECK(std::abs(beta0(bbm(1.5)) - (kSqrt2 - 1.5)) < 1e-9);
  CHECK(beta0(bbm(0.0)) == doctest::Approx(kSqrt2).epsilon(1e-9));
  CHECK(beta0(poisson_gauss()) == -kInfinity);
  for (const auto& m : {bbm(1.5), fixed2_gauss(), fixed2_two_point(), fixed2_skewed(), geometric_atoms()}) {
    CHECK(std::abs(legendre(m, beta0(m))) <= 1e-10);
  }
}

TEST_CASE("criticality follows the sign of phi(0)") {
  CHECK(criticality(poisson_gauss()) == Criticality::Subcritical);
  CHECK(criticality(bbm(1.5)) == Criticality::Supercritical);
  CHECK(criticality(frozen()) == Criticality::Critical);
}

TEST_CASE("classification") {
  const auto p = classify(bbm(1.5), 2.0);
  CHECK(p.verdict == Verdict::Persistent);
  CHECK(p.product == doctest::Approx(1.0));
  const auto e = classify(bbm(1.5), 1.0);
  CHECK(e.verdict == Verdict::Extinct);
  CHECK(e.product == doctest::Approx(-0.5));
  CHECK(classify(bbm(kSqrt2), kSqrt2).verdict == Verdict::Inconclusive);
  CHECK_THROWS_AS(classify(bbm(1.5), 1.5), PreconditionError);

  const auto r = find_roots(poisson_gauss());
  for (double x : r) CHECK(classify(poisson_gauss(), x).verdict == Verdict::Persistent);
}

TEST_CASE("classification is invariant under mirroring") {
  for (const auto& m : suite()) {
    for (double x : find_roots(m)) {
      CHECK(classify(m, x).verdict == classify(mirrored(m), -x).verdict);
    }
  }
}

TEST_CASE("profile collects the persistent roots") {
  const auto prof = profile(bbm(1.5));
  CHECK(prof.phi0 == doctest::Approx(1.0));
  REQUIRE(prof.k_st.size() == 1);
  CHECK(prof.k_st[0] == doctest::Approx(2.0));
  CHECK(profile(poisson_gauss()).k_st.size() == 2);
}

TEST_CASE("multidimensional classification") {
  MultidimLaplace f;
  f.value = [](std::span<const double> t) { return 0.5 * (t[0] * t[0] + t[1] * t[1]) - 1.5 * t[0] + 1.0; };
  f.gradient = [](std::span<const double> t) { return std::vector<double>{t[0] - 1.5, t[1]}; };
  const std::vector<double> persistent{2.0, 0.0}, extinct{1.0, 0.0};
  CHECK(classify_multidim(f, persistent).verdict == Verdict::Persistent);
  CHECK(classify_multidim(f, extinct).verdict == Verdict::Extinct);
  CHECK(classify_multidim(f, extinct).product == doctest::Approx(-0.5));

  MultidimLaplace flat;
  flat.value = [](std::span<const double>) { return 0.0; };
  flat.gradient = [](std::span<const double>) { return std::vector<double>{0.0, 0.0}; };
  const std::vector<double> any{0.3, -2.0};
  CHECK(classify_multidim(flat, any).verdict == Verdict::Inconclusive);
  const std::vector<double> off{0.0, 1.0};
  CHECK_THROWS_AS(classify_multidim(f, off), PreconditionError);
}

TEST_CASE("Chernoff bound") {
  CHECK(chernoff_bound(bbm(1.5), 10, 0.0) == doctest::Approx(std::exp(-1.25)));
  CHECK(chernoff_bound(bbm(1.5), 4, 4 * phi_prime(bbm(1.5), 0.0)) == 1.0);
  CHECK(chernoff_bound(poisson_gauss(), 3, 0.0) == doctest::Approx(std::exp(3 * std::log(0.5))));
  CHECK(chernoff_bound(frozen(), 5, 0.5) == 0.0);
  CHECK_THROWS_AS(chernoff_bound(bbm(1.5), 10, -20.0), PreconditionError);
}

TEST_CASE("first-moment tails") {
  // Exact Gaussian tail never exceeds the exponential bound.
  for (int m : {1, 3, 10}) {
    for (double gap : {-2.0, 0.0, 1.0, 5.0, 12.0}) {
      CHECK(expected_count_above(bbm(1.5), m, gap) <= first_moment_tail(bbm(1.5), m, gap) * (1 + 1e-12));
    }
  }
  // Two offspring with N(-2,1) steps: E[# above g] = 2 P[N(-2,1) >= g].
  CHECK(expected_count_above(fixed2_gauss(), 1, -2.0) == doctest::Approx(1.0));
  CHECK(expected_count_above(fixed2_gauss(), 1, 0.0) == doctest::Approx(std::erfc(2.0 / kSqrt2)));
  CHECK(expected_count_above(bbm(1.5), 0, 0.0) == 1.0);
  CHECK(expected_count_above(bbm(1.5), 0, 0.1) == 0.0);
}

TEST_CASE("truncation bound") {
  CHECK(truncation_bound(frozen(), 1.0, 1.0, -5.5, 10, -5.0) == 0.0);
  double prev = kInfinity;
  for (double L : {-20.0, -25.0, -30.0, -40.0, -60.0}) {
    const double b = truncation_bound(bbm(1.5), 2.0, 1.0, L, 20, -5.0);
    CHECK(b < prev);
    CHECK(b >= 0.0);
    prev = b;
  }
  CHECK(prev < 1e-4);
}

TEST_CASE("truncation bound matches a Riemann sum for BBM") {
  const double lambda = 2.0, L = -25.0, a = -5.0;
  const int n = 8;
  double riemann = 0.0;
  const double du = 1e-3;
  for (double u = L - 60.0; u < L; u += du) {
    for (int k = 1; k <= n; ++k) {
      const double z = (a - u - du / 2) / k;
      riemann += std::exp(-lambda * (u + du / 2)) * std::exp(-k * legendre(bbm(1.5), z)) * du;
    }
  }
  CHECK(truncation_bound(bbm(1.5), lambda, 1.0, L, n, a) == doctest::Approx(riemann).epsilon(1e-3));
}
