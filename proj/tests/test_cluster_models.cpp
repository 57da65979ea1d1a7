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

#include <boost/math/distributions/chi_squared.hpp>
#include <cmath>
#include <numbers>
#include <vector>

#include "brw/cluster_models.hpp"
#include "brw/errors.hpp"
#include "models.hpp"

using namespace brw;
using namespace brw::testing;

namespace {

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

template <class F>
Moments sample_moments(int n, F&& draw) {
  double s = 0.0, s2 = 0.0;
  for (int i = 0; i < n; ++i) {
    const double x = draw();
    s += x;
    s2 += x * x;
  }
  const double m = s / n;
  return {m, std::sqrt(std::max(0.0, s2 / n - m * m) / n)};
}

}  // namespace

TEST_CASE("frozen model always yields a single particle at the origin") {
  RandomStream rng(1);
  for (int i = 0; i < 100; ++i) {
    const auto c = sample_cluster(frozen(), rng);
    REQUIRE(c.size() == 1);
    CHECK(c[0] == 0.0);
  }
}

TEST_CASE("Poisson(0.5) cluster is empty with probability exp(-0.5)") {
  RandomStream rng(2);
  const int n = 100000;
  const auto m = sample_moments(n, [&] { return sample_cluster(poisson_gauss(), rng).empty() ? 1.0 : 0.0; });
  CHECK(std::abs(m.mean - std::exp(-0.5)) < 4.0 * m.se);
}

TEST_CASE("unit-time BBM has mean offspring count e") {
  RandomStream rng(3);
  const auto m = sample_moments(100000, [&] {
    return static_cast<double>(sample_cluster(bbm(std::numbers::sqrt2), rng).size());
  });
  CHECK(std::abs(m.mean - std::numbers::e) < 4.0 * m.se);
}

TEST_CASE("intensity mass") {
  CHECK(intensity_mass(fixed2_gauss()) == 2.0);
  CHECK(intensity_mass(IidCluster{FixedCount{2}, two_point(0.0, 3.0, 0.1)}) == 2.0);
  CHECK(intensity_mass(poisson_gauss()) == doctest::Approx(0.5));
  CHECK(intensity_mass(bbm(0.0)) == doctest::Approx(std::numbers::e));
  CHECK(intensity_mass(bbm(1.5)) == doctest::Approx(std::numbers::e));
  CHECK(intensity_mass(geometric_atoms()) == doctest::Approx(1.5));
}

TEST_CASE("log-Laplace closed forms") {
  CHECK(log_laplace(bbm(1.5), 2.0) == doctest::Approx(0.0));
  for (double t : {-3.0, 0.0, 0.7, 5.0}) CHECK(log_laplace(frozen(), t) == 0.0);
  CHECK(log_laplace(fixed2_gauss(), 1.0) == doctest::Approx(std::log(2.0) - 1.5).epsilon(1e-12));
  CHECK(log_laplace(fixed2_gauss(), 1.0) == doctest::Approx(-0.8069).epsilon(1e-4));
}

TEST_CASE("log-Laplace derivative matches central differences") {
  const std::vector<ClusterModel> models = {bbm(1.5), fixed2_gauss(), poisson_gauss(), fixed2_two_point(),
                                            geometric_atoms()};
  const double h = 1e-6;
  for (const auto& m : models) {
    for (double t = -3.0; t <= 3.0; t += 0.25) {
      const double fd = (log_laplace(m, t + h) - log_laplace(m, t - h)) / (2 * h);
      CHECK(log_laplace_derivative(m, t) == doctest::Approx(fd).epsilon(1e-6));
    }
  }
}

TEST_CASE("empirical Laplace transform matches exp(phi)") {
  const std::vector<ClusterModel> models = {bbm(1.5), fixed2_gauss(), poisson_gauss(), fixed2_two_point(),
                                            geometric_atoms()};
  RandomStream root(4);
  std::uint64_t tag = 0;
  for (const auto& model : models) {
    for (double t : {-0.5, 0.25, 0.5}) {
      RandomStream rng = root.split(tag++);
      const auto m = sample_moments(100000, [&] {
        double s = 0.0;
        for (double u : sample_cluster(model, rng)) s += std::exp(t * u);
        return s;
      });
      INFO(describe(model), " t=", t);
      CHECK(std::abs(m.mean - std::exp(log_laplace(model, t))) < 4.0 * m.se);
    }
  }
}

TEST_CASE("empirical cluster count matches intensity mass") {
  const std::vector<ClusterModel> models = {poisson_gauss(2.0), geometric_atoms(), bbm(0.3)};
  RandomStream root(5);
  std::uint64_t tag = 0;
  for (const auto& model : models) {
    RandomStream rng = root.split(tag++);
    const auto m = sample_moments(100000, [&] { return static_cast<double>(sample_cluster(model, rng).size()); });
    CHECK(std::abs(m.mean - intensity_mass(model)) < 4.0 * m.se);
  }
}

TEST_CASE("BBM leaf count follows the Yule law") {
  RandomStream rng(6);
  const int n = 100000;
  const int kmax = 12;  // last cell pools k >= kmax
  std::vector<double> observed(kmax, 0.0);
  for (int i = 0; i < n; ++i) {
    const int k = static_cast<int>(sample_cluster(bbm(1.5), rng).size());
    observed[std::min(k, kmax) - 1] += 1.0;
  }
  const double q = 1.0 - std::exp(-1.0);
  double chi2 = 0.0, used = 0.0;
  for (int k = 1; k <= kmax; ++k) {
    const double p = k < kmax ? std::exp(-1.0) * std::pow(q, k - 1) : 1.0 - used;
    used += p;
    const double e = n * p;
    chi2 += (observed[k - 1] - e) * (observed[k - 1] - e) / e;
  }
  const boost::math::chi_squared dist(kmax - 1);
  CHECK(chi2 < boost::math::quantile(dist, 0.99));
}

TEST_CASE("BBM leaves are Gaussian around -c with unit variance per line") {
  RandomStream rng(7);
  // Each leaf is a Brownian path of length 1 with drift -c.
  const auto m = sample_moments(50000, [&] { return sample_cluster(bbm(1.5), rng).front(); });
  CHECK(std::abs(m.mean + 1.5) < 4.0 * m.se);
}

TEST_CASE("count laws") {
  const CountLaw geo = GeometricCount{0.25};
  double total = 0.0, first = 0.0;
  for (int k = 0; k < 400; ++k) {
    total += count_pmf(geo, k);
    first += k * count_pmf(geo, k);
  }
  CHECK(total == doctest::Approx(1.0));
  CHECK(first == doctest::Approx(count_mean(geo)));
  CHECK(count_second_moment(PoissonCount{2.0}) == doctest::Approx(6.0));
  CHECK(count_pmf(FixedCount{3}, 3) == 1.0);
  CHECK(count_pmf(FixedCount{3}, 2) == 0.0);
  CHECK(count_pmf(PoissonCount{1.0}, -1) == 0.0);
}

TEST_CASE("size-biased sibling count has mean E[N^2]/E[N] - 1") {
  RandomStream rng(8);
  for (const CountLaw& law : {CountLaw{PoissonCount{1.5}}, CountLaw{GeometricCount{0.3}}}) {
    const auto m = sample_moments(100000, [&] { return static_cast<double>(sample_sibling_count(law, rng)); });
    CHECK(std::abs(m.mean - (count_second_moment(law) / count_mean(law) - 1.0)) < 4.0 * m.se);
  }
  CHECK(sample_sibling_count(FixedCount{2}, rng) == 1);
  CHECK(sample_sibling_count(FixedCount{1}, rng) == 0);
}

TEST_CASE("atoms are sorted and merged") {
  const auto law = finite_atoms({{1.0, 0.25}, {-1.0, 0.5}, {1.0, 0.25}});
  REQUIRE(law.atoms.size() == 2);
  CHECK(law.atoms[0].value == -1.0);
  CHECK(law.atoms[1].prob == doctest::Approx(0.5));
}

TEST_CASE("tilting") {
  const auto g = std::get<GaussianDisp>(tilt(gaussian(-2.0, 1.5), 2.0));
  CHECK(g.mean == doctest::Approx(1.0));
  CHECK(g.variance == doctest::Approx(1.5));
  const auto a = std::get<AtomicDisp>(tilt(two_point(-1.0, 1.0, 0.5), 0.8));
  CHECK(a.atoms[0].prob + a.atoms[1].prob == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(a.atoms[1].prob / a.atoms[0].prob == doctest::Approx(std::exp(1.6)));
}

TEST_CASE("validation rejects bad laws") {
  CHECK_THROWS_AS(validate(ClusterModel{IidCluster{PoissonCount{-1.0}, gaussian(0, 1)}}), ConfigError);
  CHECK_THROWS_AS(validate(ClusterModel{IidCluster{FixedCount{-1}, gaussian(0, 1)}}), ConfigError);
  CHECK_THROWS_AS(validate(ClusterModel{IidCluster{GeometricCount{0.0}, gaussian(0, 1)}}), ConfigError);
  CHECK_THROWS_AS(validate(ClusterModel{IidCluster{FixedCount{1}, gaussian(0, 0.0)}}), ConfigError);
  CHECK_THROWS_AS(validate(ClusterModel{IidCluster{FixedCount{1}, two_point(0, 1, 1.5)}}), ConfigError);
  CHECK_THROWS_AS(validate(ClusterModel{IidCluster{FixedCount{1}, finite_atoms({{0.0, 0.5}})}}), ConfigError);
  CHECK_NOTHROW(validate(fixed2_gauss()));
  CHECK_NOTHROW(validate(bbm(1.5)));
}

TEST_CASE("mirroring negates displacements") {
  const auto m = mirrored(geometric_atoms());
  for (double t : {-1.0, 0.3, 2.0}) CHECK(log_laplace(m, t) == doctest::Approx(log_laplace(geometric_atoms(), -t)));
  const auto b = mirrored(bbm(1.5));
  CHECK(log_laplace(b, 1.2) == doctest::Approx(log_laplace(bbm(1.5), -1.2)));
  const auto s = displacement_support(mirrored(fixed2_two_point()));
  CHECK(s.first == -1.0);
  CHECK(s.second == 1.0);
}

TEST_CASE("spine cluster marks a tilted offspring") {
  RandomStream rng(9);
  const double t = 0.7;
  for (const auto& model : {fixed2_gauss(), bbm(1.5), geometric_atoms()}) {
    const auto m = sample_moments(100000, [&] { return sample_spine_cluster(model, t, rng).spine; });
    INFO(describe(model));
    CHECK(std::abs(m.mean - log_laplace_derivative(model, t)) < 4.0 * m.se);
  }
  const auto c = sample_spine_cluster(fixed2_gauss(), t, rng);
  CHECK(c.siblings.size() == 1);
}

TEST_CASE("describe is readable") {
  CHECK(describe(poisson_gauss()) == "iid(count=poisson(0.5), disp=gaussian(0,1))");
  CHECK(is_iid(fixed2_gauss()));
  CHECK_FALSE(is_iid(bbm(1.0)));
}
