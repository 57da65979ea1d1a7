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
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <vector>

#include "brw/analytics.hpp"
#include "brw/errors.hpp"
#include "brw/simulator.hpp"
#include "brw/statistics.hpp"
#include "models.hpp"

using namespace brw;
using namespace brw::testing;

namespace {

struct Moments {
  double mean = 0.0;
  double se = 0.0;
};

Moments moments(const std::vector<double>& xs) {
  const double m = mean(xs);
  double v = 0.0;
  for (double x : xs) v += (x - m) * (x - m);
  return {m, std::sqrt(v / (xs.size() - 1) / xs.size())};
}

ScenarioConfig bbm_persistent(int n) {
  ScenarioConfig c;
  c.model = bbm(1.5);
  c.lambda = 2.0;
  c.n_gens = n;
  c.obs = {-1.0, 2.0};
  c.eps_trunc = 1e-4;
  c.eps_prune = 1e-4;
  c.rng_seed = 11;
  c.replicates = 40;
  c.bins = 6;
  return c;
}

// Small extinct instance whose unpruned population stays in the thousands.
ScenarioConfig small_extinct(double eps_prune) {
  ScenarioConfig c;
  c.model = fixed2_gauss();
  c.lambda = fixed2_gauss_lower();
  c.n_gens = 6;
  c.obs = {-2.0, 1.0};
  c.eps_trunc = 1e-3;
  c.eps_prune = eps_prune;
  c.engine = Engine::Forward;
  c.rng_seed = 5;
  c.replicates = 500;
  c.bins = 3;
  return c;
}

std::vector<double> column(const std::vector<std::vector<GenerationSummary>>& runs, int gen, bool max) {
  std::vector<double> out;
  for (const auto& r : runs) {
    const auto& s = r[gen];
    if (max) {
      out.push_back(s.max_pos ? *s.max_pos : -1e9);
    } else {
      out.push_back(static_cast<double>(s.count_in_obs));
    }
  }
  return out;
}

// Maxima below the observation window are not certified by pruning and are
// invisible to the snapshot engine.
std::vector<double> censored(std::vector<double> xs, double level) {
  for (double& x : xs) {
    if (x < level) x = level - 1.0;
  }
  return xs;
}

}  // namespace

TEST_CASE("scenario validation") {
  auto c = bbm_persistent(3);
  CHECK_NOTHROW(validate(c));
  auto bad = c;
  bad.obs = {1.0, 1.0};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.seed_window = Interval{2.0, 1.0};
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.eps_trunc = 1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.n_gens = 0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
  bad = c;
  bad.max_band = -1.0;
  CHECK_THROWS_AS(validate(bad), ConfigError);
}

TEST_CASE("normalization mirrors negative lambda") {
  auto c = bbm_persistent(3);
  c.lambda = -2.0;
  c.model = mirrored(bbm(1.5));
  c.obs = {-2.0, 1.0};
  const auto n = normalize(c);
  CHECK(n.mirrored);
  CHECK(n.config.lambda == 2.0);
  CHECK(n.config.obs == Interval{-1.0, 2.0});
  CHECK(log_laplace(n.config.model, 1.3) == doctest::Approx(log_laplace(bbm(1.5), 1.3)));
}

TEST_CASE("seed window for immobile particles") {
  const auto w = window_for(frozen(), 1.0, 1.0, 10, {-5.0, 5.0}, 1e-4);
  CHECK(w.hi >= std::log(2e4) - 1e-9);
  CHECK(w.lo <= -5.0);
  CHECK(w.lo >= -5.0 - 1.0);
  CHECK(truncation_bound(frozen(), 1.0, 1.0, w.lo, 10, -5.0) == 0.0);
}

TEST_CASE("seed window grows with the horizon and certifies the bound") {
  double prev = kInfinity;
  for (int n : {5, 10, 20, 30}) {
    const auto w = window_for(bbm(1.5), 2.0, 1.0, n, {-10.0, 5.0}, 1e-3);
    CHECK(w.lo <= prev);
    prev = w.lo;
    CHECK(truncation_bound(bbm(1.5), 2.0, 1.0, w.lo, n, -10.0) <= 5e-4);
  }
  const auto w = window_for(bbm(1.5), 2.0, 1.0, 20, {-5.0, 5.0}, 2e-4);
  CHECK(truncation_bound(bbm(1.5), 2.0, 1.0, w.lo, 20, -5.0) <= 1e-4);
  CHECK(2.0 * std::exp(-2.0 * w.hi) / 2.0 <= 1e-4 * (1 + 1e-9));
}

TEST_CASE("seeding counts") {
  RandomStream root(21);
  std::vector<double> n1, n2;
  for (int r = 0; r < 2000; ++r) {
    RandomStream rng = root.split(r);
    n1.push_back(static_cast<double>(seed_initial({0.0, 60.0}, 1.0, 1.0, rng).size()));
    n2.push_back(static_cast<double>(seed_initial({0.0, 10.0}, 0.0, 2.0, rng).size()));
  }
  const auto m1 = moments(n1), m2 = moments(n2);
  CHECK(std::abs(m1.mean - 1.0) < 4 * m1.se);
  CHECK(std::abs(m2.mean - 20.0) < 4 * m2.se);
}

TEST_CASE("seed bins are independent Poisson counts with exponential means") {
  const double lambda = 1.5, lo = -2.0, hi = 3.0;
  const int bins = 5, reps = 1000;
  RandomStream root(22);
  std::vector<std::vector<double>> counts(bins);
  for (int r = 0; r < reps; ++r) {
    RandomStream rng = root.split(r);
    std::vector<double> c(bins, 0.0);
    for (double x : seed_initial({lo, hi}, lambda, 1.0, rng).positions) c[std::min(bins - 1, static_cast<int>(x - lo))] += 1;
    for (int b = 0; b < bins; ++b) counts[b].push_back(c[b]);
  }
  // Poisson dispersion test per bin plus a chi-square on the means.
  double chi2 = 0.0;
  for (int b = 0; b < bins; ++b) {
    const double expected = (std::exp(-lambda * (lo + b)) - std::exp(-lambda * (lo + b + 1))) / lambda;
    const double m = mean(counts[b]);
    chi2 += reps * (m - expected) * (m - expected) / expected;
    double disp = 0.0;
    for (double x : counts[b]) disp += (x - m) * (x - m);
    const double ratio = disp / (reps - 1) / m;
    CHECK(std::abs(ratio - 1.0) < 4.0 * std::sqrt(2.0 / reps) + 4.0 / std::sqrt(reps * expected));
  }
  CHECK(chi2 < boost::math::quantile(boost::math::chi_squared(bins), 0.99));
  // Neighbouring bins are uncorrelated.
  const double m0 = mean(counts[0]), m1 = mean(counts[1]);
  double cov = 0.0, v0 = 0.0, v1 = 0.0;
  for (int r = 0; r < reps; ++r) {
    cov += (counts[0][r] - m0) * (counts[1][r] - m1);
    v0 += (counts[0][r] - m0) * (counts[0][r] - m0);
    v1 += (counts[1][r] - m1) * (counts[1][r] - m1);
  }
  CHECK(std::abs(cov / std::sqrt(v0 * v1)) < 4.0 / std::sqrt(reps));
}

TEST_CASE("maximum seed follows the Gumbel law") {
  const double lambda = 2.0;
  RandomStream root(23);
  std::vector<double> maxima;
  for (int r = 0; r < 2000; ++r) {
    RandomStream rng = root.split(r);
    const auto g = seed_initial({-5.0, 40.0}, lambda, 1.0, rng);
    if (g.size() == 0) continue;
    maxima.push_back(*std::max_element(g.positions.begin(), g.positions.end()));
  }
  // An empty seed set has probability exp(-e^{10}/2), i.e. never.
  REQUIRE(maxima.size() == 2000);
  const auto ks = ks_statistic(maxima, [&](double z) { return gumbel_cdf(z, lambda, 1.0); });
  CHECK(ks.p > 0.01);
  CHECK(fit_gumbel(maxima, lambda).c_hat == doctest::Approx(1.0).epsilon(0.1));
}

TEST_CASE("step on deterministic clusters") {
  RandomStream rng(24);
  ParticleGeneration g = seed_initial({0.0, 5.0}, 0.0, 2.0, rng);
  const auto same = step(g, frozen(), rng, std::nullopt);
  CHECK(same.positions == g.positions);
  CHECK(same.gen_index == 1);
  const ClusterModel doubling = IidCluster{FixedCount{2}, finite_atoms({{0.0, 1.0}})};
  auto d = g;
  for (int k = 1; k <= 4; ++k) {
    d = step(d, doubling, rng, std::nullopt);
    CHECK(d.size() == g.size() << k);
  }
  for (std::size_t i = 0; i < d.size(); ++i) CHECK(d.root_positions[d.root_ids[i]] == d.positions[i]);
  const auto pruned = step(g, frozen(), rng, 2.5);
  CHECK(std::all_of(pruned.positions.begin(), pruned.positions.end(), [](double x) { return x >= 2.5; }));
  CHECK_THROWS_AS(step(d, doubling, rng, std::nullopt, d.size()), ResourceCapError);
}

TEST_CASE("Poisson branching mean recursion") {
  const ClusterModel model = IidCluster{PoissonCount{1.3}, gaussian(0.0, 1.0)};
  RandomStream root(25);
  std::vector<double> before, after;
  for (int r = 0; r < 1000; ++r) {
    RandomStream rng = root.split(r);
    ParticleGeneration g;
    g.positions = {0.0};
    g.root_ids = {0};
    g.root_positions = {0.0};
    g = step(step(g, model, rng, std::nullopt), model, rng, std::nullopt);
    before.push_back(static_cast<double>(g.size()));
    after.push_back(static_cast<double>(step(g, model, rng, std::nullopt).size()));
  }
  const auto a = moments(after);
  CHECK(std::abs(a.mean - 1.3 * mean(before)) < 4 * a.se);
}

TEST_CASE("summaries") {
  ParticleGeneration g;
  g.gen_index = 3;
  g.positions = {-3.0, 0.1, 0.9, 1.5, 2.0};
  g.root_ids = {0, 1, 1, 0, 2};
  g.root_positions = {-7.0, -8.0, -9.0};
  const auto s = summarize(g, {0.0, 2.0}, 4);
  CHECK(s.gen_index == 3);
  CHECK(s.count_in_obs == 3);
  CHECK(std::accumulate(s.histogram.begin(), s.histogram.end(), std::int64_t{0}) == s.count_in_obs);
  CHECK(s.histogram == std::vector<std::int64_t>{1, 1, 0, 1});
  CHECK(*s.max_pos == 2.0);
  CHECK(*s.leader_root_pos == -9.0);
  const auto empty = summarize(ParticleGeneration{}, {0.0, 1.0}, 2);
  CHECK_FALSE(empty.max_pos);
  CHECK_FALSE(empty.leader_root_pos);
}

TEST_CASE("prune levels") {
  CHECK(*prune_level_for(bbm(1.5), 2.0, 10, 10, -1.0, 1e-3, 1000) == -1.0);
  for (int g : {0, 3, 7}) CHECK(*prune_level_for(frozen(), 1.0, g, 8, -1.0, 1e-3, 50) == doctest::Approx(-1.0));

  // Largest certifiable level for the summed first-moment load.
  const int n = 20, gen = 10, count = 1000;
  const double a = -1.0, eps = 1e-3;
  const auto x = prune_level_for(bbm(1.5), 2.0, gen, n, a, eps, count);
  REQUIRE(x);
  auto load = [&](double level) {
    double s = 0.0;
    for (int k = 1; k <= n - gen; ++k) s += std::min(1.0, first_moment_tail(bbm(1.5), k, a - level));
    return count * s;
  };
  CHECK(load(*x - 1e-9) <= eps / n * (1 + 1e-9));
  CHECK(load(*x + 1e-3) > eps / n);
  // The single-lag rule of the textbook bound is never more aggressive.
  const double single = a - 10.0 * (-1.5 + std::sqrt(2.0 * (1.0 + std::log(count * n / eps) / 10.0)));
  CHECK(*x <= single + 1e-6);
  CHECK(10.0 * legendre(bbm(1.5), (a - single) / 10.0) == doctest::Approx(std::log(count * n / eps)));
}

TEST_CASE("greedy pruning stays within budget") {
  RandomStream rng(26);
  std::vector<double> pos;
  std::normal_distribution<double> gauss(-3.0, 2.0);
  for (int i = 0; i < 5000; ++i) pos.push_back(gauss(rng));
  const std::vector<double> targets(6, 0.0);
  const double budget = 1e-3;
  const auto cut = greedy_prune_level(bbm(1.5), targets, pos, budget);
  REQUIRE(cut.level);
  CHECK(cut.spent <= budget);
  CHECK(cut.dropped == static_cast<std::size_t>(std::count_if(pos.begin(), pos.end(), [&](double x) { return x < *cut.level; })));
  double exact = 0.0;
  for (double x : pos) {
    if (x >= *cut.level) continue;
    double s = 0.0;
    for (int k = 1; k <= 6; ++k) s += std::min(1.0, expected_count_above(bbm(1.5), k, -x));
    exact += std::min(1.0, s);
  }
  CHECK(exact <= cut.spent * (1 + 1e-9));
  CHECK_FALSE(greedy_prune_level(bbm(1.5), targets, pos, 0.0).level);
}

TEST_CASE("frozen scenario keeps the seed summary") {
  ScenarioConfig c;
  c.model = frozen();
  c.lambda = 1.0;
  c.n_gens = 5;
  c.obs = {-3.0, 3.0};
  c.eps_trunc = 1e-4;
  c.replicates = 5;
  c.bins = 6;
  for (const auto& run : run_replicates(c)) {
    REQUIRE(run.size() == 6);
    for (const auto& s : run) {
      CHECK(s.count_in_obs == run[0].count_in_obs);
      CHECK(s.histogram == run[0].histogram);
      CHECK(s.max_pos == run[0].max_pos);
    }
  }
}

TEST_CASE("replicates are reproducible and identical across serial and parallel runs") {
  auto snapshot = bbm_persistent(4);
  auto forward = small_extinct(1e-3);
  forward.replicates = 20;
  for (const auto& c : {snapshot, forward}) {
    const auto par = run_replicates(c);
    const auto ser = run_replicates_serial(c);
    CHECK(par == ser);
    CHECK(run_replicate(c, 7) == par[7]);
    CHECK(run_replicates(c) == par);
  }
}

TEST_CASE("mirrored scenario reflects the summaries") {
  auto c = bbm_persistent(3);
  c.replicates = 4;
  auto m = c;
  m.model = mirrored(c.model);
  m.lambda = -c.lambda;
  m.obs = {-c.obs.hi, -c.obs.lo};
  const auto a = run_replicates(c);
  const auto b = run_replicates(m);
  for (int r = 0; r < 4; ++r) {
    for (int g = 0; g <= 3; ++g) {
      auto h = b[r][g].histogram;
      std::reverse(h.begin(), h.end());
      CHECK(a[r][g].histogram == h);
      CHECK(a[r][g].max_pos.has_value() == b[r][g].max_pos.has_value());
      if (a[r][g].max_pos) CHECK(*a[r][g].max_pos == -*b[r][g].max_pos);
    }
  }
}

TEST_CASE("pruned and unpruned runs agree in distribution") {
  const auto pruned_cfg = small_extinct(1e-2);
  const auto pruned = run_replicates(pruned_cfg);
  const auto exact = run_replicates(small_extinct(0.0));
  for (int g : {3, 6}) {
    CHECK(ks_two_sample(column(pruned, g, false), column(exact, g, false)).p > 0.01);
    CHECK(ks_two_sample(censored(column(pruned, g, true), pruned_cfg.obs.lo),
                        censored(column(exact, g, true), pruned_cfg.obs.lo))
              .p > 0.01);
  }
}

TEST_CASE("snapshot and forward engines agree on the observation window") {
  // Forward runs of a persistent scenario are expensive: keep the horizon short.
  auto snap = bbm_persistent(2);
  snap.obs = {0.5, 2.5};
  snap.eps_trunc = 1e-3;
  snap.eps_prune = 1e-3;
  snap.replicates = 300;
  snap.bins = 4;
  snap.engine = Engine::Snapshot;
  auto fwd = snap;
  fwd.engine = Engine::Forward;
  fwd.rng_seed = 12;
  const auto a = run_replicates(snap);
  const auto b = run_replicates(fwd);
  for (int g : {1, 2}) {
    CHECK(ks_two_sample(column(a, g, false), column(b, g, false)).p > 0.01);
    CHECK(ks_two_sample(censored(column(a, g, true), snap.obs.lo), censored(column(b, g, true), snap.obs.lo)).p >
          0.01);
  }
}

TEST_CASE("persistent scenario preserves the seeding intensity") {
  auto c = bbm_persistent(15);
  c.replicates = 200;
  const auto runs = run_replicates(c);
  const double width = (c.obs.hi - c.obs.lo) / c.bins;
  int within = 0;
  for (int b = 0; b < c.bins; ++b) {
    std::vector<double> v;
    for (const auto& r : runs) v.push_back(static_cast<double>(r[15].histogram[b]));
    const double lo = c.obs.lo + b * width;
    const double expected = (std::exp(-2.0 * lo) - std::exp(-2.0 * (lo + width))) / 2.0;
    const auto m = moments(v);
    const double se = std::max(m.se, std::sqrt(expected / static_cast<double>(v.size())));
    within += std::abs(m.mean - expected) <= 4 * se;
  }
  CHECK(within == c.bins);
}

TEST_CASE("snapshot needs a root") {
  RandomStream rng(27);
  CHECK_THROWS_AS(sample_snapshot(bbm(1.5), 1.7, 1.0, 3, 0.0, 1e-3, rng), PreconditionError);
  CHECK_THROWS_AS(sample_snapshot(bbm(1.5), -1.0, 1.0, 3, 0.0, 1e-3, rng), PreconditionError);
  CHECK_THROWS_AS(sample_snapshot(bbm(1.5), 2.0, 1.0, 3, -20.0, 1e-3, rng, 1000), ResourceCapError);
}

TEST_CASE("single-ancestor kernels") {
  RandomStream root(28);
  std::vector<double> counts, full_max, bnb_max;
  for (int r = 0; r < 1500; ++r) {
    RandomStream a = root.split(2 * r), b = root.split(2 * r + 1);
    const auto gen = brw_generation(bbm(1.5), 4, a);
    counts.push_back(static_cast<double>(gen.size()));
    full_max.push_back(*std::max_element(gen.begin(), gen.end()));
    bnb_max.push_back(brw_max(bbm(1.5), 4, b).max);
  }
  const auto m = moments(counts);
  CHECK(std::abs(m.mean - std::exp(4.0)) < 4 * m.se);
  CHECK(ks_two_sample(full_max, bnb_max).p > 0.01);
  RandomStream rng(29);
  CHECK(brw_max(frozen(), 6, rng).max == 0.0);
  CHECK(brw_max(bbm(1.5), 0, rng).max == 0.0);
  CHECK(brw_max(IidCluster{FixedCount{0}, gaussian(0, 1)}, 3, rng).max == -kInfinity);
}

TEST_CASE("maximum of one ancestor respects the Chernoff bound") {
  RandomStream root(30);
  const int reps = 4000, n = 4;
  std::vector<double> maxima;
  for (int r = 0; r < reps; ++r) {
    RandomStream rng = root.split(r);
    maxima.push_back(brw_max(fixed2_gauss(), n, rng).max);
  }
  for (double a = n * phi_prime(fixed2_gauss(), 0.0); a <= 2.0; a += 0.5) {
    const double p = std::count_if(maxima.begin(), maxima.end(), [&](double x) { return x >= a; }) / double(reps);
    const double bound = chernoff_bound(fixed2_gauss(), n, a);
    CHECK(p <= bound + 4 * std::sqrt(std::max(bound * (1 - bound), 1.0 / reps) / reps));
  }
}
