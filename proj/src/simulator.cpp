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

#include "brw/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <exception>
#include <functional>
#include <limits>
#include <random>
#include <string>

#include "brw/errors.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace brw {

namespace {

double log_add(double a, double b) {
  if (a == -kInfinity) return b;
  if (b == -kInfinity) return a;
  const double hi = std::max(a, b);
  return hi + std::log1p(std::exp(std::min(a, b) - hi));
}

// log of c/lambda (e^{-lambda lo} - e^{-lambda hi}), lambda > 0.
double log_seed_mass(double lambda, double c_mult, double lo, double hi) {
  return std::log(c_mult) - std::log(lambda) - lambda * lo + std::log(-std::expm1(-lambda * (hi - lo)));
}

// Inverse transform for density proportional to e^{-lambda u} on [lo, hi].
double exp_profile_draw(double lambda, double lo, double hi, double v) {
  if (lambda == 0.0) return lo + v * (hi - lo);
  return lo - std::log1p(v * std::expm1(-lambda * (hi - lo))) / lambda;
}

std::int64_t poisson_draw(double mean, RandomStream& rng) {
  if (mean <= 0.0) return 0;
  return std::poisson_distribution<std::int64_t>(mean)(rng);
}

void check_cap(std::size_t count, std::size_t cap, const char* what) {
  if (count > cap) {
    throw ResourceCapError(std::string(what) + ": population " + std::to_string(count) +
                           " exceeds cap " + std::to_string(cap));
  }
}

std::uint64_t child_label(std::uint64_t parent, std::uint64_t index) {
  return mix64(parent * 0x9E3779B97F4A7C15ULL + index + 1);
}

}  // namespace

void validate(const ScenarioConfig& c) {
  validate(c.model);
  if (!std::isfinite(c.lambda)) throw ConfigError("lambda must be finite");
  if (!(c.c_mult > 0.0) || !std::isfinite(c.c_mult)) throw ConfigError("c_mult must be positive");
  if (c.n_gens < 1) throw ConfigError("n_gens must be a positive integer");
  if (!(c.obs.lo < c.obs.hi)) throw ConfigError("obs window needs obs_lo < obs_hi");
  if (c.seed_window && !(c.seed_window->lo < c.seed_window->hi)) {
    throw ConfigError("seed window needs L < R");
  }
  if (!(c.eps_trunc > 0.0 && c.eps_trunc < 1.0)) throw ConfigError("eps_trunc must lie in (0,1)");
  if (!(c.eps_prune >= 0.0 && c.eps_prune < 1.0)) throw ConfigError("eps_prune must lie in [0,1)");
  if (c.replicates < 1) throw ConfigError("replicates must be positive");
  if (c.bins < 1) throw ConfigError("bins must be positive");
  if (c.track_margin && !(*c.track_margin >= 0.0)) throw ConfigError("track_margin must be >= 0");
  if (c.max_band && !(*c.max_band > 0.0)) throw ConfigError("max_band must be positive");
  if (c.population_cap < 1) throw ConfigError("population_cap must be positive");
}

NormalizedScenario normalize(const ScenarioConfig& config) {
  NormalizedScenario out{config, false};
  if (config.lambda < 0.0) {
    out.mirrored = true;
    out.config.model = mirrored(config.model);
    out.config.lambda = -config.lambda;
    out.config.obs = {-config.obs.hi, -config.obs.lo};
    if (config.seed_window) out.config.seed_window = Interval{-config.seed_window->hi, -config.seed_window->lo};
  }
  return out;
}

GenerationSummary summarize(const ParticleGeneration& gen, Interval obs, int bins) {
  GenerationSummary s;
  s.gen_index = gen.gen_index;
  s.histogram.assign(static_cast<std::size_t>(bins), 0);
  const double width = (obs.hi - obs.lo) / bins;
  std::size_t arg = 0;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const double x = gen.positions[i];
    if (!s.max_pos || x > *s.max_pos) {
      s.max_pos = x;
      arg = i;
    }
    if (x >= obs.lo && x < obs.hi) {
      auto b = static_cast<int>((x - obs.lo) / width);
      b = std::clamp(b, 0, bins - 1);
      ++s.histogram[static_cast<std::size_t>(b)];
      ++s.count_in_obs;
    }
  }
  if (s.max_pos) s.leader_root_pos = gen.root_positions[gen.root_ids[arg]];
  return s;
}

std::vector<double> target_levels(const ScenarioConfig& c) {
  std::vector<double> out(static_cast<std::size_t>(c.n_gens) + 1, c.obs.lo);
  if (!c.track_margin) return out;
  const double b0 = beta0(c.model);
  if (!std::isfinite(b0)) return out;
  for (int k = 0; k <= c.n_gens; ++k) out[k] = std::min(c.obs.lo, b0 * k - *c.track_margin);
  return out;
}

Interval window_for(const ClusterModel& model, double lambda, double c_mult,
                    std::span<const double> targets, double obs_hi, double eps_trunc) {
  if (!(lambda > 0.0)) throw InfeasibleWindowError("window_for needs lambda > 0 after normalization");
  if (targets.empty()) throw InfeasibleWindowError("window_for needs targets l_0..l_n");
  const double budget = 0.5 * eps_trunc;
  const double right = std::max(obs_hi, std::log(c_mult / (lambda * budget)) / lambda);
  const double start = targets.front();
  const auto future = targets.subspan(1);

  auto certified = [&](double lower) {
    try {
      return truncation_bound(model, lambda, c_mult, lower, future) <= budget;
    } catch (const PreconditionError&) {
      return false;
    }
  };
  if (future.empty() || certified(start)) return {start, right};

  double margin = 1.0;
  while (!certified(start - margin)) {
    margin *= 2.0;
    if (margin > 1e6) throw InfeasibleWindowError("truncation bound not certifiable within |L| <= 1e6");
  }
  double good = start - margin;
  double bad = start - 0.5 * margin;
  if (margin == 1.0) bad = start;
  while (bad - good > 1e-3) {
    const double mid = 0.5 * (good + bad);
    (certified(mid) ? good : bad) = mid;
  }
  return {good, right};
}

Interval window_for(const ClusterModel& model, double lambda, double c_mult, int n_gens,
                    Interval obs, double eps_trunc) {
  std::vector<double> targets(static_cast<std::size_t>(std::max(n_gens, 0)) + 1, obs.lo);
  return window_for(model, lambda, c_mult, targets, obs.hi, eps_trunc);
}

ParticleGeneration seed_initial(Interval window, double lambda, double c_mult, RandomStream& rng,
                                std::size_t cap) {
  double mean;
  if (lambda == 0.0) {
    mean = c_mult * (window.hi - window.lo);
  } else if (lambda > 0.0) {
    mean = std::exp(log_seed_mass(lambda, c_mult, window.lo, window.hi));
  } else {
    mean = c_mult * (std::exp(-lambda * window.hi) - std::exp(-lambda * window.lo)) / -lambda;
  }
  if (!(mean <= static_cast<double>(cap))) {
    throw ResourceCapError("expected seed count " + std::to_string(mean) + " exceeds cap");
  }
  const auto count = static_cast<std::size_t>(poisson_draw(mean, rng));
  check_cap(count, cap, "seed_initial");
  ParticleGeneration gen;
  gen.positions.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    gen.positions.push_back(exp_profile_draw(lambda, window.lo, window.hi, rng.uniform()));
  }
  gen.root_positions = gen.positions;
  gen.root_ids.resize(count);
  for (std::size_t i = 0; i < count; ++i) gen.root_ids[i] = static_cast<std::uint32_t>(i);
  return gen;
}

ParticleGeneration step(const ParticleGeneration& gen, const ClusterModel& model,
                        RandomStream& rng, std::optional<double> prune_level, std::size_t cap) {
  ParticleGeneration next;
  next.gen_index = gen.gen_index + 1;
  next.root_positions = gen.root_positions;
  std::vector<double> buffer;
  for (std::size_t i = 0; i < gen.size(); ++i) {
    const double x = gen.positions[i];
    if (prune_level && x < *prune_level) continue;
    buffer.clear();
    sample_cluster_into(model, rng, buffer);
    for (double d : buffer) {
      next.positions.push_back(x + d);
      next.root_ids.push_back(gen.root_ids[i]);
    }
    check_cap(next.positions.size(), cap, "step");
  }
  return next;
}

std::optional<double> prune_level_for_targets(const ClusterModel& model,
                                              std::span<const double> targets, double budget) {
  if (targets.empty()) return std::nullopt;
  const double mean_slope = phi_prime(model, 0.0);
  double top = kInfinity;
  for (std::size_t i = 0; i < targets.size(); ++i) {
    if (std::isfinite(targets[i])) top = std::min(top, targets[i] - (i + 1.0) * mean_slope);
  }
  if (!std::isfinite(top)) return std::nullopt;

  auto load = [&](double x) {
    double sum = 0.0;
    for (std::size_t i = 0; i < targets.size(); ++i) {
      if (!std::isfinite(targets[i])) continue;
      sum += std::min(1.0, first_moment_tail(model, static_cast<int>(i + 1), targets[i] - x));
    }
    return sum;
  };
  if (load(top) <= budget) return top;
  double step_size = 1.0;
  while (load(top - step_size) > budget) {
    step_size *= 2.0;
    if (step_size > 1e6) return std::nullopt;
  }
  double good = top - step_size;
  double bad = step_size == 1.0 ? top : top - 0.5 * step_size;
  for (;;) {
    const double mid = 0.5 * (good + bad);
    if (mid <= good || mid >= bad) break;
    (load(mid) <= budget ? good : bad) = mid;
  }
  // Every x < bad satisfies the budget, so dropping strictly below bad is sound.
  return bad;
}

std::optional<double> prune_level_for(const ClusterModel& model, [[maybe_unused]] double lambda,
                                      int gen_index, int n_gens, double a_obs, double eps_prune,
                                      std::size_t current_count) {
  const int m = n_gens - gen_index;
  if (m <= 0) return a_obs;
  if (!(eps_prune > 0.0) || current_count == 0) return std::nullopt;
  const std::vector<double> targets(static_cast<std::size_t>(m), a_obs);
  return prune_level_for_targets(model, targets,
                                 eps_prune / n_gens / static_cast<double>(current_count));
}

namespace {

// Summed first-moment mass of a particle against future targets, read off a
// 0.05-wide grid at the cell top (an upper bound, masses grow with x).
class MassGrid {
 public:
  MassGrid(const ClusterModel& model, std::span<const double> targets, double lowest)
      : model_(model), targets_(targets), base_(std::floor(lowest / kStep)) {}

  double operator()(double x) {
    const double cell = std::floor(x / kStep) - base_;
    if (cell < 0.0) return exact(x);
    const auto i = static_cast<std::size_t>(cell);
    if (i >= grid_.size()) grid_.resize(i + 1, std::numeric_limits<double>::quiet_NaN());
    if (std::isnan(grid_[i])) grid_[i] = exact((base_ + static_cast<double>(i) + 1.0) * kStep);
    return grid_[i];
  }

 private:
  static constexpr double kStep = 0.05;

  double exact(double x) const {
    double sum = 0.0;
    for (std::size_t k = 0; k < targets_.size() && sum < 1.0; ++k) {
      if (!std::isfinite(targets_[k])) continue;
      sum += std::min(1.0, expected_count_above(model_, static_cast<int>(k + 1), targets_[k] - x));
    }
    return std::min(1.0, sum);
  }

  const ClusterModel& model_;
  std::span<const double> targets_;
  double base_;
  std::vector<double> grid_;
};

}  // namespace

GreedyCut greedy_prune_level(const ClusterModel& model, std::span<const double> targets,
                             std::vector<double> positions, double budget) {
  GreedyCut out;
  if (positions.empty() || !(budget > 0.0)) return out;
  std::sort(positions.begin(), positions.end());
  MassGrid mass(model, targets, positions.front());
  while (out.dropped < positions.size()) {
    const double m = mass(positions[out.dropped]);
    if (out.spent + m > budget) break;
    out.spent += m;
    ++out.dropped;
  }
  if (out.dropped == positions.size()) {
    out.level = std::nextafter(positions.back(), kInfinity);
  } else if (out.dropped > 0) {
    out.level = positions[out.dropped];
  }
  return out;
}

namespace {

// Forward-branches sibling subtrees of one snapshot candidate to generation n,
// collecting descendants at or above `level`.  Pools larger than kChunk are
// split and explored highest first, so a candidate that is bound to be
// rejected (too many points above the level) is abandoned early.
class FamilyExplorer {
 public:
  static constexpr std::size_t kChunk = 4096;

  FamilyExplorer(const ClusterModel& model, int n, double level, double accept_u, RandomStream& rng,
                 std::size_t cap)
      : model_(model), n_(n), level_(level), u_(accept_u), rng_(rng), cap_(cap) {}

  // False once the candidate is known to be rejected.
  bool explore(std::vector<double> pool, int gen, double budget) {
    std::vector<double> next;
    for (; gen < n_; ++gen) {
      if (pool.size() > kChunk) return explore_split(std::move(pool), gen, budget);
      std::size_t drop = 0;
      if (budget > 0.0 && !pool.empty()) {
        // Drop the lowest particles while their summed first-moment tails
        // fit this generation's share; unspent budget rolls forward.
        const int m = n_ - gen;
        std::sort(pool.begin(), pool.end());
        const double allowed = budget / m;
        double spent = 0.0;
        while (drop < pool.size()) {
          const double mass = std::min(1.0, expected_count_above(model_, m, level_ - pool[drop]));
          if (spent + mass > allowed) break;
          spent += mass;
          ++drop;
        }
        budget -= spent;
      }
      next.clear();
      for (std::size_t i = drop; i < pool.size(); ++i) {
        buffer_.clear();
        sample_cluster_into(model_, rng_, buffer_);
        for (double d : buffer_) next.push_back(pool[i] + d);
      }
      check_cap(next.size(), cap_, "sample_snapshot");
      pool.swap(next);
    }
    for (double x : pool) {
      if (x < level_) continue;
      found_.push_back(x);
      if (u_ * static_cast<double>(found_.size() + 1) >= 1.0) return false;
    }
    return true;
  }

  const std::vector<double>& found() const { return found_; }

 private:
  bool explore_split(std::vector<double> pool, int gen, double budget) {
    std::sort(pool.begin(), pool.end(), std::greater<>());
    const double total = static_cast<double>(pool.size());
    for (std::size_t lo = 0; lo < pool.size(); lo += kChunk) {
      const std::size_t hi = std::min(pool.size(), lo + kChunk);
      std::vector<double> chunk(pool.begin() + static_cast<std::ptrdiff_t>(lo),
                                pool.begin() + static_cast<std::ptrdiff_t>(hi));
      if (!explore(std::move(chunk), gen, budget * static_cast<double>(hi - lo) / total)) return false;
    }
    return true;
  }

  const ClusterModel& model_;
  int n_;
  double level_;
  double u_;
  RandomStream& rng_;
  std::size_t cap_;
  std::vector<double> found_;
  std::vector<double> buffer_;
};

}  // namespace

ParticleGeneration sample_snapshot(const ClusterModel& model, double lambda, double c_mult, int n,
                                   double level, double eps_prune, RandomStream& rng,
                                   std::size_t cap) {
  if (!(lambda > 0.0)) throw PreconditionError("sample_snapshot needs lambda > 0");
  if (!(std::abs(phi(model, lambda)) <= kIsRootTolerance)) {
    throw PreconditionError("sample_snapshot needs lambda to be a root of phi");
  }
  const double mean = c_mult * std::exp(-lambda * level) / lambda;
  if (!(mean <= static_cast<double>(cap))) throw ResourceCapError("snapshot candidate count exceeds cap");
  const std::int64_t candidates = poisson_draw(mean, rng);
  std::exponential_distribution<double> overshoot(lambda);

  ParticleGeneration out;
  out.gen_index = n;
  std::vector<double> spine_pos(static_cast<std::size_t>(n) + 1);
  std::vector<std::vector<double>> siblings(static_cast<std::size_t>(n) + 1);
  // Each spine generation's siblings get an equal share of the candidate's budget.
  const double per_batch =
      candidates > 0 && n > 0 ? eps_prune / static_cast<double>(candidates) / n : 0.0;

  for (std::int64_t j = 0; j < candidates; ++j) {
    const double y = level + overshoot(rng);
    // Spine increments and sibling displacements relative to the parent.
    double sum = 0.0;
    for (int k = 1; k <= n; ++k) {
      SpineCluster sc = sample_spine_cluster(model, lambda, rng);
      siblings[k] = std::move(sc.siblings);
      sum += sc.spine;
      spine_pos[k] = sum;
    }
    const double root = y - sum;
    // Keep with probability 1/N, N counting the endpoint: reject as soon as
    // u * N >= 1 is certain.  Late siblings sit closest to the level.
    FamilyExplorer family(model, n, level, rng.uniform(), rng, cap);
    bool accepted = true;
    for (int g = n; g >= 1 && accepted; --g) {
      std::vector<double> batch;
      batch.reserve(siblings[g].size());
      for (double z : siblings[g]) batch.push_back(root + spine_pos[g - 1] + z);
      accepted = family.explore(std::move(batch), g, per_batch);
    }
    if (!accepted) continue;

    const auto id = static_cast<std::uint32_t>(out.root_positions.size());
    out.root_positions.push_back(root);
    out.positions.push_back(y);
    out.root_ids.push_back(id);
    for (double x : family.found()) {
      out.positions.push_back(x);
      out.root_ids.push_back(id);
    }
    check_cap(out.positions.size(), cap, "sample_snapshot");
  }
  return out;
}

Engine resolve_engine(const ScenarioConfig& normalized) {
  if (normalized.engine != Engine::Auto) return normalized.engine;
  try {
    return classify(normalized.model, normalized.lambda).verdict == Verdict::Persistent
               ? Engine::Snapshot
               : Engine::Forward;
  } catch (const PreconditionError&) {
    return Engine::Forward;
  }
}

namespace {

// Forward run from the seed window; seeds below the generation-0 prune level
// are never materialized (the Poisson process restricted to the kept part is
// drawn directly, with the same law as seeding then pruning).
std::vector<GenerationSummary> run_forward(const ScenarioConfig& c, Interval window,
                                           RandomStream& rng) {
  const auto targets = target_levels(c);
  const int n = c.n_gens;
  const double log_mass = log_seed_mass(c.lambda, c.c_mult, window.lo, window.hi);
  const std::int64_t total = poisson_draw(std::exp(log_mass), rng);

  double lower = window.lo;
  if (c.eps_prune > 0.0 && total > 0) {
    const auto cut = prune_level_for_targets(
        c.model, std::span<const double>(targets).subspan(1),
        c.eps_prune / n / static_cast<double>(total));
    if (cut) lower = std::clamp(*cut, window.lo, window.hi);
  }
  const double keep_prob =
      lower > window.lo ? std::exp(log_seed_mass(c.lambda, c.c_mult, lower, window.hi) - log_mass) : 1.0;
  const auto kept = static_cast<std::size_t>(
      keep_prob >= 1.0 ? total : std::binomial_distribution<std::int64_t>(total, keep_prob)(rng));
  check_cap(kept, c.population_cap, "seeding");

  ParticleGeneration gen;
  gen.positions.reserve(kept);
  for (std::size_t i = 0; i < kept; ++i) {
    gen.positions.push_back(exp_profile_draw(c.lambda, lower, window.hi, rng.uniform()));
  }
  gen.root_positions = gen.positions;
  gen.root_ids.resize(kept);
  for (std::size_t i = 0; i < kept; ++i) gen.root_ids[i] = static_cast<std::uint32_t>(i);

  std::vector<GenerationSummary> out;
  out.reserve(static_cast<std::size_t>(n) + 1);
  // Generation 0 is summarized on the kept seeds: everything below `lower`
  // lies below obs.lo as well.
  out.push_back(summarize(gen, c.obs, c.bins));
  // Generation 0 was thinned above; later generations share what is left of
  // the run's budget, unspent mass rolling forward.
  double budget = c.eps_prune * (n - 1) / n;
  for (int j = 0; j < n; ++j) {
    const auto future = std::span<const double>(targets).subspan(j + 1);
    std::optional<double> cut;
    if (j > 0 && budget > 0.0 && gen.size() > 0) {
      const auto greedy = greedy_prune_level(c.model, future, gen.positions, budget / (n - j));
      cut = greedy.level;
      budget -= greedy.spent;
    }
    double band_mass = 0.0;
    if (c.max_band && gen.size() > 0) {
      const double top = *std::max_element(gen.positions.begin(), gen.positions.end());
      const double band = top - *c.max_band;
      if (!cut || band > *cut) {
        const double floor = cut.value_or(-kInfinity);
        MassGrid mass(c.model, future, *std::min_element(gen.positions.begin(), gen.positions.end()));
        for (double x : gen.positions) {
          if (x >= floor && x < band) band_mass += mass(x);
        }
        cut = band;
      }
    }
    gen = step(gen, c.model, rng, cut, c.population_cap);
    out.push_back(summarize(gen, c.obs, c.bins));
    out.back().band_mass = band_mass;
  }
  return out;
}

Interval window_for_config(const ScenarioConfig& c) {
  if (c.seed_window) return *c.seed_window;
  return window_for(c.model, c.lambda, c.c_mult, target_levels(c), c.obs.hi, c.eps_trunc);
}

std::vector<GenerationSummary> run_normalized(const ScenarioConfig& c, int replicate) {
  RandomStream rng(c.rng_seed, static_cast<std::uint64_t>(replicate));
  if (resolve_engine(c) == Engine::Snapshot) {
    std::vector<GenerationSummary> out;
    for (int j = 0; j <= c.n_gens; ++j) {
      RandomStream sub = rng.split(static_cast<std::uint64_t>(j));
      const auto gen =
          sample_snapshot(c.model, c.lambda, c.c_mult, j, c.obs.lo, c.eps_prune, sub, c.population_cap);
      out.push_back(summarize(gen, c.obs, c.bins));
    }
    return out;
  }
  return run_forward(c, window_for_config(c), rng);
}

void unmirror(std::vector<GenerationSummary>& rows, bool mirrored_run) {
  if (!mirrored_run) return;
  // A mirrored run observes -X; flip back so rows refer to the caller's axis.
  // max_pos and leader_root_pos then describe the leftmost particle.
  for (auto& r : rows) {
    std::reverse(r.histogram.begin(), r.histogram.end());
    if (r.max_pos) r.max_pos = -*r.max_pos;
    if (r.leader_root_pos) r.leader_root_pos = -*r.leader_root_pos;
  }
}

ScenarioConfig prepared(const ScenarioConfig& config, bool& mirrored_run) {
  validate(config);
  auto norm = normalize(config);
  mirrored_run = norm.mirrored;
  auto& c = norm.config;
  if (resolve_engine(c) == Engine::Forward && !c.seed_window) c.seed_window = window_for_config(c);
  return c;
}

}  // namespace

std::vector<GenerationSummary> run_replicate(const ScenarioConfig& config, int replicate) {
  bool flip = false;
  const auto c = prepared(config, flip);
  auto rows = run_normalized(c, replicate);
  unmirror(rows, flip);
  return rows;
}

std::vector<std::vector<GenerationSummary>> run_replicates_serial(const ScenarioConfig& config) {
  bool flip = false;
  const auto c = prepared(config, flip);
  std::vector<std::vector<GenerationSummary>> out(static_cast<std::size_t>(c.replicates));
  for (int r = 0; r < c.replicates; ++r) {
    out[r] = run_normalized(c, r);
    unmirror(out[r], flip);
  }
  return out;
}

std::vector<std::vector<GenerationSummary>> run_replicates(const ScenarioConfig& config) {
  bool flip = false;
  const auto c = prepared(config, flip);
  std::vector<std::vector<GenerationSummary>> out(static_cast<std::size_t>(c.replicates));
  std::exception_ptr failure;
#pragma omp parallel for schedule(dynamic, 1)
  for (int r = 0; r < c.replicates; ++r) {
    try {
      out[r] = run_normalized(c, r);
      unmirror(out[r], flip);
    } catch (...) {
#pragma omp critical(brw_run_replicates)
      if (!failure) failure = std::current_exception();
    }
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

std::vector<double> brw_generation(const ClusterModel& model, int n, RandomStream& rng,
                                   std::size_t cap) {
  ParticleGeneration gen;
  gen.positions = {0.0};
  gen.root_ids = {0};
  gen.root_positions = {0.0};
  for (int k = 0; k < n; ++k) gen = step(gen, model, rng, std::nullopt, cap);
  return gen.positions;
}

BrwMax brw_max(const ClusterModel& model, int n, RandomStream& rng, double delta, std::size_t cap) {
  BrwMax out;
  out.max = -kInfinity;
  if (n <= 0) {
    out.max = 0.0;
    return out;
  }
  const RandomStream base = rng.split(rng());
  struct Node {
    double x;
    int depth;
    std::uint64_t label;
  };
  std::vector<Node> stack{{0.0, 0, 1}};
  std::vector<double> buffer;
  std::vector<std::pair<double, std::uint64_t>> kids;
  while (!stack.empty()) {
    const Node node = stack.back();
    stack.pop_back();
    if (node.depth == n) {
      out.max = std::max(out.max, node.x);
      continue;
    }
    if (out.max > -kInfinity) {
      const double bound = expected_count_above(model, n - node.depth, out.max - node.x);
      if (bound <= delta) {
        out.pruned_mass += bound;
        continue;
      }
    }
    if (++out.expanded > cap) throw ResourceCapError("brw_max expanded more nodes than the cap");
    RandomStream local = base.split(node.label);
    buffer.clear();
    sample_cluster_into(model, local, buffer);
    kids.clear();
    for (std::size_t i = 0; i < buffer.size(); ++i) {
      kids.emplace_back(node.x + buffer[i], child_label(node.label, i));
    }
    // Highest child on top of the stack: good maxima early tighten the bound.
    std::sort(kids.begin(), kids.end());
    for (const auto& [x, label] : kids) stack.push_back({x, node.depth + 1, label});
  }
  return out;
}

TiltedRatio tilted_max_ratio(const ClusterModel& model, double t, int n, RandomStream& rng,
                             double delta, std::size_t cap) {
  TiltedRatio out;
  if (n <= 0) {
    out.ratio = 1.0;
    return out;
  }
  const RandomStream base = rng.split(rng());
  RandomStream spine_rng = base.split(0);
  const double phi_t = phi(model, t);
  const double log_delta = std::log(delta);

  std::vector<double> spine(static_cast<std::size_t>(n) + 1, 0.0);
  std::vector<std::vector<double>> sibs(static_cast<std::size_t>(n) + 1);
  for (int k = 1; k <= n; ++k) {
    SpineCluster sc = sample_spine_cluster(model, t, spine_rng);
    spine[k] = spine[k - 1] + sc.spine;
    sibs[k] = std::move(sc.siblings);
  }
  double best = spine[n];
  double log_w = t * spine[n];
  double pruned_weight = 0.0;  // relative to e^{t X_spine}
  std::size_t expanded = 0;

  struct Node {
    double x;
    int depth;
    std::uint64_t label;
  };
  std::vector<Node> stack;
  std::vector<double> buffer;
  for (int k = n; k >= 1; --k) {
    for (std::size_t i = 0; i < sibs[k].size(); ++i) {
      stack.push_back({spine[k - 1] + sibs[k][i], k, child_label(static_cast<std::uint64_t>(k), i)});
      while (!stack.empty()) {
        const Node node = stack.back();
        stack.pop_back();
        if (node.depth == n) {
          log_w = log_add(log_w, t * node.x);
          best = std::max(best, node.x);
          continue;
        }
        const int m = n - node.depth;
        const double log_mass = t * node.x + m * phi_t;
        if (log_mass - log_w <= log_delta) {
          const double tail = expected_count_above(model, m, best - node.x);
          if (tail <= delta) {
            pruned_weight += std::exp(log_mass - t * spine[n]);
            out.pruned_max_prob += tail;
            continue;
          }
        }
        if (++expanded > cap) throw ResourceCapError("tilted_max_ratio expanded more nodes than the cap");
        RandomStream local = base.split(node.label);
        buffer.clear();
        sample_cluster_into(model, local, buffer);
        for (std::size_t j = 0; j < buffer.size(); ++j) {
          stack.push_back({node.x + buffer[j], node.depth + 1, child_label(node.label, j)});
        }
      }
    }
  }
  out.max = best;
  out.log_weight = log_w;
  out.ratio = std::exp(t * best - log_w);
  out.pruned_rel_mass = pruned_weight * std::exp(t * spine[n] - log_w);
  return out;
}

}  // namespace brw
