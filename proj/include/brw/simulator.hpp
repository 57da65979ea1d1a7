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

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "brw/analytics.hpp"
#include "brw/cluster_models.hpp"
#include "brw/rng.hpp"

namespace brw {

inline constexpr std::size_t kDefaultPopulationCap = 100'000'000;
inline constexpr int kDefaultBins = 50;

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  friend bool operator==(const Interval&, const Interval&) = default;
};

enum class Engine {
  Forward,   // seed the whole window, branch generation by generation
  Snapshot,  // exact sample of pi_n on [obs.lo, inf) via size-biased clusters
  Auto,      // Snapshot for persistent scenarios, Forward otherwise
};

struct ScenarioConfig {
  ClusterModel model = UnitTimeBbm{};
  double lambda = 1.0;
  double c_mult = 1.0;
  int n_gens = 1;
  Interval obs{0.0, 1.0};
  std::optional<Interval> seed_window;  // certified by window_for when empty
  double eps_trunc = 1e-3;
  double eps_prune = 1e-3;  // 0 disables pruning
  std::uint64_t rng_seed = 1;
  int replicates = 1;
  int bins = kDefaultBins;
  Engine engine = Engine::Auto;
  // When set, the forward engine also keeps everything that can reach
  // beta0*k - track_margin at generation k, so max_pos stays exact after the
  // observation window empties.
  std::optional<double> track_margin;
  // Uncertified front cut for horizons where first-moment pruning cannot
  // keep the population finite: the forward engine also drops particles more
  // than max_band below the generation maximum.  The first-moment mass it
  // removes is reported in GenerationSummary::band_mass.
  std::optional<double> max_band;
  std::size_t population_cap = kDefaultPopulationCap;

  friend bool operator==(const ScenarioConfig&, const ScenarioConfig&) = default;
};

// Throws ConfigError on violated invariants.
void validate(const ScenarioConfig& config);

// Scenario with lambda > 0: negative lambda is handled by reflecting the
// displacements and the observation window.
struct NormalizedScenario {
  ScenarioConfig config;
  bool mirrored = false;
};
NormalizedScenario normalize(const ScenarioConfig& config);

// Flat structure-of-arrays storage for one generation.
struct ParticleGeneration {
  int gen_index = 0;
  std::vector<double> positions;
  std::vector<std::uint32_t> root_ids;
  std::vector<double> root_positions;

  std::size_t size() const { return positions.size(); }
};

struct GenerationSummary {
  int gen_index = 0;
  std::int64_t count_in_obs = 0;
  std::optional<double> max_pos;
  std::optional<double> leader_root_pos;
  std::vector<std::int64_t> histogram;
  // First-moment mass (against the pruning targets) removed by max_band
  // before this generation was formed; not part of the CSV.
  double band_mass = 0.0;

  friend bool operator==(const GenerationSummary&, const GenerationSummary&) = default;
};

GenerationSummary summarize(const ParticleGeneration& gen, Interval obs, int bins);

// Per-generation target levels l_0..l_n used for truncation and pruning:
// obs.lo everywhere, or min(obs.lo, beta0*k - margin) with max tracking.
std::vector<double> target_levels(const ScenarioConfig& normalized);

/*
 * Seed window [L, R] for a normalized scenario.  R makes the expected number
 * of seeds beyond it at most eps_trunc/2; L is the largest level (to 1e-3)
 * with truncation_bound(..., L, targets) <= eps_trunc/2.
 */
Interval window_for(const ClusterModel& model, double lambda, double c_mult, int n_gens,
                    Interval obs, double eps_trunc);
Interval window_for(const ClusterModel& model, double lambda, double c_mult,
                    std::span<const double> targets, double obs_hi, double eps_trunc);

// Poisson seeds with intensity c_mult e^{-lambda u} on `window` (uniform when
// lambda == 0).  Throws ResourceCapError if the expected count exceeds `cap`.
ParticleGeneration seed_initial(Interval window, double lambda, double c_mult, RandomStream& rng,
                                std::size_t cap = kDefaultPopulationCap);

// Replaces every particle by a cluster; particles strictly below
// `prune_level` are dropped first.
ParticleGeneration step(const ParticleGeneration& gen, const ClusterModel& model,
                        RandomStream& rng, std::optional<double> prune_level,
                        std::size_t cap = kDefaultPopulationCap);

/*
 * Largest x such that current_count * sum_{k=1..m} min(1, e^{-k I((l_k - x)/k)})
 * <= eps_prune / n_gens, where m = n_gens - gen_index and l_k = a_obs.
 * Returns a_obs when m == 0 and nullopt when no level is certifiable.
 */
std::optional<double> prune_level_for(const ClusterModel& model, double lambda, int gen_index,
                                      int n_gens, double a_obs, double eps_prune,
                                      std::size_t current_count);

// Same with explicit future targets: targets[k-1] is the level that matters
// k generations ahead (-infinity: nothing to protect at that lag).
std::optional<double> prune_level_for_targets(const ClusterModel& model,
                                              std::span<const double> targets, double budget);

// Greedy alternative: drops the lowest particles while their summed
// first-moment mass against `targets` stays within `budget`.  Masses are read
// off a 0.05-wide grid from above, so the sum is an upper bound.
struct GreedyCut {
  std::optional<double> level;  // drop particles strictly below
  std::size_t dropped = 0;
  double spent = 0.0;
};
GreedyCut greedy_prune_level(const ClusterModel& model, std::span<const double> targets,
                             std::vector<double> positions, double budget);

/*
 * Exact sample of pi_n restricted to [level, inf) for seeds c_mult e_lambda
 * (lambda a root of phi).  Clusters reaching the level are drawn size-biased
 * by their number of points above it (spine of the lambda-tilted walk ending
 * at an exponential height above the level), then kept with probability 1/N.
 */
ParticleGeneration sample_snapshot(const ClusterModel& model, double lambda, double c_mult,
                                   int n, double level, double eps_prune, RandomStream& rng,
                                   std::size_t cap = kDefaultPopulationCap);

// Engine actually used for a (normalized) scenario.
Engine resolve_engine(const ScenarioConfig& normalized);

// Per-generation summaries for one replicate; deterministic in
// (rng_seed, replicate).
std::vector<GenerationSummary> run_replicate(const ScenarioConfig& config, int replicate);

// All replicates: OpenMP over replicates, or the serial reference loop.
std::vector<std::vector<GenerationSummary>> run_replicates(const ScenarioConfig& config);
std::vector<std::vector<GenerationSummary>> run_replicates_serial(const ScenarioConfig& config);

// ---------------------------------------------------------------------------
// Single-ancestor branching random walk kernels
// ---------------------------------------------------------------------------

// Positions of generation n of a BRW started from one particle at 0.
std::vector<double> brw_generation(const ClusterModel& model, int n, RandomStream& rng,
                                   std::size_t cap = kDefaultPopulationCap);

// max chi_n (-infinity on extinction).  Branch-and-bound depth-first search
// with per-particle streams; subtrees whose first-moment bound of beating the
// running maximum is below `delta` are skipped.
struct BrwMax {
  double max = 0.0;
  double pruned_mass = 0.0;  // sum of the bounds of skipped subtrees
  std::size_t expanded = 0;
};
BrwMax brw_max(const ClusterModel& model, int n, RandomStream& rng, double delta = 1e-12,
               std::size_t cap = kDefaultPopulationCap);

/*
 * One draw of e^{t max chi_n} / sum_{v in chi_n} e^{t X_v} under the
 * exp(t)-tilted (size-biased) law; its mean is e^{-n phi(t)} E[e^{t max chi_n}].
 */
struct TiltedRatio {
  double ratio = 0.0;
  double max = 0.0;
  double log_weight = 0.0;        // log sum e^{t X_v} over kept particles
  double pruned_rel_mass = 0.0;   // pruned expected weight / kept weight
  double pruned_max_prob = 0.0;   // first-moment bound that a skipped subtree beats max
};
TiltedRatio tilted_max_ratio(const ClusterModel& model, double t, int n, RandomStream& rng,
                             double delta = 1e-10, std::size_t cap = kDefaultPopulationCap);

}  // namespace brw
