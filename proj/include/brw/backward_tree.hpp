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
#include <string>
#include <vector>

#include "brw/cluster_models.hpp"
#include "brw/rng.hpp"
#include "brw/simulator.hpp"

namespace brw {

// Step law of the ancestor walk: J reweighted by e^{lambda u}.
struct TiltedStepLaw {
  DisplacementLaw base;
  double lambda = 0.0;
  DisplacementLaw tilted;

  double mean() const;
  double sample(RandomStream& rng) const;
};

// Requires an i.i.d. cluster and |phi(lambda)| <= 1e-8.
TiltedStepLaw tilted_step(const ClusterModel& model, double lambda);

// Reduced Palm cluster: size-biased count minus one, untilted displacements.
ClusterSample palm_siblings(const ClusterModel& model, RandomStream& rng);

struct BackwardTreeSample {
  int n_max = 0;
  std::vector<double> s;                 // s[n-1] = S_n
  std::vector<int> k;                    // sibling counts k_n
  std::vector<std::int64_t> rho_count;   // rho_n([a, inf))
  std::vector<int> hit;                  // 1{rho_n([a, inf)) > 0}
  std::optional<int> truncated_at;       // first level that hit the population cap
};

struct BackwardOptions {
  double eps_prune = 1e-3;
  std::size_t level_cap = 2'000'000;
};

BackwardTreeSample sample_backward_tree(const ClusterModel& model, double lambda, int n_max,
                                        double a, RandomStream& rng,
                                        const BackwardOptions& options = {});

enum class StabilityVerdict { StableConsistent, UnstableConsistent, Inconclusive };
std::string to_string(StabilityVerdict v);

struct StabilityReport {
  int n_max = 0;
  int replicates = 0;
  double a = 0.0;
  std::vector<std::int64_t> hits;      // per level, truncated samples included
  std::vector<double> p_hat;
  std::vector<double> ci_lo;           // Wilson 99%
  std::vector<double> ci_hi;
  std::vector<double> partial_sums;
  int truncated = 0;
  int fit_points = 0;                  // levels used by the decay fit
  double slope = 0.0;                  // of log p_hat against n
  double slope_se = 0.0;
  double ratio = 1.0;                  // e^slope
  double ratio_upper = 1.0;            // one-sided 99% bound
  StabilityVerdict verdict = StabilityVerdict::Inconclusive;
  std::vector<BackwardTreeSample> samples;
};

// Samples run in parallel with stream rng.split(i) for sample i.
StabilityReport stability_diagnostic(const ClusterModel& model, double lambda, int n_max, double a,
                                     int replicates, const RandomStream& rng,
                                     const BackwardOptions& options = {});
StabilityReport stability_diagnostic_serial(const ClusterModel& model, double lambda, int n_max,
                                            double a, int replicates, const RandomStream& rng,
                                            const BackwardOptions& options = {});

// Verdict logic on precomputed per-level hit counts.
StabilityReport summarize_stability(std::vector<BackwardTreeSample> samples, int n_max, double a);

}  // namespace brw
