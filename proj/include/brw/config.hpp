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

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "brw/simulator.hpp"

namespace brw {

/*
 * Scenario files: `key = value` lines under [model], [scenario] and [test]
 * headers; '#' and ';' start comments.  Unknown sections or keys are errors.
 *
 *   [model]   kind = iid | bbm
 *             count = fixed | poisson | geometric,  count_param = <number>
 *             disp = gaussian | two_point | atoms
 *             disp_params = mean,variance | a,b,p | v1:p1,v2:p2,...
 *             bbm_drift = c            (each line drifts at -c)
 *   [scenario] lambda = <number> | min_root | max_root
 *             c_mult, n_gens, obs_lo, obs_hi, eps_trunc, eps_prune, seed,
 *             replicates, bins, engine (auto|forward|snapshot), seed_lo,
 *             seed_hi, track_margin, max_band, population_cap
 *   [test]    n_max, level, level_cap, n_list, reps, t, estimator, delta,
 *             negative_control, n_min, u1, u2, burn_in
 */

struct TestConfig {
  int n_max = 10;
  double level = 0.0;
  std::size_t level_cap = 2'000'000;
  std::vector<int> n_list = {5, 10, 15, 20, 25};
  int reps = 1000;
  std::optional<double> t;
  std::string estimator = "auto";
  double delta = 1e-10;
  bool negative_control = false;
  double n_min = 10.0;
  double u1 = 0.0;
  double u2 = 0.0;
  int burn_in = 20;

  friend bool operator==(const TestConfig&, const TestConfig&) = default;
};

struct RunConfig {
  ScenarioConfig scenario;
  std::string lambda_spec = "max_root";  // literal number or root keyword
  bool lambda_given = false;
  TestConfig test;

  friend bool operator==(const RunConfig&, const RunConfig&) = default;
};

// Throws ConfigError with a line number on malformed input.
RunConfig parse_config(const std::string& text);
RunConfig load_config(const std::string& path);

// Canonical text that parses back to an equal RunConfig.
std::string echo_config(const RunConfig& config);

// Resolves root keywords against the model; throws PreconditionError when the
// requested root does not exist.
double resolve_lambda(const RunConfig& config);

std::string format_double(double v);

}  // namespace brw
