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


// Serial reference vs OpenMP kernels on fixed workloads.  Each pair is timed
// best-of-N and checked for identical results.

#include <omp.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "brw/analytics.hpp"
#include "brw/backward_tree.hpp"
#include "brw/cli.hpp"
#include "brw/simulator.hpp"
#include "brw/statistics.hpp"

using namespace brw;

namespace {

double best_of(int rounds, const std::function<void()>& f) {
  double best = 1e300;
  for (int i = 0; i < rounds; ++i) {
    const auto t0 = std::chrono::steady_clock::now();
    f();
    best = std::min(best, std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count());
  }
  return best;
}

struct Kernel {
  std::string name;
  std::function<std::string()> serial;
  std::function<std::string()> parallel;
};

std::string digest(const CEstimate& e) {
  std::string s;
  for (double v : e.values) s += format_double(v) + ",";
  return s;
}

std::string digest(const StabilityReport& r) {
  std::string s;
  for (auto h : r.hits) s += std::to_string(h) + ",";
  return s;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"serial vs parallel kernel timings"};
  int rounds = 3;
  int scale = 1;
  std::vector<int> threads;
  app.add_option("--rounds", rounds, "timing rounds per kernel (best is kept)")->check(CLI::PositiveNumber);
  app.add_option("--scale", scale, "workload multiplier")->check(CLI::PositiveNumber);
  app.add_option("--threads", threads, "thread counts for the parallel runs (default: all)");
  CLI11_PARSE(app, argc, argv);
  if (threads.empty()) threads.push_back(omp_get_max_threads());

  ScenarioConfig snap;
  snap.model = UnitTimeBbm{1.5};
  snap.lambda = 2.0;
  snap.n_gens = 12;
  snap.obs = {-1.5, 2.0};
  snap.replicates = 32 * scale;
  snap.rng_seed = 1;

  ScenarioConfig fwd;
  fwd.model = IidCluster{FixedCount{2}, gaussian(-2.0, 1.0)};
  fwd.lambda = find_roots(fwd.model).front();
  fwd.n_gens = 8;
  fwd.obs = {-2.0, 1.0};
  fwd.eps_trunc = 1e-4;
  fwd.eps_prune = 1e-2;
  fwd.replicates = 64 * scale;
  fwd.engine = Engine::Forward;
  fwd.rng_seed = 2;

  const ClusterModel fg = IidCluster{FixedCount{2}, gaussian(-2.0, 1.0)};
  const double up = find_roots(fg).back();
  const double lo = find_roots(fg).front();
  const int c_reps = 20000 * scale;
  const int b_reps = 400 * scale;

  const std::vector<Kernel> kernels{
      {"run_replicates (snapshot)", [&] { return generations_csv(run_replicates_serial(snap), snap.bins); },
       [&] { return generations_csv(run_replicates(snap), snap.bins); }},
      {"run_replicates (forward)", [&] { return generations_csv(run_replicates_serial(fwd), fwd.bins); },
       [&] { return generations_csv(run_replicates(fwd), fwd.bins); }},
      {"estimate_c", [&] { return digest(estimate_c_serial(fg, up, 15, c_reps, RandomStream(3))); },
       [&] { return digest(estimate_c(fg, up, 15, c_reps, RandomStream(3))); }},
      {"stability_diagnostic", [&] { return digest(stability_diagnostic_serial(fg, lo, 10, 0.0, b_reps, RandomStream(4))); },
       [&] { return digest(stability_diagnostic(fg, lo, 10, 0.0, b_reps, RandomStream(4))); }},
  };

  std::printf("%-28s %8s %10s %10s %8s %s\n", "kernel", "threads", "serial_s", "parallel_s", "speedup", "match");
  for (const auto& k : kernels) {
    std::string ref;
    const double ts = best_of(rounds, [&] { ref = k.serial(); });
    for (int t : threads) {
      omp_set_num_threads(t);
      std::string got;
      const double tp = best_of(rounds, [&] { got = k.parallel(); });
      std::printf("%-28s %8d %10.4f %10.4f %8.2f %s\n", k.name.c_str(), t, ts, tp, ts / tp,
                  got == ref ? "yes" : "NO");
    }
  }
  return 0;
}
