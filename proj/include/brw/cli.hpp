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
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "brw/config.hpp"
#include "brw/simulator.hpp"

namespace brw {

inline constexpr const char* kVersion = "brwlab 1.0.0";

// Exit statuses.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitPrecondition = 3;
inline constexpr int kExitResourceCap = 4;

struct CliOptions {
  std::string command;
  std::string config_path;
  std::string out_dir;  // empty: current directory (classify writes no files)
  std::optional<int> jobs;
  std::optional<std::uint64_t> seed_override;
  std::vector<std::string> inputs;  // report-merge sources
};

// Runs one command and maps library errors onto exit statuses; diagnostics
// go to `err`, human-readable results to `out`.
int run_command(const CliOptions& options, std::ostream& out, std::ostream& err);

int cmd_classify(const RunConfig& config, const CliOptions& options, std::ostream& out);
int cmd_simulate(const RunConfig& config, const CliOptions& options, std::ostream& out);
int cmd_backward(const RunConfig& config, const CliOptions& options, std::ostream& out);
int cmd_boundary(const RunConfig& config, const CliOptions& options, std::ostream& out);
int cmd_report_merge(const CliOptions& options, std::ostream& out);

// CSV rendering of per-generation summaries (header included).
std::string generations_csv(const std::vector<std::vector<GenerationSummary>>& runs, int bins);

// Pulls the embedded config block back out of a report.txt.
std::string extract_config_echo(const std::string& report_text);

}  // namespace brw
