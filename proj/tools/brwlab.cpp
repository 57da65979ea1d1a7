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

#include <iostream>

#include "CLI11.hpp"
#include "brw/cli.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Branching random walk laboratory"};
  app.require_subcommand(1);
  app.set_version_flag("--version", brw::kVersion);

  brw::CliOptions options;
  std::uint64_t seed = 0;
  int jobs = 0;
  auto add_common = [&](CLI::App* sub) {
    sub->add_option("--config", options.config_path, "scenario file")->check(CLI::ExistingFile);
    sub->add_option("--out", options.out_dir, "output directory");
    sub->add_option("--jobs", jobs, "worker threads (default: all)")->check(CLI::PositiveNumber);
    sub->add_option("--seed-override", seed, "replace scenario.seed");
  };
  for (const char* name : {"classify", "simulate", "backward", "boundary"}) {
    add_common(app.add_subcommand(name));
  }
  auto* merge = app.add_subcommand("report-merge", "merge output directories");
  add_common(merge);
  merge->add_option("inputs", options.inputs, "input directories")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : brw::kExitConfig;
  }
  options.command = app.get_subcommands().front()->get_name();
  const auto* sub = app.get_subcommands().front();
  if (sub->count("--jobs")) options.jobs = jobs;
  if (sub->count("--seed-override")) options.seed_override = seed;
  return brw::run_command(options, std::cout, std::cerr);
}
