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

#include "brw/cli.hpp"

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>

#include "brw/analytics.hpp"
#include "brw/backward_tree.hpp"
#include "brw/errors.hpp"
#include "brw/statistics.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace brw {

namespace fs = std::filesystem;

namespace {

constexpr const char* kBeginConfig = "----- begin config -----";
constexpr const char* kEndConfig = "----- end config -----";

std::string fmt(double v) { return format_double(v); }

std::string opt(const std::optional<double>& v) { return v ? fmt(*v) : ""; }

// Report records are `[name]` blocks of `key = value` lines, each carrying
// the version and seed.
class Report {
 public:
  explicit Report(std::uint64_t seed) : seed_(seed) {}

  void record(const std::string& name, const std::vector<std::pair<std::string, std::string>>& kv) {
    os_ << "[" << name << "]\nversion = " << kVersion << "\nrng_seed = " << seed_ << "\n";
    for (const auto& [k, v] : kv) os_ << k << " = " << v << "\n";
    os_ << "\n";
  }

  void config(const RunConfig& cfg) {
    record("config", {});
    os_ << kBeginConfig << "\n" << echo_config(cfg) << kEndConfig << "\n\n";
  }

  std::string str() const { return os_.str(); }

 private:
  std::uint64_t seed_;
  std::ostringstream os_;
};

fs::path out_dir(const CliOptions& o) {
  fs::path dir = o.out_dir.empty() ? fs::path(".") : fs::path(o.out_dir);
  fs::create_directories(dir);
  return dir;
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ConfigError("cannot write " + path.string());
  f << text;
}

double elapsed_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

RunConfig with_lambda(RunConfig cfg) {
  cfg.scenario.lambda = resolve_lambda(cfg);
  return cfg;
}

}  // namespace

std::string generations_csv(const std::vector<std::vector<GenerationSummary>>& runs, int bins) {
  std::ostringstream os;
  os << "replicate,gen,count_in_obs,max_pos,leader_root_pos";
  for (int b = 0; b < bins; ++b) os << ",bin_" << b;
  os << "\n";
  for (std::size_t r = 0; r < runs.size(); ++r) {
    for (const auto& g : runs[r]) {
      os << r << "," << g.gen_index << "," << g.count_in_obs << "," << opt(g.max_pos) << ","
         << opt(g.leader_root_pos);
      for (auto h : g.histogram) os << "," << h;
      os << "\n";
    }
  }
  return os.str();
}

std::string extract_config_echo(const std::string& report_text) {
  const auto b = report_text.find(kBeginConfig);
  const auto e = report_text.find(kEndConfig);
  if (b == std::string::npos || e == std::string::npos || e < b) {
    throw ConfigError("report has no config block");
  }
  const auto start = report_text.find('\n', b) + 1;
  return report_text.substr(start, e - start);
}

int cmd_classify(const RunConfig& cfg, const CliOptions& o, std::ostream& out) {
  const auto& model = cfg.scenario.model;
  const auto p = profile(model);
  Report rep(cfg.scenario.rng_seed);
  std::vector<std::pair<std::string, std::string>> kv = {
      {"model", describe(model)},
      {"phi0", fmt(p.phi0)},
      {"criticality", to_string(p.criticality)},
      {"beta0", fmt(p.beta0)},
      {"root_count", std::to_string(p.roots.size())}};
  out << "model        " << describe(model) << "\n"
      << "phi(0)       " << fmt(p.phi0) << "\n"
      << "criticality  " << to_string(p.criticality) << "\n"
      << "beta0        " << fmt(p.beta0) << "\n";
  if (p.roots.empty()) {
    out << "roots        none: no exponential equilibrium intensity\n";
    kv.push_back({"note", "no exponential equilibrium intensity"});
  }
  for (std::size_t i = 0; i < p.roots.size(); ++i) {
    const double r = p.roots[i];
    const auto c = classify(model, r);
    const std::string tag = "root_" + std::to_string(i);
    out << "root         " << fmt(r) << "  phi'=" << fmt(phi_prime(model, r))
        << "  lambda*phi'=" << fmt(c.product) << "  " << to_string(c.verdict) << "\n";
    kv.push_back({tag, fmt(r)});
    kv.push_back({tag + "_phi_prime", fmt(phi_prime(model, r))});
    kv.push_back({tag + "_verdict", to_string(c.verdict)});
    if (c.verdict == Verdict::Inconclusive && p.criticality == Criticality::Supercritical) {
      kv.push_back({tag + "_note", "boundary case lambda*phi'(lambda)=0"});
    }
  }
  std::string kst;
  for (double r : p.k_st) kst += (kst.empty() ? "" : ",") + fmt(r);
  out << "K_st         " << (kst.empty() ? "{}" : kst) << "\n";
  kv.push_back({"k_st", kst});
  rep.config(cfg);
  rep.record("classification", kv);
  if (!o.out_dir.empty()) write_file(out_dir(o) / "report.txt", rep.str());
  return kExitOk;
}

int cmd_simulate(const RunConfig& raw, const CliOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = with_lambda(raw);
  const auto& s = cfg.scenario;
  if (!(std::abs(phi(s.model, s.lambda)) <= kIsRootTolerance)) {
    throw PreconditionError("scenario.lambda = " + fmt(s.lambda) + " is not a root of phi");
  }
  const auto runs = run_replicates(s);
  const auto dir = out_dir(o);
  write_file(dir / "generations.csv", generations_csv(runs, s.bins));

  Report rep(s.rng_seed);
  rep.config(cfg);
  std::optional<Classification> cls;
  try {
    cls = classify(s.model, s.lambda);
  } catch (const PreconditionError&) {
  }
  rep.record("classification",
             {{"lambda", fmt(s.lambda)},
              {"verdict", cls ? to_string(cls->verdict) : "unavailable"},
              {"product", cls ? fmt(cls->product) : ""},
              {"engine", resolve_engine(normalize(s).config) == Engine::Snapshot ? "snapshot" : "forward"}});

  {
    const auto norm = normalize(s).config;
    if (resolve_engine(norm) == Engine::Forward && norm.lambda > 0.0) {
      const auto targets = target_levels(norm);
      const std::span<const double> future = std::span<const double>(targets).subspan(1);
      std::vector<std::pair<std::string, std::string>> kv;
      Interval w;
      if (norm.seed_window) {
        w = *norm.seed_window;
        kv.push_back({"source", "explicit"});
      } else {
        w = window_for(norm.model, norm.lambda, norm.c_mult, future, norm.obs.hi, norm.eps_trunc);
        kv.push_back({"source", "certified"});
      }
      kv.push_back({"lo", fmt(w.lo)});
      kv.push_back({"hi", fmt(w.hi)});
      std::string bound = "n/a";
      try {
        bound = fmt(truncation_bound(norm.model, norm.lambda, norm.c_mult, w.lo, future));
      } catch (const PreconditionError&) {
      }
      kv.push_back({"truncation_bound_at_lo", bound});
      kv.push_back({"eps_trunc_half", fmt(norm.eps_trunc / 2.0)});
      kv.push_back({"mirrored", normalize(s).mirrored ? "true" : "false"});
      rep.record("seed_window", kv);
    }
  }

  const int R = static_cast<int>(runs.size());
  const int last = s.n_gens;
  if (s.max_band) {
    double total = 0.0, worst = 0.0;
    for (const auto& run : runs) {
      double sum = 0.0;
      for (const auto& g : run) sum += g.band_mass;
      total += sum;
      worst = std::max(worst, sum);
    }
    rep.record("band_cut", {{"max_band", fmt(*s.max_band)},
                            {"mean_mass_per_replicate", fmt(R > 0 ? total / R : 0.0)},
                            {"max_mass_per_replicate", fmt(worst)},
                            {"certified", "false"}});
  }
  // Intensity check on the final generation; only persistent scenarios keep
  // the seeding intensity.
  if (!cls || cls->verdict != Verdict::Persistent) {
    rep.record("intensity_check", {{"applicable", "false"}});
  } else {
    const double width = (s.obs.hi - s.obs.lo) / s.bins;
    int pass = 0;
    for (int b = 0; b < s.bins; ++b) {
      const double lo = s.obs.lo + b * width;
      const double expected = s.c_mult * (std::exp(-s.lambda * lo) - std::exp(-s.lambda * (lo + width))) / s.lambda;
      double m = 0.0, m2 = 0.0;
      for (const auto& run : runs) {
        const double v = static_cast<double>(run[last].histogram[b]);
        m += v;
        m2 += v * v;
      }
      m /= R;
      const double var = R > 1 ? std::max(0.0, (m2 - R * m * m) / (R - 1)) : expected;
      const double se = std::sqrt(std::max(var, expected) / R);
      if (std::abs(m - expected) <= 4.0 * se) ++pass;
    }
    const double frac = static_cast<double>(pass) / s.bins;
    rep.record("intensity_check", {{"gen", std::to_string(last)},
                                   {"bins_within_4se", std::to_string(pass) + "/" + std::to_string(s.bins)},
                                   {"fraction", fmt(frac)},
                                   {"pass", frac >= 0.95 ? "true" : "false"}});
    out << "intensity check at gen " << last << ": " << pass << "/" << s.bins << " bins within 4 SE\n";
  }
  // First generation at which every replicate has an empty observation window.
  int empty_from = -1;
  for (int g = 0; g <= last; ++g) {
    bool all = true;
    for (const auto& run : runs) all = all && run[g].count_in_obs == 0;
    if (all) {
      empty_from = g;
      break;
    }
  }
  rep.record("extinction", {{"first_gen_all_empty", empty_from >= 0 ? std::to_string(empty_from) : "none"}});

  auto series = [&](auto field) {
    std::vector<std::pair<double, double>> pts;
    for (int g = 0; g <= last; ++g) {
      double sum = 0.0;
      int k = 0;
      for (const auto& run : runs) {
        if (const auto v = field(run[g])) {
          sum += *v;
          ++k;
        }
      }
      if (k == R) pts.push_back({static_cast<double>(g), sum / k});
    }
    return pts;
  };
  auto fit_record = [&](const std::string& name, const std::vector<std::pair<double, double>>& pts) {
    try {
      const auto f = speed_fit(pts, cfg.test.n_min);
      rep.record(name, {{"slope", fmt(f.slope)},
                        {"intercept", fmt(f.intercept)},
                        {"stderr", fmt(f.stderr_)},
                        {"n_range", fmt(f.n_lo) + ".." + fmt(f.n_hi)}});
      out << name << ": slope " << fmt(f.slope) << " +- " << fmt(f.stderr_) << "\n";
    } catch (const PreconditionError& e) {
      rep.record(name, {{"skipped", e.what()}});
    }
  };
  fit_record("speed_fit_max_pos", series([](const GenerationSummary& g) { return g.max_pos; }));
  fit_record("speed_fit_leader_root_pos",
             series([](const GenerationSummary& g) { return g.leader_root_pos; }));

  if (s.lambda > 0.0) {
    std::vector<double> maxima;
    for (const auto& run : runs)
      if (run[last].max_pos) maxima.push_back(*run[last].max_pos);
    try {
      const auto g = fit_gumbel(maxima, s.lambda);
      rep.record("gumbel_fit", {{"gen", std::to_string(last)},
                                {"lambda", fmt(g.lambda)},
                                {"c_hat", fmt(g.c_hat)},
                                {"ks_d", fmt(g.goodness.d)},
                                {"ks_p", fmt(g.goodness.p)},
                                {"n", std::to_string(g.n)}});
    } catch (const PreconditionError& e) {
      rep.record("gumbel_fit", {{"skipped", e.what()}});
    }
  }
  std::int64_t total = 0;
  for (const auto& run : runs)
    for (const auto& g : run) total += g.count_in_obs;
  rep.record("run_meta", {{"replicates", std::to_string(R)},
                          {"particles_in_obs_total", std::to_string(total)},
                          {"wall_clock_s", fmt(elapsed_since(t0))}});
  write_file(dir / "report.txt", rep.str());
  out << "wrote " << (dir / "generations.csv").string() << " and " << (dir / "report.txt").string() << "\n";
  return kExitOk;
}

int cmd_backward(const RunConfig& raw, const CliOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const RunConfig cfg = with_lambda(raw);
  const auto& s = cfg.scenario;
  BackwardOptions bo;
  bo.eps_prune = s.eps_prune;
  bo.level_cap = cfg.test.level_cap;
  const auto r = stability_diagnostic(s.model, s.lambda, cfg.test.n_max, cfg.test.level,
                                      s.replicates, RandomStream(s.rng_seed, 0), bo);
  std::ostringstream csv;
  csv << "sample_id,n,S_n,k_n,rho_n_count,hit_n\n";
  for (std::size_t i = 0; i < r.samples.size(); ++i) {
    const auto& smp = r.samples[i];
    for (int n = 0; n < smp.n_max; ++n) {
      csv << i << "," << n + 1 << "," << fmt(smp.s[n]) << "," << smp.k[n] << "," << smp.rho_count[n]
          << "," << smp.hit[n] << "\n";
    }
  }
  const auto dir = out_dir(o);
  write_file(dir / "backward.csv", csv.str());

  Report rep(s.rng_seed);
  rep.config(cfg);
  std::string p_hat, partial;
  for (int n = 0; n < r.n_max; ++n) {
    p_hat += (n ? "," : "") + fmt(r.p_hat[n]);
    partial += (n ? "," : "") + fmt(r.partial_sums[n]);
  }
  std::string verdict_note;
  try {
    const auto c = classify(s.model, s.lambda);
    verdict_note = to_string(c.verdict);
  } catch (const PreconditionError&) {
    verdict_note = "not-a-root";
  }
  rep.record("backward_verdict", {{"verdict", to_string(r.verdict)},
                                  {"classify", verdict_note},
                                  {"level", fmt(r.a)},
                                  {"replicates", std::to_string(r.replicates)},
                                  {"truncated_samples", std::to_string(r.truncated)},
                                  {"fit_points", std::to_string(r.fit_points)},
                                  {"slope", fmt(r.slope)},
                                  {"slope_se", fmt(r.slope_se)},
                                  {"ratio", fmt(r.ratio)},
                                  {"ratio_upper_99", fmt(r.ratio_upper)},
                                  {"p_hat", p_hat},
                                  {"partial_sums", partial},
                                  {"wall_clock_s", fmt(elapsed_since(t0))}});
  write_file(dir / "report.txt", rep.str());
  out << "verdict=" << to_string(r.verdict) << " classify=" << verdict_note
      << " truncated=" << r.truncated << " slope=" << fmt(r.slope) << "\n";
  return kExitOk;
}

int cmd_boundary(const RunConfig& cfg, const CliOptions& o, std::ostream& out) {
  const auto t0 = std::chrono::steady_clock::now();
  const auto* bbm = std::get_if<UnitTimeBbm>(&cfg.scenario.model);
  if (!bbm) throw ConfigError("boundary needs model.kind = bbm");
  const double c = bbm->drift_c;
  const bool pinned = std::abs(c - std::sqrt(2.0)) <= 1e-9;
  if (!pinned && !cfg.test.negative_control) {
    throw ConfigError("boundary pins bbm_drift = sqrt(2); set test.negative_control = true to run other drifts");
  }
  double t = std::sqrt(2.0);
  if (cfg.test.t) {
    t = *cfg.test.t;
  } else if (!pinned) {
    const auto roots = find_roots(cfg.scenario.model);
    if (roots.empty()) throw PreconditionError("phi has no real root for this drift");
    t = roots.back();
  }
  CEstimateOptions eo;
  eo.delta = cfg.test.delta;
  eo.method = cfg.test.estimator == "direct"        ? CEstimator::Direct
              : cfg.test.estimator == "size-biased" ? CEstimator::SizeBiased
                                                    : CEstimator::Auto;
  const auto r = boundary_decay_test(c, t, cfg.test.n_list, cfg.test.reps,
                                     RandomStream(cfg.scenario.rng_seed, 0), eo);
  std::ostringstream csv;
  csv << "n,t,c_hat,ci_lo,ci_hi,trimmed,reps,estimator,pruned_mass\n";
  for (const auto& row : r.rows) {
    const auto& e = row.estimate;
    csv << row.n << "," << fmt(t) << "," << fmt(e.c_hat) << "," << fmt(e.ci.lo) << "," << fmt(e.ci.hi)
        << "," << fmt(e.trimmed) << "," << e.reps << "," << to_string(e.method) << ","
        << fmt(e.pruned_mass) << "\n";
  }
  const auto dir = out_dir(o);
  write_file(dir / "boundary.csv", csv.str());
  Report rep(cfg.scenario.rng_seed);
  rep.config(cfg);
  rep.record("boundary", {{"drift_c", fmt(c)},
                          {"t", fmt(t)},
                          {"negative_control", pinned ? "false" : "true"},
                          {"strictly_decreasing", r.strictly_decreasing ? "true" : "false"},
                          {"ends_disjoint", r.ends_disjoint ? "true" : "false"},
                          {"trend_z", fmt(r.trend_z)},
                          {"verdict", r.verdict},
                          {"wall_clock_s", fmt(elapsed_since(t0))}});
  write_file(dir / "report.txt", rep.str());
  for (const auto& row : r.rows) {
    out << "n=" << row.n << " c_hat=" << fmt(row.estimate.c_hat) << " ci=[" << fmt(row.estimate.ci.lo)
        << ", " << fmt(row.estimate.ci.hi) << "]\n";
  }
  out << "verdict=" << r.verdict << "\n";
  return kExitOk;
}

int cmd_report_merge(const CliOptions& o, std::ostream& out) {
  if (o.inputs.empty()) throw ConfigError("report-merge needs at least one input directory");
  const auto dir = out_dir(o);
  // Per CSV: header plus rows, with the leading id column renumbered so ids
  // stay unique across inputs.
  for (const std::string name : {"generations.csv", "backward.csv", "boundary.csv"}) {
    std::string header;
    std::ostringstream merged;
    long offset = 0;
    bool any = false;
    for (const auto& in : o.inputs) {
      std::ifstream f(fs::path(in) / name);
      if (!f) continue;
      std::string line;
      std::getline(f, line);
      if (any && line != header) throw ConfigError(name + ": header mismatch in " + in);
      if (!any) merged << line << "\n";
      header = line;
      any = true;
      long max_id = -1;
      const bool renumber = name != "boundary.csv";
      while (std::getline(f, line)) {
        if (line.empty()) continue;
        if (renumber) {
          const auto comma = line.find(',');
          const long id = std::stol(line.substr(0, comma));
          max_id = std::max(max_id, id);
          merged << id + offset << line.substr(comma) << "\n";
        } else {
          merged << line << "\n";
        }
      }
      offset += max_id + 1;
    }
    if (any) write_file(dir / name, merged.str());
  }
  std::ostringstream reports;
  for (const auto& in : o.inputs) {
    std::ifstream f(fs::path(in) / "report.txt");
    if (!f) continue;
    reports << "# source: " << in << "\n" << f.rdbuf() << "\n";
  }
  write_file(dir / "report.txt", reports.str());
  out << "merged " << o.inputs.size() << " inputs into " << dir.string() << "\n";
  return kExitOk;
}

int run_command(const CliOptions& o, std::ostream& out, std::ostream& err) {
  try {
#ifdef _OPENMP
    if (o.jobs) omp_set_num_threads(std::max(1, *o.jobs));
#endif
    if (o.command == "report-merge") return cmd_report_merge(o, out);
    if (o.config_path.empty()) throw ConfigError("--config is required for " + o.command);
    RunConfig cfg = load_config(o.config_path);
    if (o.seed_override) cfg.scenario.rng_seed = *o.seed_override;
    if (o.command == "classify") return cmd_classify(cfg, o, out);
    if (o.command == "simulate") return cmd_simulate(cfg, o, out);
    if (o.command == "backward") return cmd_backward(cfg, o, out);
    if (o.command == "boundary") return cmd_boundary(cfg, o, out);
    throw ConfigError("unknown command " + o.command);
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ResourceCapError& e) {
    err << "resource cap: " << e.what() << "\n";
    return kExitResourceCap;
  } catch (const PreconditionError& e) {
    err << "precondition: " << e.what() << "\n";
    return kExitPrecondition;
  } catch (const UnsupportedModelError& e) {
    err << "unsupported model: " << e.what() << "\n";
    return kExitPrecondition;
  } catch (const InfeasibleWindowError& e) {
    err << "infeasible window: " << e.what() << "\n";
    return kExitPrecondition;
  } catch (const fs::filesystem_error& e) {
    err << "io error: " << e.what() << "\n";
    return kExitConfig;
  }
}

}  // namespace brw
