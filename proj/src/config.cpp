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

#include "brw/config.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "brw/analytics.hpp"
#include "brw/errors.hpp"

namespace brw {

namespace {

template <class... Ts>
struct overloaded_echo : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded_echo(Ts...) -> overloaded_echo<Ts...>;

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string item;
  std::istringstream in(s);
  while (std::getline(in, item, sep)) out.push_back(trim(item));
  return out;
}

struct Entry {
  std::string value;
  int line = 0;
};

class Reader {
 public:
  explicit Reader(std::map<std::string, Entry> entries) : entries_(std::move(entries)) {}

  bool has(const std::string& key) const { return entries_.count(key) > 0; }

  const Entry& raw(const std::string& key) const {
    const auto it = entries_.find(key);
    if (it == entries_.end()) throw ConfigError("missing required key " + key);
    used_.insert(key);
    return it->second;
  }

  std::string text(const std::string& key) const { return raw(key).value; }

  double number(const std::string& key) const {
    const auto& e = raw(key);
    return to_double(e.value, key, e.line);
  }

  std::int64_t integer(const std::string& key) const {
    const auto& e = raw(key);
    std::int64_t v = 0;
    const auto* end = e.value.data() + e.value.size();
    const auto res = std::from_chars(e.value.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) {
      throw ConfigError("line " + std::to_string(e.line) + ": " + key + " expects an integer, got '" +
                        e.value + "'");
    }
    return v;
  }

  bool boolean(const std::string& key) const {
    const auto& e = raw(key);
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    throw ConfigError("line " + std::to_string(e.line) + ": " + key + " expects true or false");
  }

  static double to_double(const std::string& s, const std::string& key, int line) {
    double v = 0.0;
    const auto* end = s.data() + s.size();
    const auto res = std::from_chars(s.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end || !std::isfinite(v)) {
      throw ConfigError("line " + std::to_string(line) + ": " + key + " expects a number, got '" + s +
                        "'");
    }
    return v;
  }

  void reject_unused(const std::string& prefix, const std::string& why) const {
    for (const auto& [k, e] : entries_) {
      if (k.rfind(prefix, 0) == 0 && !used_.count(k)) {
        throw ConfigError("line " + std::to_string(e.line) + ": key " + k + " " + why);
      }
    }
  }

 private:
  std::map<std::string, Entry> entries_;
  mutable std::set<std::string> used_;
};

const std::set<std::string>& known_keys() {
  static const std::set<std::string> keys = {
      "model.kind",         "model.count",          "model.count_param",   "model.disp",
      "model.disp_params",  "model.bbm_drift",      "scenario.lambda",     "scenario.c_mult",
      "scenario.n_gens",    "scenario.obs_lo",      "scenario.obs_hi",     "scenario.eps_trunc",
      "scenario.eps_prune", "scenario.seed",        "scenario.replicates", "scenario.bins",
      "scenario.engine",    "scenario.seed_lo",     "scenario.seed_hi",    "scenario.track_margin",
      "scenario.max_band",  "scenario.population_cap",
      "test.n_max",         "test.level",           "test.level_cap",      "test.n_list",
      "test.reps",          "test.t",               "test.estimator",      "test.delta",
      "test.negative_control", "test.n_min",        "test.u1",             "test.u2",
      "test.burn_in"};
  return keys;
}

ClusterModel parse_model(const Reader& r) {
  const std::string kind = r.text("model.kind");
  if (kind == "bbm") {
    return UnitTimeBbm{r.number("model.bbm_drift")};
  }
  if (kind != "iid") throw ConfigError("model.kind must be iid or bbm, got '" + kind + "'");
  IidCluster c;
  const std::string count = r.text("model.count");
  if (count == "fixed") {
    const auto k = r.integer("model.count_param");
    if (k < 1 || k > 1'000'000) throw ConfigError("fixed count needs an integer k >= 1");
    c.count = FixedCount{static_cast<int>(k)};
  } else if (count == "poisson") {
    c.count = PoissonCount{r.number("model.count_param")};
  } else if (count == "geometric") {
    c.count = GeometricCount{r.number("model.count_param")};
  } else {
    throw ConfigError("model.count must be fixed, poisson or geometric");
  }
  const std::string disp = r.text("model.disp");
  const auto& params_entry = r.raw("model.disp_params");
  const auto params = split(params_entry.value, ',');
  auto num = [&](const std::string& s) {
    return Reader::to_double(s, "model.disp_params", params_entry.line);
  };
  if (disp == "gaussian") {
    if (params.size() != 2) throw ConfigError("gaussian disp_params are mean,variance");
    c.displacement = GaussianDisp{num(params[0]), num(params[1])};
  } else if (disp == "two_point") {
    if (params.size() != 3) throw ConfigError("two_point disp_params are a,b,p");
    c.displacement = two_point(num(params[0]), num(params[1]), num(params[2]));
  } else if (disp == "atoms") {
    std::vector<Atom> atoms;
    for (const auto& item : params) {
      const auto parts = split(item, ':');
      if (parts.size() != 2) throw ConfigError("atoms disp_params are value:prob pairs");
      atoms.push_back({num(parts[0]), num(parts[1])});
    }
    if (atoms.empty()) throw ConfigError("atoms need at least one value:prob pair");
    c.displacement = finite_atoms(std::move(atoms));
  } else {
    throw ConfigError("model.disp must be gaussian, two_point or atoms");
  }
  return c;
}

Engine parse_engine(const std::string& s) {
  if (s == "auto") return Engine::Auto;
  if (s == "forward") return Engine::Forward;
  if (s == "snapshot") return Engine::Snapshot;
  throw ConfigError("scenario.engine must be auto, forward or snapshot");
}

std::string engine_name(Engine e) {
  switch (e) {
    case Engine::Forward:
      return "forward";
    case Engine::Snapshot:
      return "snapshot";
    case Engine::Auto:
      break;
  }
  return "auto";
}

}  // namespace

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

RunConfig parse_config(const std::string& text) {
  std::map<std::string, Entry> entries;
  std::istringstream in(text);
  std::string line;
  std::string section;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find_first_of("#;");
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    if (line.front() == '[') {
      if (line.back() != ']') throw ConfigError("line " + std::to_string(lineno) + ": bad section header");
      section = trim(line.substr(1, line.size() - 2));
      if (section != "model" && section != "scenario" && section != "test") {
        throw ConfigError("line " + std::to_string(lineno) + ": unknown section [" + section + "]");
      }
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    if (section.empty()) throw ConfigError("line " + std::to_string(lineno) + ": key outside a section");
    const std::string key = section + "." + trim(line.substr(0, eq));
    if (!known_keys().count(key)) throw ConfigError("line " + std::to_string(lineno) + ": unknown key " + key);
    if (entries.count(key)) throw ConfigError("line " + std::to_string(lineno) + ": duplicate key " + key);
    entries[key] = {trim(line.substr(eq + 1)), lineno};
  }

  const Reader r(std::move(entries));
  RunConfig cfg;
  auto& s = cfg.scenario;
  s.model = parse_model(r);
  r.reject_unused("model.", "does not apply to model.kind = " + r.text("model.kind"));

  if (r.has("scenario.lambda")) {
    cfg.lambda_given = true;
    cfg.lambda_spec = r.text("scenario.lambda");
    if (cfg.lambda_spec != "min_root" && cfg.lambda_spec != "max_root") {
      s.lambda = r.number("scenario.lambda");
      cfg.lambda_spec = format_double(s.lambda);
    }
  }
  if (r.has("scenario.c_mult")) s.c_mult = r.number("scenario.c_mult");
  if (r.has("scenario.n_gens")) s.n_gens = static_cast<int>(r.integer("scenario.n_gens"));
  if (r.has("scenario.obs_lo")) s.obs.lo = r.number("scenario.obs_lo");
  if (r.has("scenario.obs_hi")) s.obs.hi = r.number("scenario.obs_hi");
  if (r.has("scenario.eps_trunc")) s.eps_trunc = r.number("scenario.eps_trunc");
  if (r.has("scenario.eps_prune")) s.eps_prune = r.number("scenario.eps_prune");
  if (r.has("scenario.seed")) {
    const auto& e = r.raw("scenario.seed");
    std::uint64_t v = 0;
    const auto* end = e.value.data() + e.value.size();
    const auto res = std::from_chars(e.value.data(), end, v);
    if (res.ec != std::errc() || res.ptr != end) throw ConfigError("scenario.seed expects an unsigned 64-bit integer");
    s.rng_seed = v;
  }
  if (r.has("scenario.replicates")) s.replicates = static_cast<int>(r.integer("scenario.replicates"));
  if (r.has("scenario.bins")) s.bins = static_cast<int>(r.integer("scenario.bins"));
  if (r.has("scenario.engine")) s.engine = parse_engine(r.text("scenario.engine"));
  if (r.has("scenario.seed_lo") != r.has("scenario.seed_hi")) {
    throw ConfigError("scenario.seed_lo and scenario.seed_hi must be given together");
  }
  if (r.has("scenario.seed_lo")) s.seed_window = Interval{r.number("scenario.seed_lo"), r.number("scenario.seed_hi")};
  if (r.has("scenario.track_margin")) s.track_margin = r.number("scenario.track_margin");
  if (r.has("scenario.max_band")) s.max_band = r.number("scenario.max_band");
  if (r.has("scenario.population_cap")) {
    const auto cap = r.integer("scenario.population_cap");
    if (cap < 1) throw ConfigError("scenario.population_cap must be positive");
    s.population_cap = static_cast<std::size_t>(cap);
  }

  auto& t = cfg.test;
  if (r.has("test.n_max")) t.n_max = static_cast<int>(r.integer("test.n_max"));
  if (r.has("test.level")) t.level = r.number("test.level");
  if (r.has("test.level_cap")) t.level_cap = static_cast<std::size_t>(std::max<std::int64_t>(1, r.integer("test.level_cap")));
  if (r.has("test.n_list")) {
    t.n_list.clear();
    const auto& e = r.raw("test.n_list");
    for (const auto& item : split(e.value, ',')) {
      int v = 0;
      const auto res = std::from_chars(item.data(), item.data() + item.size(), v);
      if (res.ec != std::errc() || res.ptr != item.data() + item.size() || v < 0) {
        throw ConfigError("line " + std::to_string(e.line) + ": test.n_list expects nonnegative integers");
      }
      t.n_list.push_back(v);
    }
  }
  if (r.has("test.reps")) t.reps = static_cast<int>(r.integer("test.reps"));
  if (r.has("test.t")) t.t = r.number("test.t");
  if (r.has("test.estimator")) {
    t.estimator = r.text("test.estimator");
    if (t.estimator != "auto" && t.estimator != "direct" && t.estimator != "size-biased") {
      throw ConfigError("test.estimator must be auto, direct or size-biased");
    }
  }
  if (r.has("test.delta")) t.delta = r.number("test.delta");
  if (r.has("test.negative_control")) t.negative_control = r.boolean("test.negative_control");
  if (r.has("test.n_min")) t.n_min = r.number("test.n_min");
  if (r.has("test.u1")) t.u1 = r.number("test.u1");
  if (r.has("test.u2")) t.u2 = r.number("test.u2");
  if (r.has("test.burn_in")) t.burn_in = static_cast<int>(r.integer("test.burn_in"));
  if (t.n_max < 1) throw ConfigError("test.n_max must be positive");
  if (t.reps < 1) throw ConfigError("test.reps must be positive");
  if (!(t.delta > 0.0 && t.delta < 1.0)) throw ConfigError("test.delta must lie in (0,1)");

  validate(s);
  return cfg;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string echo_config(const RunConfig& cfg) {
  std::ostringstream os;
  const auto& s = cfg.scenario;
  const auto f = format_double;
  os << "[model]\n";
  if (const auto* b = std::get_if<UnitTimeBbm>(&s.model)) {
    os << "kind = bbm\nbbm_drift = " << f(b->drift_c) << "\n";
  } else {
    const auto& c = std::get<IidCluster>(s.model);
    os << "kind = iid\n";
    std::visit(overloaded_echo{[&](const FixedCount& x) { os << "count = fixed\ncount_param = " << x.k << "\n"; },
                               [&](const PoissonCount& x) { os << "count = poisson\ncount_param = " << f(x.mean) << "\n"; },
                               [&](const GeometricCount& x) { os << "count = geometric\ncount_param = " << f(x.p) << "\n"; }},
               c.count);
    if (const auto* g = std::get_if<GaussianDisp>(&c.displacement)) {
      os << "disp = gaussian\ndisp_params = " << f(g->mean) << "," << f(g->variance) << "\n";
    } else {
      const auto& atoms = std::get<AtomicDisp>(c.displacement).atoms;
      os << "disp = atoms\ndisp_params = ";
      for (std::size_t i = 0; i < atoms.size(); ++i) {
        os << (i ? "," : "") << f(atoms[i].value) << ":" << f(atoms[i].prob);
      }
      os << "\n";
    }
  }
  os << "\n[scenario]\n";
  if (cfg.lambda_given) os << "lambda = " << cfg.lambda_spec << "\n";
  os << "c_mult = " << f(s.c_mult) << "\n"
     << "n_gens = " << s.n_gens << "\n"
     << "obs_lo = " << f(s.obs.lo) << "\n"
     << "obs_hi = " << f(s.obs.hi) << "\n"
     << "eps_trunc = " << f(s.eps_trunc) << "\n"
     << "eps_prune = " << f(s.eps_prune) << "\n"
     << "seed = " << s.rng_seed << "\n"
     << "replicates = " << s.replicates << "\n"
     << "bins = " << s.bins << "\n"
     << "engine = " << engine_name(s.engine) << "\n";
  if (s.seed_window) os << "seed_lo = " << f(s.seed_window->lo) << "\nseed_hi = " << f(s.seed_window->hi) << "\n";
  if (s.track_margin) os << "track_margin = " << f(*s.track_margin) << "\n";
  if (s.max_band) os << "max_band = " << f(*s.max_band) << "\n";
  os << "population_cap = " << s.population_cap << "\n";

  const auto& t = cfg.test;
  os << "\n[test]\n"
     << "n_max = " << t.n_max << "\n"
     << "level = " << f(t.level) << "\n"
     << "level_cap = " << t.level_cap << "\n"
     << "n_list = ";
  for (std::size_t i = 0; i < t.n_list.size(); ++i) os << (i ? "," : "") << t.n_list[i];
  os << "\nreps = " << t.reps << "\n";
  if (t.t) os << "t = " << f(*t.t) << "\n";
  os << "estimator = " << t.estimator << "\n"
     << "delta = " << f(t.delta) << "\n"
     << "negative_control = " << (t.negative_control ? "true" : "false") << "\n"
     << "n_min = " << f(t.n_min) << "\n"
     << "u1 = " << f(t.u1) << "\n"
     << "u2 = " << f(t.u2) << "\n"
     << "burn_in = " << t.burn_in << "\n";
  return os.str();
}

double resolve_lambda(const RunConfig& cfg) {
  if (!cfg.lambda_given) throw ConfigError("scenario.lambda is required for this command");
  if (cfg.lambda_spec != "min_root" && cfg.lambda_spec != "max_root") return cfg.scenario.lambda;
  const auto roots = find_roots(cfg.scenario.model);
  if (roots.empty()) throw PreconditionError("phi has no real root; no exponential equilibrium intensity");
  return cfg.lambda_spec == "min_root" ? roots.front() : roots.back();
}

}  // namespace brw
