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

#include "brw/cluster_models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <sstream>

#include "brw/errors.hpp"

namespace brw {

namespace {

template <class... Ts>
struct overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
overloaded(Ts...) -> overloaded<Ts...>;

constexpr double kInf = std::numeric_limits<double>::infinity();

double log_sum_exp_atoms(const AtomicDisp& law, double t) {
  double top = -kInf;
  for (const auto& a : law.atoms) {
    if (a.prob > 0.0) top = std::max(top, std::log(a.prob) + t * a.value);
  }
  double acc = 0.0;
  for (const auto& a : law.atoms) {
    if (a.prob > 0.0) acc += std::exp(std::log(a.prob) + t * a.value - top);
  }
  return top + std::log(acc);
}

double log_mgf(const DisplacementLaw& law, double t) {
  return std::visit(
      overloaded{[t](const GaussianDisp& g) { return g.mean * t + 0.5 * g.variance * t * t; },
                 [t](const AtomicDisp& a) { return log_sum_exp_atoms(a, t); }},
      law);
}

double log_mgf_derivative(const DisplacementLaw& law, double t) {
  return std::visit(overloaded{[t](const GaussianDisp& g) { return g.mean + g.variance * t; },
                               [t](const AtomicDisp& a) {
                                 const double lse = log_sum_exp_atoms(a, t);
                                 double m = 0.0;
                                 for (const auto& atom : a.atoms) {
                                   if (atom.prob > 0.0) {
                                     m += atom.value *
                                          std::exp(std::log(atom.prob) + t * atom.value - lse);
                                   }
                                 }
                                 return m;
                               }},
                    law);
}

// Leaves of a unit-rate binary BBM with drift -c started at `origin` and run
// for `horizon` time units.  Event-driven: exponential clocks, no time grid.
void bbm_leaves(double drift_c, double origin, double horizon, RandomStream& rng,
                std::vector<double>& out) {
  std::exponential_distribution<double> clock(1.0);
  std::normal_distribution<double> gauss(0.0, 1.0);
  struct Line {
    double pos;
    double residual;
  };
  std::vector<Line> stack;
  stack.push_back({origin, horizon});
  while (!stack.empty()) {
    Line line = stack.back();
    stack.pop_back();
    const double tau = clock(rng);
    if (tau >= line.residual) {
      out.push_back(line.pos - drift_c * line.residual + std::sqrt(line.residual) * gauss(rng));
      continue;
    }
    const double at = line.pos - drift_c * tau + std::sqrt(tau) * gauss(rng);
    stack.push_back({at, line.residual - tau});
    stack.push_back({at, line.residual - tau});
  }
}

}  // namespace

double count_mean(const CountLaw& law) {
  return std::visit(overloaded{[](const FixedCount& f) { return static_cast<double>(f.k); },
                               [](const PoissonCount& p) { return p.mean; },
                               [](const GeometricCount& g) { return (1.0 - g.p) / g.p; }},
                    law);
}

double count_second_moment(const CountLaw& law) {
  return std::visit(
      overloaded{[](const FixedCount& f) { return static_cast<double>(f.k) * f.k; },
                 [](const PoissonCount& p) { return p.mean + p.mean * p.mean; },
                 [](const GeometricCount& g) {
                   const double q = 1.0 - g.p;
                   return q / (g.p * g.p) + q * q / (g.p * g.p);
                 }},
      law);
}

double count_pmf(const CountLaw& law, int k) {
  if (k < 0) return 0.0;
  return std::visit(overloaded{[k](const FixedCount& f) { return k == f.k ? 1.0 : 0.0; },
                               [k](const PoissonCount& p) {
                                 return std::exp(k * std::log(p.mean) - p.mean -
                                                 std::lgamma(k + 1.0));
                               },
                               [k](const GeometricCount& g) {
                                 return g.p * std::pow(1.0 - g.p, k);
                               }},
                    law);
}

GaussianDisp gaussian(double mean, double variance) { return GaussianDisp{mean, variance}; }

AtomicDisp two_point(double a, double b, double p) {
  return finite_atoms({{a, p}, {b, 1.0 - p}});
}

AtomicDisp finite_atoms(std::vector<Atom> atoms) {
  std::sort(atoms.begin(), atoms.end(),
            [](const Atom& x, const Atom& y) { return x.value < y.value; });
  AtomicDisp law;
  for (const auto& a : atoms) {
    if (!law.atoms.empty() && law.atoms.back().value == a.value) {
      law.atoms.back().prob += a.prob;
    } else {
      law.atoms.push_back(a);
    }
  }
  return law;
}

void validate(const ClusterModel& model) {
  std::visit(
      overloaded{
          [](const IidCluster& c) {
            std::visit(overloaded{[](const FixedCount& f) {
                                    if (f.k < 1) throw ConfigError("fixed count must be >= 1");
                                  },
                                  [](const PoissonCount& p) {
                                    if (!(p.mean > 0.0) || !std::isfinite(p.mean))
                                      throw ConfigError("poisson mean must be finite and > 0");
                                  },
                                  [](const GeometricCount& g) {
                                    if (!(g.p > 0.0 && g.p < 1.0))
                                      throw ConfigError("geometric p must lie in (0,1)");
                                  }},
                       c.count);
            std::visit(
                overloaded{[](const GaussianDisp& g) {
                             if (!(g.variance > 0.0) || !std::isfinite(g.variance) ||
                                 !std::isfinite(g.mean))
                               throw ConfigError("gaussian needs finite mean and variance > 0");
                           },
                           [](const AtomicDisp& a) {
                             if (a.atoms.empty()) throw ConfigError("atom list is empty");
                             double total = 0.0;
                             for (const auto& atom : a.atoms) {
                               if (!(atom.prob >= 0.0) || !std::isfinite(atom.value))
                                 throw ConfigError("atom probabilities must be >= 0");
                               total += atom.prob;
                             }
                             if (std::abs(total - 1.0) > 1e-9)
                               throw ConfigError("atom probabilities must sum to 1");
                           }},
                c.displacement);
          },
          [](const UnitTimeBbm& b) {
            if (!std::isfinite(b.drift_c)) throw ConfigError("bbm drift must be finite");
          }},
      model);
}

bool is_iid(const ClusterModel& model) { return std::holds_alternative<IidCluster>(model); }

std::string describe(const ClusterModel& model) {
  std::ostringstream os;
  os.precision(12);
  std::visit(
      overloaded{[&os](const IidCluster& c) {
                   os << "iid(count=";
                   std::visit(overloaded{[&os](const FixedCount& f) { os << "fixed(" << f.k << ")"; },
                                         [&os](const PoissonCount& p) {
                                           os << "poisson(" << p.mean << ")";
                                         },
                                         [&os](const GeometricCount& g) {
                                           os << "geometric(" << g.p << ")";
                                         }},
                              c.count);
                   os << ", disp=";
                   std::visit(overloaded{[&os](const GaussianDisp& g) {
                                           os << "gaussian(" << g.mean << "," << g.variance << ")";
                                         },
                                         [&os](const AtomicDisp& a) {
                                           os << "atoms(";
                                           for (std::size_t i = 0; i < a.atoms.size(); ++i) {
                                             if (i) os << ";";
                                             os << a.atoms[i].value << ":" << a.atoms[i].prob;
                                           }
                                           os << ")";
                                         }},
                              c.displacement);
                   os << ")";
                 },
                 [&os](const UnitTimeBbm& b) { os << "bbm(drift=-" << b.drift_c << ")"; }},
      model);
  return os.str();
}

ClusterModel mirrored(const ClusterModel& model) {
  return std::visit(
      overloaded{[](const IidCluster& c) -> ClusterModel {
                   IidCluster out = c;
                   out.displacement = std::visit(
                       overloaded{[](const GaussianDisp& g) -> DisplacementLaw {
                                    return GaussianDisp{-g.mean, g.variance};
                                  },
                                  [](const AtomicDisp& a) -> DisplacementLaw {
                                    std::vector<Atom> flipped;
                                    for (const auto& atom : a.atoms)
                                      flipped.push_back({-atom.value, atom.prob});
                                    return finite_atoms(std::move(flipped));
                                  }},
                       c.displacement);
                   return out;
                 },
                 [](const UnitTimeBbm& b) -> ClusterModel { return UnitTimeBbm{-b.drift_c}; }},
      model);
}

int sample_count(const CountLaw& law, RandomStream& rng) {
  return std::visit(overloaded{[](const FixedCount& f) { return f.k; },
                               [&rng](const PoissonCount& p) {
                                 return std::poisson_distribution<int>(p.mean)(rng);
                               },
                               [&rng](const GeometricCount& g) {
                                 return std::geometric_distribution<int>(g.p)(rng);
                               }},
                    law);
}

int sample_sibling_count(const CountLaw& law, RandomStream& rng) {
  return std::visit(overloaded{[](const FixedCount& f) { return f.k - 1; },
                               // Poisson is its own size-biased law shifted by one.
                               [&rng](const PoissonCount& p) {
                                 return std::poisson_distribution<int>(p.mean)(rng);
                               },
                               // k p (1-p)^k normalized is 1 + NegBin(2, p).
                               [&rng](const GeometricCount& g) {
                                 return std::negative_binomial_distribution<int>(2, g.p)(rng);
                               }},
                    law);
}

double sample_displacement(const DisplacementLaw& law, RandomStream& rng) {
  return std::visit(overloaded{[&rng](const GaussianDisp& g) {
                                 return g.mean + std::sqrt(g.variance) *
                                                     std::normal_distribution<double>()(rng);
                               },
                               [&rng](const AtomicDisp& a) {
                                 double v = rng.uniform();
                                 for (const auto& atom : a.atoms) {
                                   if (v < atom.prob) return atom.value;
                                   v -= atom.prob;
                                 }
                                 // rounding leftovers land on the last positive atom
                                 for (auto it = a.atoms.rbegin(); it != a.atoms.rend(); ++it) {
                                   if (it->prob > 0.0) return it->value;
                                 }
                                 return a.atoms.back().value;
                               }},
                    law);
}

void sample_cluster_into(const ClusterModel& model, RandomStream& rng, std::vector<double>& out) {
  std::visit(overloaded{[&](const IidCluster& c) {
                          const int n = sample_count(c.count, rng);
                          if (const auto* g = std::get_if<GaussianDisp>(&c.displacement)) {
                            std::normal_distribution<double> gauss(g->mean, std::sqrt(g->variance));
                            for (int i = 0; i < n; ++i) out.push_back(gauss(rng));
                          } else {
                            for (int i = 0; i < n; ++i)
                              out.push_back(sample_displacement(c.displacement, rng));
                          }
                        },
                        [&](const UnitTimeBbm& b) { bbm_leaves(b.drift_c, 0.0, 1.0, rng, out); }},
             model);
}

ClusterSample sample_cluster(const ClusterModel& model, RandomStream& rng) {
  ClusterSample out;
  sample_cluster_into(model, rng, out);
  return out;
}

double intensity_mass(const ClusterModel& model) {
  return std::visit(overloaded{[](const IidCluster& c) { return count_mean(c.count); },
                               [](const UnitTimeBbm&) { return std::exp(1.0); }},
                    model);
}

double log_laplace(const ClusterModel& model, double t) {
  return std::visit(
      overloaded{[t](const IidCluster& c) {
                   return std::log(count_mean(c.count)) + log_mgf(c.displacement, t);
                 },
                 [t](const UnitTimeBbm& b) { return 0.5 * t * t - b.drift_c * t + 1.0; }},
      model);
}

double log_laplace_derivative(const ClusterModel& model, double t) {
  return std::visit(
      overloaded{[t](const IidCluster& c) { return log_mgf_derivative(c.displacement, t); },
                 [t](const UnitTimeBbm& b) { return t - b.drift_c; }},
      model);
}

std::pair<double, double> displacement_support(const ClusterModel& model) {
  if (const auto* c = std::get_if<IidCluster>(&model)) {
    if (const auto* a = std::get_if<AtomicDisp>(&c->displacement)) {
      double lo = kInf;
      double hi = -kInf;
      for (const auto& atom : a->atoms) {
        if (atom.prob > 0.0) {
          lo = std::min(lo, atom.value);
          hi = std::max(hi, atom.value);
        }
      }
      return {lo, hi};
    }
  }
  return {-kInf, kInf};
}

DisplacementLaw tilt(const DisplacementLaw& law, double t) {
  return std::visit(overloaded{[t](const GaussianDisp& g) -> DisplacementLaw {
                                 return GaussianDisp{g.mean + t * g.variance, g.variance};
                               },
                               [t](const AtomicDisp& a) -> DisplacementLaw {
                                 const double lse = log_sum_exp_atoms(a, t);
                                 AtomicDisp out;
                                 for (const auto& atom : a.atoms) {
                                   const double w =
                                       atom.prob > 0.0
                                           ? std::exp(std::log(atom.prob) + t * atom.value - lse)
                                           : 0.0;
                                   out.atoms.push_back({atom.value, w});
                                 }
                                 return out;
                               }},
                    law);
}

SpineCluster sample_spine_cluster(const ClusterModel& model, double t, RandomStream& rng) {
  SpineCluster out;
  std::visit(overloaded{[&](const IidCluster& c) {
                          out.spine = sample_displacement(tilt(c.displacement, t), rng);
                          const int k = sample_sibling_count(c.count, rng);
                          for (int i = 0; i < k; ++i)
                            out.siblings.push_back(sample_displacement(c.displacement, rng));
                        },
                        [&](const UnitTimeBbm& b) {
                          std::exponential_distribution<double> clock(2.0);
                          std::normal_distribution<double> gauss(0.0, 1.0);
                          const double drift = t - b.drift_c;
                          double pos = 0.0;
                          double elapsed = 0.0;
                          for (;;) {
                            const double tau = clock(rng);
                            if (elapsed + tau >= 1.0) {
                              const double rest = 1.0 - elapsed;
                              pos += drift * rest + std::sqrt(rest) * gauss(rng);
                              break;
                            }
                            pos += drift * tau + std::sqrt(tau) * gauss(rng);
                            elapsed += tau;
                            bbm_leaves(b.drift_c, pos, 1.0 - elapsed, rng, out.siblings);
                          }
                          out.spine = pos;
                        }},
             model);
  return out;
}

}  // namespace brw
