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

#include <functional>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "brw/cluster_models.hpp"

namespace brw {

/*
 * Convex-analysis engine for the log-Laplace transform phi of a cluster
 * intensity.  Everything here is deterministic; the numerical searches are
 * bisections on monotone functions over brackets that double from [-1, 1]
 * up to |t| = kBracketCap.
 */

inline constexpr double kRootTolerance = 1e-10;      // |phi| at a reported root
inline constexpr double kTangencyTolerance = 1e-12;  // |min phi| for a double root
inline constexpr double kVerdictTolerance = 1e-9;    // dead band on lambda*phi'(lambda)
inline constexpr double kIsRootTolerance = 1e-8;     // classify precondition
inline constexpr double kBracketCap = 1e3;

inline constexpr double kInfinity = std::numeric_limits<double>::infinity();

enum class Criticality { Subcritical, Critical, Supercritical };
enum class Verdict { Persistent, Extinct, Inconclusive };

std::string to_string(Criticality c);
std::string to_string(Verdict v);

struct Classification {
  Verdict verdict = Verdict::Inconclusive;
  double product = 0.0;  // lambda * phi'(lambda), or <lambda, grad phi(lambda)>
};

struct LaplaceProfile {
  ClusterModel model;
  double phi0 = 0.0;
  std::vector<double> roots;  // sorted, 0..2 entries
  Criticality criticality = Criticality::Subcritical;
  double beta0 = -kInfinity;
  std::vector<double> k_st;  // roots with lambda*phi'(lambda) > tol
};

inline double phi(const ClusterModel& model, double t) { return log_laplace(model, t); }
double phi_prime(const ClusterModel& model, double t);

Criticality criticality(const ClusterModel& model);

// Minimizer of phi; throws PreconditionError when the intensity sits on a
// half-line (phi has no interior minimum).
double argmin_phi(const ClusterModel& model);

// All real solutions of phi(lambda) = 0, ascending.
std::vector<double> find_roots(const ClusterModel& model);

// Solves phi'(t) = z.  Throws PreconditionError if z is outside the range of
// phi' or the solution lies beyond the bracket cap.
double slope_inverse(const ClusterModel& model, double z);

// I(z) = sup_t (z t - phi(t)); returns kInfinity outside the closure of the
// range of phi'.
double legendre(const ClusterModel& model, double z);

// Largest zero of I; -infinity for subcritical models.
double beta0(const ClusterModel& model);

Classification classify(const ClusterModel& model, double lambda);

// Product-form d-dimensional model supplied through closed forms.
struct MultidimLaplace {
  std::function<double(std::span<const double>)> value;
  std::function<std::vector<double>(std::span<const double>)> gradient;
};

Classification classify_multidim(const MultidimLaplace& laplace, std::span<const double> lambda);

LaplaceProfile profile(const ClusterModel& model);

// exp(-n I(a/n)) clipped to [0,1]; requires a >= n phi'(0).
double chernoff_bound(const ClusterModel& model, int n, double a);

// Bound on the expected number of generation-m descendants of one particle
// sitting at least `gap` above it: exp(-m sup_{t>=0}(t gap/m - phi(t))).
// Not clipped; defined for every gap.
double first_moment_tail(const ClusterModel& model, int m, double gap);

// Expected number of generation-m descendants at least `gap` above their
// ancestor.  Exact (a Gaussian tail) for Gaussian steps and BBM, otherwise
// the first_moment_tail bound.  Never smaller than the truth.
double expected_count_above(const ClusterModel& model, int m, double gap);

/*
 * Upper bound on the expected number of particles that ever sit in
 * [target_k, inf) at generation k = 1..targets.size(), descending from seeds
 * of intensity c_mult e^{-lambda u} du on (-inf, lower):
 *
 *   sum_k  int_{-inf}^{lower} c_mult e^{-lambda u} e^{-k I((target_k - u)/k)} du.
 *
 * Requires lambda > 0 and (target_k - lower)/k >= phi'(0) for every k.
 */
double truncation_bound(const ClusterModel& model, double lambda, double c_mult, double lower,
                        std::span<const double> targets);

// Constant target a_obs for k = 1..n.
double truncation_bound(const ClusterModel& model, double lambda, double c_mult, double lower,
                        int n, double a_obs);

}  // namespace brw
