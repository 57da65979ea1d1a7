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

#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "brw/rng.hpp"

namespace brw {

// ---------------------------------------------------------------------------
// Offspring-count laws on {0,1,2,...}
// ---------------------------------------------------------------------------

struct FixedCount {
  int k = 1;
  friend bool operator==(const FixedCount&, const FixedCount&) = default;
};

struct PoissonCount {
  double mean = 1.0;
  friend bool operator==(const PoissonCount&, const PoissonCount&) = default;
};

// P[N=k] = p (1-p)^k, k >= 0.
struct GeometricCount {
  double p = 0.5;
  friend bool operator==(const GeometricCount&, const GeometricCount&) = default;
};

using CountLaw = std::variant<FixedCount, PoissonCount, GeometricCount>;

double count_mean(const CountLaw& law);
double count_second_moment(const CountLaw& law);
double count_pmf(const CountLaw& law, int k);

// ---------------------------------------------------------------------------
// Displacement laws (all with closed-form moment generating function)
// ---------------------------------------------------------------------------

struct GaussianDisp {
  double mean = 0.0;
  double variance = 1.0;
  friend bool operator==(const GaussianDisp&, const GaussianDisp&) = default;
};

struct Atom {
  double value = 0.0;
  double prob = 1.0;
  friend bool operator==(const Atom&, const Atom&) = default;
};

// Covers both TwoPoint(a, b, p) and FiniteAtoms; atoms are kept sorted by
// value with duplicates merged.
struct AtomicDisp {
  std::vector<Atom> atoms;
  friend bool operator==(const AtomicDisp&, const AtomicDisp&) = default;
};

using DisplacementLaw = std::variant<GaussianDisp, AtomicDisp>;

GaussianDisp gaussian(double mean, double variance);
AtomicDisp two_point(double a, double b, double p);
AtomicDisp finite_atoms(std::vector<Atom> atoms);

// ---------------------------------------------------------------------------
// Cluster models
// ---------------------------------------------------------------------------

// i.i.d. displacements attached to an independent count.
struct IidCluster {
  CountLaw count;
  DisplacementLaw displacement;
  friend bool operator==(const IidCluster&, const IidCluster&) = default;
};

// Binary branching Brownian motion run for unit time; each line has drift
// -c (c = `drift_c`) and splits at rate 1.
struct UnitTimeBbm {
  double drift_c = 0.0;
  friend bool operator==(const UnitTimeBbm&, const UnitTimeBbm&) = default;
};

using ClusterModel = std::variant<IidCluster, UnitTimeBbm>;

// Throws ConfigError if a law violates its invariants.
void validate(const ClusterModel& model);

bool is_iid(const ClusterModel& model);

// Human-readable one-liner, e.g. "iid(count=poisson(0.5), disp=gaussian(0,1))".
std::string describe(const ClusterModel& model);

// Model with every displacement negated (reflection u -> -u).
ClusterModel mirrored(const ClusterModel& model);

// One realization of the cluster point process: offspring displacements.
using ClusterSample = std::vector<double>;

ClusterSample sample_cluster(const ClusterModel& model, RandomStream& rng);

// Appends displacements to `out` instead of allocating.
void sample_cluster_into(const ClusterModel& model, RandomStream& rng,
                         std::vector<double>& out);

// E[number of offspring] = J(R).
double intensity_mass(const ClusterModel& model);

// log of the Laplace transform of the intensity measure at t.
double log_laplace(const ClusterModel& model, double t);

// Closed-form derivative of log_laplace.
double log_laplace_derivative(const ClusterModel& model, double t);

// Infimum and supremum of the support of the displacement law
// (+-infinity for Gaussian and BBM).
std::pair<double, double> displacement_support(const ClusterModel& model);

double sample_displacement(const DisplacementLaw& law, RandomStream& rng);
int sample_count(const CountLaw& law, RandomStream& rng);

// Count law size-biased by k, minus one: the sibling count of a marked child.
int sample_sibling_count(const CountLaw& law, RandomStream& rng);

// Displacement law reweighted by exp(t u) and renormalized.
DisplacementLaw tilt(const DisplacementLaw& law, double t);

/*
 * One cluster drawn under the measure E[sum_{z in chi} e^{t z} 1{(chi, z) in .}]
 * (normalized): `spine` is the marked offspring, `siblings` the rest.
 *
 * For i.i.d. clusters the count is size-biased, the marked displacement is the
 * exp(t u)-tilted law and siblings are untilted.  For unit-time BBM the marked
 * line has drift t - c and splits at rate 2, each split launching an ordinary
 * BBM for the remaining time.
 */
struct SpineCluster {
  double spine = 0.0;
  std::vector<double> siblings;
};

SpineCluster sample_spine_cluster(const ClusterModel& model, double t,
                                  RandomStream& rng);

}  // namespace brw
