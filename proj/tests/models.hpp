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

#include <cmath>

#include "brw/cluster_models.hpp"

namespace brw::testing {

inline ClusterModel frozen() { return IidCluster{FixedCount{1}, finite_atoms({{0.0, 1.0}})}; }

inline ClusterModel bbm(double c) { return UnitTimeBbm{c}; }

inline ClusterModel fixed2_gauss() { return IidCluster{FixedCount{2}, gaussian(-2.0, 1.0)}; }

inline ClusterModel poisson_gauss(double m = 0.5) {
  return IidCluster{PoissonCount{m}, gaussian(0.0, 1.0)};
}

inline ClusterModel fixed2_two_point() { return IidCluster{FixedCount{2}, two_point(-1.0, 1.0, 0.5)}; }

// Two roots, both sides of the spectrum.
inline ClusterModel fixed2_skewed() { return IidCluster{FixedCount{2}, two_point(-3.0, 1.0, 0.9)}; }

inline ClusterModel geometric_atoms() {
  return IidCluster{GeometricCount{0.4}, finite_atoms({{-3.0, 0.6}, {-1.0, 0.3}, {1.0, 0.1}})};
}

// Roots of phi(t) = log 2 - 2t + t^2/2.
inline double fixed2_gauss_upper() { return 2.0 + std::sqrt(4.0 - 2.0 * std::log(2.0)); }
inline double fixed2_gauss_lower() { return 2.0 - std::sqrt(4.0 - 2.0 * std::log(2.0)); }

}  // namespace brw::testing
