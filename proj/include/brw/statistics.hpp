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
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "brw/cluster_models.hpp"
#include "brw/rng.hpp"

namespace brw {

// ---------------------------------------------------------------------------
// Kolmogorov-Smirnov
// ---------------------------------------------------------------------------

struct KsResult {
  double d = 0.0;
  double p = 1.0;
};

// P[K > x] for the Kolmogorov distribution (alternating series, 100 terms).
double kolmogorov_sf(double x);

KsResult ks_statistic(std::span<const double> samples, const std::function<double(double)>& cdf);
KsResult ks_two_sample(std::span<const double> a, std::span<const double> b);

// ---------------------------------------------------------------------------
// Resampling helpers
// ---------------------------------------------------------------------------

struct Interval95 {
  double lo = 0.0;
  double hi = 0.0;
};

double mean(std::span<const double> xs);

// Mean after dropping `trim` of the mass on each side.
double trimmed_mean(std::span<const double> xs, double trim = 0.01);

// Percentile bootstrap interval for the mean.
Interval95 bootstrap_mean_ci(std::span<const double> xs, RandomStream rng, int resamples = 1000,
                             double level = 0.95);

// ---------------------------------------------------------------------------
// c(t) estimation
// ---------------------------------------------------------------------------

enum class CEstimator {
  Direct,      // e^{-n phi(t)} mean of e^{t max chi_n}
  SizeBiased,  // mean of e^{t max chi_n} / sum e^{t X_v} under the e^t-tilted law
  Auto,        // SizeBiased when phi'(t) > beta0, Direct otherwise
};
std::string to_string(CEstimator e);

struct CEstimate {
  int n = 0;
  double t = 0.0;
  int reps = 0;
  CEstimator method = CEstimator::Direct;
  double c_hat = 0.0;
  Interval95 ci;
  double trimmed = 0.0;
  double log_c_over_n = 0.0;  // log(c_hat)/n
  Interval95 log_ci_over_n;
  double pruned_mass = 0.0;   // summed pruning bounds over all replicates
  std::vector<double> values;
};

struct CEstimateOptions {
  CEstimator method = CEstimator::Auto;
  double delta = 1e-10;
  int resamples = 1000;
};

CEstimator resolve_estimator(const ClusterModel& model, double t, CEstimator requested);

// Replicate j uses rng.split(j); the bootstrap uses a separate child stream.
CEstimate estimate_c(const ClusterModel& model, double t, int n, int reps, const RandomStream& rng,
                     const CEstimateOptions& options = {});
CEstimate estimate_c_serial(const ClusterModel& model, double t, int n, int reps,
                            const RandomStream& rng, const CEstimateOptions& options = {});

// ---------------------------------------------------------------------------
// Gumbel law of the maximum
// ---------------------------------------------------------------------------

struct GumbelFit {
  double lambda = 0.0;
  double c_hat = 0.0;
  KsResult goodness;
  int n = 0;
};

// F(z) = exp(-(c/lambda) e^{-lambda z}); MLE c_hat = lambda n / sum e^{-lambda z}.
GumbelFit fit_gumbel(std::span<const double> maxima, double lambda);
double gumbel_cdf(double z, double lambda, double c);

// ---------------------------------------------------------------------------
// Linear speeds
// ---------------------------------------------------------------------------

struct SpeedFit {
  double slope = 0.0;
  double intercept = 0.0;
  double stderr_ = 0.0;  // HC1 heteroskedasticity-robust
  double n_lo = 0.0;
  double n_hi = 0.0;
  int points = 0;
};

SpeedFit speed_fit(std::span<const std::pair<double, double>> series, double n_min);

// ---------------------------------------------------------------------------
// Equilibrium tests
// ---------------------------------------------------------------------------

struct SuperposabilityReport {
  double u1 = 0.0;
  double u2 = 0.0;
  double u = 0.0;
  int reps = 0;
  KsResult ks;
  std::vector<double> superposed;
  std::vector<double> shifted;
};

struct SuperposabilityOptions {
  int burn_in = 20;
  double level = -1.0;  // maxima below it are censored to -infinity
  double eps_prune = 1e-3;
};

// u = log(e^{lambda u1} + e^{lambda u2}) / lambda.
double superposed_shift(double lambda, double u1, double u2);

SuperposabilityReport superposability_test(const ClusterModel& model, double lambda, double u1,
                                           double u2, int reps, const RandomStream& rng,
                                           const SuperposabilityOptions& options = {});

struct BoundaryRow {
  int n = 0;
  CEstimate estimate;
};

struct BoundaryReport {
  double drift_c = 0.0;
  double t = 0.0;
  std::vector<BoundaryRow> rows;
  bool strictly_decreasing = false;
  bool ends_disjoint = false;
  bool plateau = false;          // every pair of intervals overlaps
  double trend_slope = 0.0;      // of c_hat against n, weighted by 1/se^2
  double trend_z = 0.0;
  std::string verdict;           // decay-consistent | plateau-consistent | inconclusive
};

BoundaryReport boundary_decay_test(double drift_c, double t, std::span<const int> n_list, int reps,
                                   const RandomStream& rng, const CEstimateOptions& options = {});

}  // namespace brw
