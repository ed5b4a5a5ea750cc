// svkit/scorenorm.hpp
//
// Adaptive symmetric score normalization (as-norm) against an unlabeled
// cohort: each raw score is standardized by the statistics of its enroll and
// test sides' top-K cohort scores and the two z-scores are averaged.

// Copyright 2026  The svkit authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef SVKIT_SCORENORM_HPP
#define SVKIT_SCORENORM_HPP

#include <vector>

#include "svkit/backend.hpp"
#include "svkit/common.hpp"

namespace svkit {

// Mean and unbiased standard deviation of the K largest scores.  Values tied
// with the K-th largest are all included, so the result is independent of
// cohort ordering.  K is clamped to the cohort size; K >= 2 after clamping.
struct CohortStats {
  double mean = 0.0;
  double stddev = 0.0;
  int count = 0;
};

CohortStats TopKStats(const std::vector<double> &scores, int k);

// Entry (i, j) = scorer.Score(targets[i], cohort[j]).
Matrix CohortScoreMatrix(const PldaScorer &scorer,
                         const std::vector<Vector> &targets,
                         const std::vector<Vector> &cohort);

// 0.5 * ((raw - mu_e) / sigma_e + (raw - mu_t) / sigma_t) over top-K stats.
// Degenerate (near-zero sigma) cohorts raise NumericalError.
double AsNorm(double raw, const std::vector<double> &enroll_cohort,
              const std::vector<double> &test_cohort, int k);

constexpr int kDefaultAsNormK = 200;  // effective K = min(200, cohort size)

}  // namespace svkit

#endif  // SVKIT_SCORENORM_HPP
