// src/scorenorm.cpp

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

#include "svkit/scorenorm.hpp"

#include <algorithm>
#include <cmath>

namespace svkit {

CohortStats TopKStats(const std::vector<double> &scores, int k) {
  if (scores.size() < 2)
    throw DataError("cohort must contain at least 2 scores");
  k = std::min<int>(k, static_cast<int>(scores.size()));
  if (k < 2)
    throw ConfigError("as-norm K must be at least 2");
  std::vector<double> sorted(scores);
  std::sort(sorted.begin(), sorted.end(), std::greater<double>());
  // Include everything tied with the K-th largest score.
  double kth = sorted[k - 1];
  int count = k;
  while (count < static_cast<int>(sorted.size()) && sorted[count] == kth)
    count++;
  double sum = 0.0;
  for (int i = 0; i < count; i++)
    sum += sorted[i];
  double mean = sum / count;
  double ss = 0.0;
  for (int i = 0; i < count; i++)
    ss += (sorted[i] - mean) * (sorted[i] - mean);
  CohortStats st;
  st.mean = mean;
  st.stddev = std::sqrt(ss / (count - 1));
  st.count = count;
  return st;
}

Matrix CohortScoreMatrix(const PldaScorer &scorer,
                         const std::vector<Vector> &targets,
                         const std::vector<Vector> &cohort) {
  if (cohort.empty())
    throw DataError("empty cohort");
  Matrix m(targets.size(), cohort.size());
  for (size_t i = 0; i < targets.size(); i++)
    for (size_t j = 0; j < cohort.size(); j++)
      m(i, j) = scorer.Score(targets[i], cohort[j]);
  return m;
}

double AsNorm(double raw, const std::vector<double> &enroll_cohort,
              const std::vector<double> &test_cohort, int k) {
  CohortStats e = TopKStats(enroll_cohort, k);
  CohortStats t = TopKStats(test_cohort, k);
  constexpr double kMinSigma = 1e-12;
  if (e.stddev < kMinSigma || t.stddev < kMinSigma)
    throw NumericalError("degenerate cohort: near-zero score deviation");
  return 0.5 * ((raw - e.mean) / e.stddev + (raw - t.mean) / t.stddev);
}

}  // namespace svkit
