// tests/test_calibration.cpp

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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "svkit/calibration.hpp"
#include "test_util.hpp"

using namespace svkit;

namespace {

double Sse(const std::vector<double> &fit, const std::vector<double> &y,
           const std::vector<double> &w) {
  double s = 0.0;
  for (size_t i = 0; i < y.size(); i++)
    s += w[i] * (fit[i] - y[i]) * (fit[i] - y[i]);
  return s;
}

// Exhaustive isotonic optimum: the L2-optimal monotone fit is piecewise
// constant over some partition of the sorted points into consecutive blocks,
// with each block at its weighted mean.  Enumerate all 2^(n-1) partitions and
// keep the best whose block means are non-decreasing.
double ExhaustiveIsotonicSse(const std::vector<double> &x,
                             const std::vector<double> &y,
                             const std::vector<double> &w) {
  const size_t n = x.size();
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return x[a] < x[b]; });
  double best = 1e300;
  for (unsigned mask = 0; mask < (1u << (n - 1)); mask++) {
    // Bits mark block boundaries after each sorted position.  Equal x must
    // share a block for the fit to be a function of the score.
    std::vector<double> fit(n);
    double sum_wy = 0.0, sum_w = 0.0;
    std::vector<std::pair<size_t, size_t>> blocks;
    size_t start = 0;
    bool valid = true;
    for (size_t i = 0; i + 1 < n && valid; i++)
      if (((mask >> i) & 1u) && x[order[i]] == x[order[i + 1]])
        valid = false;
    if (!valid)
      continue;
    for (size_t i = 0; i < n; i++) {
      if (i == n - 1 || ((mask >> i) & 1u)) {
        blocks.emplace_back(start, i);
        start = i + 1;
      }
    }
    double prev = -1e300;
    for (auto [lo, hi] : blocks) {
      sum_wy = sum_w = 0.0;
      for (size_t i = lo; i <= hi; i++) {
        sum_wy += w[order[i]] * y[order[i]];
        sum_w += w[order[i]];
      }
      double mean = sum_wy / sum_w;
      if (mean < prev - 1e-12) {
        valid = false;
        break;
      }
      prev = mean;
      for (size_t i = lo; i <= hi; i++)
        fit[order[i]] = mean;
    }
    if (!valid)
      continue;
    best = std::min(best, Sse(fit, y, w));
  }
  return best;
}

}  // namespace

TEST_CASE("isotonic fit equals the exhaustive optimum for n <= 8") {
  Rng rng(40);
  for (int rep = 0; rep < 60; rep++) {
    size_t n = 2 + rep % 7;
    std::vector<double> x(n), y(n), w(n);
    for (size_t i = 0; i < n; i++) {
      // Coarse grid scores so ties in x occur regularly.
      x[i] = std::floor(svkit_test::Uniform(rng, 0.0, 4.0));
      y[i] = svkit_test::Uniform(rng, 0.0, 1.0);
      w[i] = rep % 3 == 0 ? svkit_test::Uniform(rng, 0.5, 2.0) : 1.0;
    }
    std::vector<double> fit = IsotonicFit(x, y, w);

    // Monotone in x.
    for (size_t i = 0; i < n; i++)
      for (size_t j = 0; j < n; j++)
        if (x[i] < x[j])
          CHECK(fit[i] <= fit[j] + 1e-12);

    double got = Sse(fit, y, w);
    double want = ExhaustiveIsotonicSse(x, y, w);
    CHECK(got == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("pav_fit basics") {
  // Reversed pair pools to one block with posterior 0.5 -> LLR 0 at pi=0.5.
  CalibrationMap m = PavFit({1.0, 2.0}, {true, false});
  for (double llr : m.llrs)
    CHECK(llr == doctest::Approx(0.0).epsilon(1e-12));

  // Already-monotone labels: posteriors are the raw block means.
  CalibrationMap mono = PavFit({1.0, 2.0, 3.0, 4.0}, {false, false, true, true});
  CHECK(PavApply(mono, 1.0) < 0.0);
  CHECK(PavApply(mono, 4.0) > 0.0);

  CHECK_THROWS_AS(PavFit({1.0, 2.0}, {true, true}), DataError);
  CHECK_THROWS_AS(PavFit({1.0, std::nan("")}, {true, false}), NumericalError);
}

TEST_CASE("pav_apply clamps, interpolates and stays monotone") {
  Rng rng(41);
  std::vector<double> scores;
  std::vector<bool> labels;
  for (int i = 0; i < 200; i++) {
    bool target = i % 2 == 0;
    scores.push_back(svkit_test::Gauss(rng) + (target ? 1.0 : -1.0));
    labels.push_back(target);
  }
  CalibrationMap m = PavFit(scores, labels);

  CHECK(PavApply(m, -1e9) == m.llrs.front());
  CHECK(PavApply(m, 1e9) == m.llrs.back());
  for (size_t i = 0; i < m.breakpoints.size(); i++)
    CHECK(PavApply(m, m.breakpoints[i]) == doctest::Approx(m.llrs[i]).epsilon(1e-12));

  double prev = -1e300;
  for (double s = -5.0; s <= 5.0; s += 0.01) {
    double v = PavApply(m, s);
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
}

TEST_CASE("calibration map serialization round trip") {
  CalibrationMap m = PavFit({1.0, 2.0, 3.0, 4.0, 2.5},
                            {false, false, true, true, true});
  CalibrationMap r = ParseCalibrationMap(SerializeCalibrationMap(m));
  CHECK(r.breakpoints == m.breakpoints);
  CHECK(r.llrs == m.llrs);
  CHECK_THROWS_AS(ParseCalibrationMap(""), DataError);
}
