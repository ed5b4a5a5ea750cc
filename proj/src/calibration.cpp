// src/calibration.cpp

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

#include "svkit/calibration.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace svkit {

namespace {

struct Block {
  double sum_wy;  // weighted sum of targets y
  double sum_w;   // total weight
  double sum_wx;  // weighted sum of scores
  int size;       // number of pre-pooled groups merged in
  double min_x = 0.0, max_x = 0.0;  // observed score range
  double Value() const { return sum_wy / sum_w; }
};

}  // namespace

std::vector<double> IsotonicFit(const std::vector<double> &x,
                                const std::vector<double> &y,
                                const std::vector<double> &w) {
  const size_t n = x.size();
  if (y.size() != n || w.size() != n)
    throw DataError("isotonic fit: input length mismatch");
  if (n == 0)
    return {};
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return x[a] < x[b]; });

  // Pre-pool points sharing the same x (they must get one fitted value),
  // then pool adjacent violators.
  std::vector<Block> groups;
  for (size_t i = 0; i < n; i++) {
    size_t idx = order[i];
    if (i > 0 && x[idx] == x[order[i - 1]]) {
      groups.back().sum_wy += w[idx] * y[idx];
      groups.back().sum_w += w[idx];
      groups.back().sum_wx += w[idx] * x[idx];
      groups.back().size += 1;
    } else {
      groups.push_back(Block{w[idx] * y[idx], w[idx], w[idx] * x[idx], 1,
                             x[idx], x[idx]});
    }
  }
  std::vector<Block> stack;
  for (Block b : groups) {
    while (!stack.empty() && stack.back().Value() >= b.Value()) {
      Block top = stack.back();
      stack.pop_back();
      b.sum_wy += top.sum_wy;
      b.sum_w += top.sum_w;
      b.sum_wx += top.sum_wx;
      b.size += top.size;
      b.min_x = top.min_x;
    }
    stack.push_back(b);
  }
  std::vector<double> fitted(n);
  size_t pos = 0;
  for (const Block &b : stack) {
    for (int j = 0; j < b.size; j++)
      fitted[order[pos++]] = b.Value();
  }
  return fitted;
}

CalibrationMap PavFit(const std::vector<double> &scores,
                      const std::vector<bool> &labels, double eps) {
  const size_t n = scores.size();
  if (labels.size() != n)
    throw DataError("PAV fit: label count does not match score count");
  size_t targets = 0;
  for (bool l : labels)
    targets += l ? 1 : 0;
  if (targets == 0 || targets == n)
    throw DataError("PAV fit needs both target and nontarget trials");
  for (double s : scores)
    if (!std::isfinite(s))
      throw NumericalError("non-finite score in PAV fit");

  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](size_t a, size_t b) { return scores[a] < scores[b]; });

  std::vector<Block> groups;
  for (size_t i = 0; i < n; i++) {
    size_t idx = order[i];
    if (i > 0 && scores[idx] == scores[order[i - 1]]) {
      groups.back().sum_wy += labels[idx] ? 1.0 : 0.0;
      groups.back().sum_w += 1.0;
      groups.back().sum_wx += scores[idx];
      groups.back().size += 1;
    } else {
      groups.push_back(Block{labels[idx] ? 1.0 : 0.0, 1.0, scores[idx], 1,
                             scores[idx], scores[idx]});
    }
  }
  std::vector<Block> stack;
  for (Block b : groups) {
    while (!stack.empty() && stack.back().Value() >= b.Value()) {
      Block top = stack.back();
      stack.pop_back();
      b.sum_wy += top.sum_wy;
      b.sum_w += top.sum_w;
      b.sum_wx += top.sum_wx;
      b.size += top.size;
      b.min_x = top.min_x;
    }
    stack.push_back(b);
  }

  double pi = static_cast<double>(targets) / n;
  double prior_logit = std::log(pi / (1.0 - pi));
  CalibrationMap m;
  // Two nodes per block (its observed score range): the map is flat across
  // each block and interpolates only in the unobserved gaps between blocks.
  for (const Block &b : stack) {
    double p = std::clamp(b.Value(), eps, 1.0 - eps);
    double llr = std::log(p / (1.0 - p)) - prior_logit;
    m.breakpoints.push_back(b.min_x);
    m.llrs.push_back(llr);
    if (b.max_x > b.min_x) {
      m.breakpoints.push_back(b.max_x);
      m.llrs.push_back(llr);
    }
  }
  return m;
}

double PavApply(const CalibrationMap &m, double score) {
  if (m.breakpoints.empty())
    throw DataError("empty calibration map");
  const auto &bp = m.breakpoints;
  if (score <= bp.front())
    return m.llrs.front();
  if (score >= bp.back())
    return m.llrs.back();
  auto it = std::upper_bound(bp.begin(), bp.end(), score);
  size_t hi = static_cast<size_t>(it - bp.begin());
  size_t lo = hi - 1;
  double t = (score - bp[lo]) / (bp[hi] - bp[lo]);
  return m.llrs[lo] + t * (m.llrs[hi] - m.llrs[lo]);
}

std::string SerializeCalibrationMap(const CalibrationMap &m) {
  std::ostringstream os;
  os.precision(17);
  for (size_t i = 0; i < m.breakpoints.size(); i++)
    os << m.breakpoints[i] << " " << m.llrs[i] << "\n";
  return os.str();
}

CalibrationMap ParseCalibrationMap(const std::string &text) {
  CalibrationMap m;
  std::istringstream is(text);
  double b, l;
  while (is >> b >> l) {
    m.breakpoints.push_back(b);
    m.llrs.push_back(l);
  }
  if (m.breakpoints.empty())
    throw DataError("empty calibration map text");
  return m;
}

}  // namespace svkit
