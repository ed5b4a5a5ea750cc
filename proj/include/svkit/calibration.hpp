// svkit/calibration.hpp
//
// PAV (isotonic regression) score calibration: scores -> pooled posteriors ->
// log-likelihood ratios, with linear interpolation between block midpoints.

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

#ifndef SVKIT_CALIBRATION_HPP
#define SVKIT_CALIBRATION_HPP

#include <string>
#include <vector>

#include "svkit/common.hpp"

namespace svkit {

struct CalibrationMap {
  std::vector<double> breakpoints;  // strictly increasing block mean scores
  std::vector<double> llrs;         // non-decreasing calibrated LLRs
};

// Weighted isotonic L2 regression of y on x via pool-adjacent-violators.
// Returns the fitted value for each input point, in input order.  Inputs are
// sorted internally; ties in x are pre-pooled.
std::vector<double> IsotonicFit(const std::vector<double> &x,
                                const std::vector<double> &y,
                                const std::vector<double> &w);

// labels: true = target.  Pooled posteriors are clamped to [eps, 1-eps] and
// converted to LLRs by subtracting the empirical prior logit.
CalibrationMap PavFit(const std::vector<double> &scores,
                      const std::vector<bool> &labels, double eps = 1e-6);

// Piecewise-linear interpolation between breakpoints; clamped outside.
double PavApply(const CalibrationMap &m, double score);

std::string SerializeCalibrationMap(const CalibrationMap &m);
CalibrationMap ParseCalibrationMap(const std::string &text);

}  // namespace svkit

#endif  // SVKIT_CALIBRATION_HPP
