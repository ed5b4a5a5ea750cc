// svkit/fusion.hpp
//
// Linear logistic-regression fusion of calibrated subsystem scores, weighted
// to a configurable effective prior.

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

#ifndef SVKIT_FUSION_HPP
#define SVKIT_FUSION_HPP

#include <string>
#include <vector>

#include "svkit/common.hpp"

namespace svkit {

struct FusionModel {
  Vector weights;        // one per subsystem
  double offset = 0.0;
};

struct FusionConfig {
  double effective_prior = 0.5;
  int max_iters = 100;
  double grad_tol = 1e-8;
  double ridge = 1e-6;  // on the weights, keeps the Hessian well-conditioned
};

// scores: trials x subsystems; labels: true = target.  Newton iterations on
// the prior-weighted logistic objective; throws NumericalError if the
// gradient norm does not fall below grad_tol within max_iters.
FusionModel FusionFit(const Matrix &scores, const std::vector<bool> &labels,
                      const FusionConfig &cfg = {});

// Fused LLR for one trial (row vector of per-subsystem scores).
double FusionApply(const FusionModel &m, const Vector &scores);
std::vector<double> FusionApplyRows(const FusionModel &m, const Matrix &scores);

std::string SerializeFusionModel(const FusionModel &m);
FusionModel ParseFusionModel(const std::string &text);

}  // namespace svkit

#endif  // SVKIT_FUSION_HPP
