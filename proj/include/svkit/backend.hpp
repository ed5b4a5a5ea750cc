// svkit/backend.hpp
//
// Embedding back-end: LDA projection, unit-sphere length normalization and
// two-covariance PLDA (EM training, unsupervised adaptation, LLR scoring).

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

#ifndef SVKIT_BACKEND_HPP
#define SVKIT_BACKEND_HPP

#include <string>
#include <vector>

#include "svkit/common.hpp"

namespace svkit {

struct LdaModel {
  Matrix projection;  // out_dim x in_dim
  Vector mean;        // training mean, subtracted before projection
};

// Rows of `vectors` are samples; labels give the class of each row.
// out_dim is clipped to min(in_dim, classes - 1) with a warning.
LdaModel LdaFit(const Matrix &vectors, const std::vector<int> &labels,
                int out_dim, std::vector<std::string> *warnings = nullptr);
Vector LdaApply(const LdaModel &m, const Vector &v);
Matrix LdaApplyRows(const LdaModel &m, const Matrix &rows);

Vector LengthNorm(const Vector &v);

struct PldaModel {
  Vector mean;
  Matrix between;  // speaker (between-class) covariance, PSD
  Matrix within;   // channel (within-class) covariance, PD
};

// Two-covariance PLDA via EM.  iters = 0 returns the initialization (global
// mean, sample covariance split into its between/within parts).  The
// per-iteration marginal log-likelihoods (non-decreasing) are appended to
// *loglikes when given.
PldaModel PldaFit(const Matrix &vectors, const std::vector<int> &labels,
                  int iters, std::vector<double> *loglikes = nullptr,
                  std::vector<std::string> *warnings = nullptr);

struct AdaptConfig {
  double within_scale = 0.75;   // alpha_w
  double between_scale = 0.25;  // alpha_b
};

// Covariance-interpolation adaptation on unlabeled in-domain data: the
// PSD-projected excess of the in-domain total covariance over between+within
// is split by the two scales; the mean moves to the in-domain mean.
PldaModel PldaAdapt(const PldaModel &m, const Matrix &indomain,
                    const AdaptConfig &cfg);

// Same/different-speaker log-likelihood ratio, closed form.  The scorer
// precomputes the inverses shared by all trials.
class PldaScorer {
 public:
  explicit PldaScorer(const PldaModel &m);
  double Score(const Vector &enroll, const Vector &test) const;
  int Dim() const { return static_cast<int>(mean_.size()); }

 private:
  Vector mean_;
  Matrix tot_inv_, m1_, m2_;  // see implementation
  double log_det_term_ = 0.0;
};

double PldaScore(const PldaModel &m, const Vector &enroll, const Vector &test);

}  // namespace svkit

#endif  // SVKIT_BACKEND_HPP
