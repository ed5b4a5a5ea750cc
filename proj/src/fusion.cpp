// src/fusion.cpp

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

#include "svkit/fusion.hpp"

#include <cmath>
#include <sstream>

namespace svkit {

namespace {

double Softplus(double x) {
  // log(1 + exp(x)) without overflow
  return x > 0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

double Sigmoid(double x) {
  return x > 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

}  // namespace

FusionModel FusionFit(const Matrix &scores, const std::vector<bool> &labels,
                      const FusionConfig &cfg) {
  const long n = scores.rows(), k = scores.cols();
  if (n != static_cast<long>(labels.size()))
    throw DataError("fusion fit: label count does not match trial count");
  if (k < 1)
    throw DataError("fusion fit needs at least one subsystem");
  if (cfg.effective_prior <= 0 || cfg.effective_prior >= 1)
    throw ConfigError("effective prior must lie in (0, 1)");
  long nt = 0;
  for (bool l : labels)
    nt += l ? 1 : 0;
  long nn = n - nt;
  if (nt == 0 || nn == 0)
    throw DataError("fusion fit needs both target and nontarget trials");

  const double pi = cfg.effective_prior;
  const double logit_pi = std::log(pi / (1.0 - pi));
  // Per-trial weight and sign: the objective is the prior-weighted mean of
  // softplus(-t_i (f_i + logit_pi)).
  Vector c(n), t(n);
  for (long i = 0; i < n; i++) {
    c[i] = labels[i] ? pi / nt : (1.0 - pi) / nn;
    t[i] = labels[i] ? 1.0 : -1.0;
  }

  // theta = [weights; offset], design X = [scores, 1]
  Matrix x(n, k + 1);
  x.leftCols(k) = scores;
  x.col(k).setOnes();
  Vector theta = Vector::Zero(k + 1);

  auto objective = [&](const Vector &th) {
    Vector z = x * th;
    double obj = 0.0;
    for (long i = 0; i < n; i++)
      obj += c[i] * Softplus(-t[i] * (z[i] + logit_pi));
    obj += 0.5 * cfg.ridge * th.head(k).squaredNorm();
    return obj;
  };

  double prev_obj = objective(theta);
  for (int it = 0; it < cfg.max_iters; it++) {
    Vector z = x * theta;
    Vector g_f(n), h_f(n);
    for (long i = 0; i < n; i++) {
      double zi = z[i] + logit_pi;
      g_f[i] = -c[i] * t[i] * Sigmoid(-t[i] * zi);
      h_f[i] = c[i] * Sigmoid(zi) * Sigmoid(-zi);
    }
    Vector grad = x.transpose() * g_f;
    grad.head(k) += cfg.ridge * theta.head(k);
    if (grad.norm() < cfg.grad_tol) {
      FusionModel m;
      m.weights = theta.head(k);
      m.offset = theta[k];
      return m;
    }
    Matrix hess = x.transpose() * h_f.asDiagonal() * x;
    hess.topLeftCorner(k, k) += cfg.ridge * Matrix::Identity(k, k);
    hess += 1e-12 * Matrix::Identity(k + 1, k + 1);
    Vector step = hess.ldlt().solve(-grad);
    // Backtracking keeps the objective non-increasing.
    double alpha = 1.0;
    Vector cand = theta + step;
    double cand_obj = objective(cand);
    int bt = 0;
    while (cand_obj > prev_obj && bt < 50) {
      alpha *= 0.5;
      cand = theta + alpha * step;
      cand_obj = objective(cand);
      bt++;
    }
    theta = cand;
    prev_obj = cand_obj;
  }
  // Final gradient check after the last update.
  Vector z = x * theta;
  Vector g_f(n);
  for (long i = 0; i < n; i++)
    g_f[i] = -c[i] * t[i] * Sigmoid(-t[i] * (z[i] + logit_pi));
  Vector grad = x.transpose() * g_f;
  grad.head(k) += cfg.ridge * theta.head(k);
  if (grad.norm() < cfg.grad_tol) {
    FusionModel m;
    m.weights = theta.head(k);
    m.offset = theta[k];
    return m;
  }
  std::ostringstream os;
  os << "fusion did not converge: |grad| = " << grad.norm() << " after "
     << cfg.max_iters << " iterations (objective " << prev_obj << ")";
  throw NumericalError(os.str());
}

double FusionApply(const FusionModel &m, const Vector &scores) {
  if (scores.size() != m.weights.size())
    throw DataError("fusion apply: subsystem count mismatch");
  return m.weights.dot(scores) + m.offset;
}

std::vector<double> FusionApplyRows(const FusionModel &m,
                                    const Matrix &scores) {
  if (scores.cols() != m.weights.size())
    throw DataError("fusion apply: subsystem count mismatch");
  Vector fused = scores * m.weights;
  std::vector<double> out(fused.size());
  for (long i = 0; i < fused.size(); i++)
    out[i] = fused[i] + m.offset;
  return out;
}

std::string SerializeFusionModel(const FusionModel &m) {
  std::ostringstream os;
  os.precision(17);
  for (long i = 0; i < m.weights.size(); i++)
    os << m.weights[i] << " ";
  os << m.offset << "\n";
  return os.str();
}

FusionModel ParseFusionModel(const std::string &text) {
  std::istringstream is(text);
  std::vector<double> vals;
  double v;
  while (is >> v)
    vals.push_back(v);
  if (vals.size() < 2)
    throw DataError("fusion model text needs at least one weight and offset");
  FusionModel m;
  m.weights.resize(vals.size() - 1);
  for (size_t i = 0; i + 1 < vals.size(); i++)
    m.weights[i] = vals[i];
  m.offset = vals.back();
  return m;
}

}  // namespace svkit
