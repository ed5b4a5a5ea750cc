// src/embedder_ops.cpp
//
// Params arithmetic, splicing, statistics pooling, the three classifier
// losses and the semi-orthogonality constraint step.

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

#include <cmath>

#include "svkit/embedder.hpp"

namespace svkit {

Params &Params::AxpyInPlace(double alpha, const Params &other) {
  for (const auto &[name, m] : other.t) {
    auto it = t.find(name);
    if (it == t.end())
      t[name] = alpha * m;
    else
      it->second += alpha * m;
  }
  return *this;
}

void Params::Scale(double alpha) {
  for (auto &[name, m] : t)
    m *= alpha;
}

void Params::SetZero() {
  for (auto &[name, m] : t)
    m.setZero();
}

double Params::MaxAbs() const {
  double v = 0.0;
  for (const auto &[name, m] : t)
    if (m.size() > 0)
      v = std::max(v, m.cwiseAbs().maxCoeff());
  return v;
}

Matrix Splice(const Matrix &frames, const ContextSpec &ctx) {
  const long t_len = frames.rows();
  const long d = frames.cols();
  const long k = static_cast<long>(ctx.offsets.size());
  Matrix out(t_len, d * k);
  for (long t = 0; t < t_len; t++) {
    for (long i = 0; i < k; i++) {
      long src = std::clamp<long>(t + ctx.offsets[i], 0, t_len - 1);
      out.block(t, i * d, 1, d) = frames.row(src);
    }
  }
  return out;
}

Vector StatsPool(const Matrix &frame_outputs) {
  const long t_len = frame_outputs.rows();
  if (t_len < 1)
    throw DataError("statistics pooling over zero frames");
  const long d = frame_outputs.cols();
  Vector out(2 * d);
  Vector mean = frame_outputs.colwise().mean();
  Vector sq_mean = frame_outputs.array().square().colwise().mean();
  out.head(d) = mean;
  out.tail(d) =
      (sq_mean.array() - mean.array().square()).max(kVarFloor).sqrt();
  return out;
}

// ------------------------------------------------------------------ losses

namespace {

void CheckFiniteVector(const Vector &v, const char *what) {
  if (!v.allFinite())
    throw NumericalError(std::string("non-finite values in ") + what);
}

struct CosineFrame {
  double r = 0.0;   // ||input||
  Vector unit_in;   // input / r
  Vector norms;     // per-class weight row norms
  Matrix unit_w;    // row-normalized weights
  Vector cos;       // cosines per class
};

CosineFrame MakeCosineFrame(const Vector &input, const Matrix &weights) {
  CosineFrame f;
  f.r = input.norm();
  if (f.r <= 0.0)
    throw NumericalError("zero input to margin loss");
  f.unit_in = input / f.r;
  f.norms = weights.rowwise().norm();
  if ((f.norms.array() <= 0.0).any())
    throw NumericalError("zero class weight row");
  f.unit_w = f.norms.cwiseInverse().asDiagonal() * weights;
  f.cos = f.unit_w * f.unit_in;
  return f;
}

Vector Softmax(const Vector &logits) {
  Vector p = (logits.array() - logits.maxCoeff()).exp();
  return p / p.sum();
}

}  // namespace

LossResult SoftmaxCrossEntropy(const Vector &input, int label,
                               const Matrix &weights, const Vector &bias) {
  CheckFiniteVector(input, "softmax input");
  Vector logits = weights * input + bias;
  Vector p = Softmax(logits);
  LossResult res;
  res.loss = -std::log(std::max(p[label], 1e-300));
  Vector d_logits = p;
  d_logits[label] -= 1.0;
  res.d_input = weights.transpose() * d_logits;
  res.d_weights = d_logits * input.transpose();
  res.d_bias = d_logits;
  return res;
}

LossResult AmSoftmaxLoss(const Vector &input, int label, const Matrix &weights,
                         double m, double s) {
  CheckFiniteVector(input, "am-softmax input");
  if (s <= 0.0)
    throw ConfigError("am-softmax scale must be positive");
  CosineFrame f = MakeCosineFrame(input, weights);
  Vector logits = s * f.cos;
  logits[label] -= s * m;
  Vector p = Softmax(logits);
  LossResult res;
  res.loss = -std::log(std::max(p[label], 1e-300));
  Vector d_cos = s * p;
  d_cos[label] -= s;
  // d cos_j / d input = (w_hat_j - cos_j * in_hat) / r
  Vector d_unit = f.unit_w.transpose() * d_cos;
  res.d_input = (d_unit - f.unit_in.dot(d_unit) * f.unit_in) / f.r;
  res.d_weights.resize(weights.rows(), weights.cols());
  for (Eigen::Index j = 0; j < weights.rows(); j++)
    res.d_weights.row(j) = d_cos[j] / f.norms[j] *
        (f.unit_in - f.cos[j] * f.unit_w.row(j).transpose()).transpose();
  return res;
}

double ASoftmaxPsi(double theta, int m) {
  int k = static_cast<int>(std::floor(m * theta / M_PI));
  double sign = (k % 2 == 0) ? 1.0 : -1.0;
  return sign * std::cos(m * theta) - 2.0 * k;
}

LossResult ASoftmaxLoss(const Vector &input, int label, const Matrix &weights,
                        int m, double lambda) {
  CheckFiniteVector(input, "a-softmax input");
  if (m < 1 || m > 4)
    throw ConfigError("a-softmax margin must be in {1,2,3,4}");
  CosineFrame f = MakeCosineFrame(input, weights);
  const double c = std::clamp(f.cos[label], -1.0, 1.0);
  const double theta = std::acos(c);
  const double psi = ASoftmaxPsi(theta, m);
  const double g = (lambda * c + psi) / (1.0 + lambda);

  Vector logits = f.r * f.cos;
  logits[label] = f.r * g;
  Vector p = Softmax(logits);
  LossResult res;
  res.loss = -std::log(std::max(p[label], 1e-300));
  Vector d_logits = p;
  d_logits[label] -= 1.0;

  // psi'(c); near theta = 0 the ratio sin(m theta)/sin(theta) tends to m.
  int k = static_cast<int>(std::floor(m * theta / M_PI));
  double sign = (k % 2 == 0) ? 1.0 : -1.0;
  double sin_theta = std::sin(theta);
  double dpsi_dc = sin_theta < 1e-7
                       ? static_cast<double>(m) * m
                       : sign * m * std::sin(m * theta) / sin_theta;
  double dg_dc = (lambda + dpsi_dc) / (1.0 + lambda);

  res.d_input = Vector::Zero(input.size());
  res.d_weights = Matrix::Zero(weights.rows(), weights.cols());
  for (Eigen::Index j = 0; j < weights.rows(); j++) {
    Vector w_hat = f.unit_w.row(j).transpose();
    if (j == label) {
      res.d_input += d_logits[j] *
          (g * f.unit_in + dg_dc * (w_hat - c * f.unit_in));
      res.d_weights.row(j) = d_logits[j] * f.r * dg_dc / f.norms[j] *
          (f.unit_in - c * w_hat).transpose();
    } else {
      res.d_input += d_logits[j] * w_hat;
      res.d_weights.row(j) = d_logits[j] * f.r / f.norms[j] *
          (f.unit_in - f.cos[j] * w_hat).transpose();
    }
  }
  return res;
}

// ------------------------------------------------------- semi-orthogonality

void SemiOrthStepMatrix(Matrix *m, double alpha_scale) {
  bool transposed = m->rows() > m->cols();
  Matrix w = transposed ? m->transpose() : *m;
  Matrix p = w * w.transpose();
  double beta = p.trace() / p.rows();
  if (beta <= 0.0)
    return;
  Matrix d = p - beta * Matrix::Identity(p.rows(), p.cols());
  // Large deviations need a conservative step to stay in the basin.
  double ratio = d.norm() / (beta * std::sqrt(static_cast<double>(p.rows())));
  double alpha = (ratio > 0.02 ? 0.125 : 0.5) / beta;
  w -= alpha_scale * alpha * d * w;
  *m = transposed ? Matrix(w.transpose()) : w;
}

double SemiOrthDeviationMatrix(const Matrix &m) {
  Matrix w = m.rows() > m.cols() ? Matrix(m.transpose()) : m;
  Matrix p = w * w.transpose();
  double beta = p.trace() / p.rows();
  if (beta <= 0.0)
    return 0.0;
  return (p / beta - Matrix::Identity(p.rows(), p.cols())).norm();
}

namespace {

// F-TDNN factor tensors are named "<branch>.<layer>.f<i>"; every factor with
// a successor factor is constrained.
bool IsConstrainedFactor(const Params &p, const std::string &name) {
  auto pos = name.rfind(".f");
  if (pos == std::string::npos || pos + 3 != name.size())
    return false;
  char digit = name[pos + 2];
  if (digit < '1' || digit > '9')
    return false;
  std::string next = name.substr(0, pos + 2) + static_cast<char>(digit + 1);
  return p.t.count(next) > 0;
}

}  // namespace

void SemiOrthStep(Params *p, double alpha_scale) {
  for (auto &[name, m] : p->t)
    if (IsConstrainedFactor(*p, name))
      SemiOrthStepMatrix(&m, alpha_scale);
}

double SemiOrthDeviation(const Params &p) {
  double worst = 0.0;
  for (const auto &[name, m] : p.t)
    if (IsConstrainedFactor(p, name))
      worst = std::max(worst, SemiOrthDeviationMatrix(m));
  return worst;
}

}  // namespace svkit
