// src/backend.cpp

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

#include "svkit/backend.hpp"

#include <cmath>
#include <map>
#include <numeric>

namespace svkit {

namespace {

constexpr double kRidgeFactor = 1e-6;

void Warn(std::vector<std::string> *warnings, const std::string &msg) {
  if (warnings != nullptr)
    warnings->push_back(msg);
}

// Adds ridge * mean-diagonal if the matrix is not positive definite.
bool RepairCovariance(Matrix *m, std::vector<std::string> *warnings,
                      const std::string &what) {
  Eigen::LLT<Matrix> llt(*m);
  if (llt.info() == Eigen::Success)
    return false;
  double ridge = kRidgeFactor * std::max(m->trace() / m->rows(), 1e-12);
  *m += ridge * Matrix::Identity(m->rows(), m->cols());
  Warn(warnings, what + " is singular; added ridge " + std::to_string(ridge));
  return true;
}

std::map<int, std::vector<long>> GroupByClass(const std::vector<int> &labels) {
  std::map<int, std::vector<long>> groups;
  for (size_t i = 0; i < labels.size(); i++)
    groups[labels[i]].push_back(static_cast<long>(i));
  return groups;
}

double LogDetPd(const Matrix &m) {
  Eigen::LLT<Matrix> llt(m);
  if (llt.info() != Eigen::Success)
    throw NumericalError("log-determinant of non-PD matrix");
  return 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
}

Matrix PsdProject(const Matrix &m) {
  Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
  Vector ev = es.eigenvalues().cwiseMax(0.0);
  return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

// -------------------------------------------------------------------- LDA

LdaModel LdaFit(const Matrix &vectors, const std::vector<int> &labels,
                int out_dim, std::vector<std::string> *warnings) {
  const long n = vectors.rows(), d = vectors.cols();
  if (n != static_cast<long>(labels.size()))
    throw DataError("label count does not match vector count");
  auto groups = GroupByClass(labels);
  const long classes = static_cast<long>(groups.size());
  if (classes < 2)
    throw DataError("LDA needs at least 2 classes");

  Vector mean = vectors.colwise().mean();
  Matrix sw = Matrix::Zero(d, d), sb = Matrix::Zero(d, d);
  for (const auto &[cls, rows] : groups) {
    Matrix sub(rows.size(), d);
    for (size_t i = 0; i < rows.size(); i++)
      sub.row(i) = vectors.row(rows[i]);
    Vector cm = sub.colwise().mean();
    Matrix centered = sub.rowwise() - cm.transpose();
    sw += centered.transpose() * centered;
    Vector diff = cm - mean;
    sb += static_cast<double>(rows.size()) * diff * diff.transpose();
  }
  sw /= static_cast<double>(n);
  sb /= static_cast<double>(n);

  int max_dim = static_cast<int>(std::min(d, classes - 1));
  if (out_dim > max_dim) {
    Warn(warnings, "LDA out_dim clipped from " + std::to_string(out_dim) +
                       " to " + std::to_string(max_dim));
    out_dim = max_dim;
  }
  RepairCovariance(&sw, warnings, "LDA within-class scatter");
  if (sb.norm() < 1e-12 * std::max(1.0, sw.norm()))
    Warn(warnings, "between-class scatter is (near) zero; projection basis is arbitrary");

  Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> es(sb, sw);
  if (es.info() != Eigen::Success)
    throw NumericalError("generalized eigensolver failed in LDA");
  // eigenvalues ascend; take the top out_dim in descending order
  LdaModel m;
  m.mean = mean;
  m.projection.resize(out_dim, d);
  for (int i = 0; i < out_dim; i++) {
    Vector v = es.eigenvectors().col(d - 1 - i);
    for (long j = 0; j < d; j++) {
      if (std::abs(v[j]) > 1e-12) {
        if (v[j] < 0)
          v = -v;
        break;
      }
    }
    m.projection.row(i) = v.transpose();
  }
  return m;
}

Vector LdaApply(const LdaModel &m, const Vector &v) {
  return m.projection * (v - m.mean);
}

Matrix LdaApplyRows(const LdaModel &m, const Matrix &rows) {
  return (rows.rowwise() - m.mean.transpose()) * m.projection.transpose();
}

Vector LengthNorm(const Vector &v) {
  double n = v.norm();
  if (n <= 0.0)
    throw NumericalError("cannot length-normalize the zero vector");
  return v / n;
}

// -------------------------------------------------------------------- PLDA

namespace {

// Marginal log-likelihood of one speaker's centered vectors under the
// two-covariance model; |Sigma_joint| = |W|^(n-1) |W + nB|.
double SpeakerLogLike(const Matrix &sub, const PldaModel &m) {
  const long n = sub.rows(), d = sub.cols();
  Vector xbar = sub.colwise().mean();
  Matrix dev = sub.rowwise() - xbar.transpose();
  Matrix sdev = dev.transpose() * dev;
  Matrix wnb = m.within + static_cast<double>(n) * m.between;
  Eigen::LLT<Matrix> llt_w(m.within), llt_wnb(wnb);
  if (llt_w.info() != Eigen::Success || llt_wnb.info() != Eigen::Success)
    throw NumericalError("non-PD covariance in PLDA log-likelihood");
  Vector md = xbar - m.mean;
  double quad = (llt_w.solve(sdev)).trace() +
                static_cast<double>(n) * md.dot(llt_wnb.solve(md));
  double logdet = (n - 1) * LogDetPd(m.within) + LogDetPd(wnb);
  return -0.5 * (n * d * std::log(2.0 * M_PI) + logdet + quad);
}

}  // namespace

PldaModel PldaFit(const Matrix &vectors, const std::vector<int> &labels,
                  int iters, std::vector<double> *loglikes,
                  std::vector<std::string> *warnings) {
  const long n = vectors.rows(), d = vectors.cols();
  if (n != static_cast<long>(labels.size()))
    throw DataError("label count does not match vector count");
  auto groups = GroupByClass(labels);
  const long classes = static_cast<long>(groups.size());
  if (classes < 2)
    throw DataError("PLDA needs at least 2 classes");

  PldaModel m;
  m.mean = vectors.colwise().mean();
  // Initialization: sample covariance split into within/between parts.
  m.within = Matrix::Zero(d, d);
  m.between = Matrix::Zero(d, d);
  for (const auto &[cls, rows] : groups) {
    Matrix sub(rows.size(), d);
    for (size_t i = 0; i < rows.size(); i++)
      sub.row(i) = vectors.row(rows[i]);
    Vector cm = sub.colwise().mean();
    Matrix centered = sub.rowwise() - cm.transpose();
    m.within += centered.transpose() * centered;
    Vector diff = cm - m.mean;
    m.between += diff * diff.transpose();
  }
  m.within /= static_cast<double>(n);
  m.between /= static_cast<double>(classes);
  RepairCovariance(&m.within, warnings, "PLDA within covariance");
  RepairCovariance(&m.between, warnings, "PLDA between covariance");

  double prev_ll = -std::numeric_limits<double>::infinity();
  for (int it = 0; it < iters; it++) {
    // E-step
    Matrix b_inv = m.between.llt().solve(Matrix::Identity(d, d));
    Matrix w_inv = m.within.llt().solve(Matrix::Identity(d, d));
    Matrix sum_b = Matrix::Zero(d, d), sum_w = Matrix::Zero(d, d);
    Vector sum_y = Vector::Zero(d);
    std::vector<Vector> ey;
    std::vector<Matrix> cy;
    std::vector<const std::vector<long> *> grp;
    for (const auto &[cls, rows] : groups) {
      double ns = static_cast<double>(rows.size());
      Matrix lambda = b_inv + ns * w_inv;
      Matrix cov = lambda.llt().solve(Matrix::Identity(d, d));
      Vector sx = Vector::Zero(d);
      for (long r : rows)
        sx += vectors.row(r).transpose();
      Vector mu_post = cov * (b_inv * m.mean + w_inv * sx);
      ey.push_back(mu_post);
      cy.push_back(cov);
      grp.push_back(&rows);
      sum_y += mu_post;
    }
    Vector new_mean = sum_y / static_cast<double>(classes);
    size_t gi = 0;
    for (const auto &[cls, rows] : groups) {
      const Vector &mu_post = ey[gi];
      const Matrix &cov = cy[gi];
      Vector diff = mu_post - new_mean;
      sum_b += cov + diff * diff.transpose();
      for (long r : rows) {
        Vector e = vectors.row(r).transpose() - mu_post;
        sum_w += e * e.transpose();
      }
      sum_w += static_cast<double>(rows.size()) * cov;
      gi++;
    }
    m.mean = new_mean;
    m.between = sum_b / static_cast<double>(classes);
    m.within = sum_w / static_cast<double>(n);
    RepairCovariance(&m.within, warnings, "PLDA within covariance");
    m.between = PsdProject(m.between);

    double ll = 0.0;
    for (const auto &[cls, rows] : groups) {
      Matrix sub(rows.size(), d);
      for (size_t i = 0; i < rows.size(); i++)
        sub.row(i) = vectors.row(rows[i]);
      ll += SpeakerLogLike(sub, m);
    }
    if (loglikes != nullptr)
      loglikes->push_back(ll);
    if (ll + 1e-9 < prev_ll)
      throw NumericalError("PLDA EM log-likelihood decreased: " +
                           std::to_string(prev_ll) + " -> " +
                           std::to_string(ll));
    prev_ll = ll;
  }
  return m;
}

PldaModel PldaAdapt(const PldaModel &m, const Matrix &indomain,
                    const AdaptConfig &cfg) {
  if (indomain.rows() < 2)
    throw DataError("PLDA adaptation needs at least 2 in-domain vectors");
  if (cfg.within_scale < 0 || cfg.within_scale > 1 || cfg.between_scale < 0 ||
      cfg.between_scale > 1)
    throw ConfigError("adaptation scales must lie in [0,1]");
  Vector mean = indomain.colwise().mean();
  Matrix centered = indomain.rowwise() - mean.transpose();
  Matrix total = centered.transpose() * centered /
                 static_cast<double>(indomain.rows());
  Matrix excess = PsdProject(total - (m.between + m.within));
  PldaModel out;
  out.mean = mean;
  out.between = m.between + cfg.between_scale * excess;
  out.within = m.within + cfg.within_scale * excess;
  return out;
}

// ---------------------------------------------------------------- scoring

PldaScorer::PldaScorer(const PldaModel &m) : mean_(m.mean) {
  const long d = m.mean.size();
  Matrix tot = m.between + m.within;  // A
  Matrix sum = tot + m.between;      // A + C
  const Matrix &dif = m.within;      // A - C
  Matrix id = Matrix::Identity(d, d);
  Matrix sum_inv = sum.llt().solve(id);
  Matrix dif_inv = dif.llt().solve(id);
  tot_inv_ = tot.llt().solve(id);
  m1_ = 0.5 * (sum_inv + dif_inv);
  m2_ = 0.5 * (sum_inv - dif_inv);
  log_det_term_ = 2.0 * LogDetPd(tot) - LogDetPd(sum) - LogDetPd(dif);
}

double PldaScorer::Score(const Vector &enroll, const Vector &test) const {
  if (enroll.size() != mean_.size() || test.size() != mean_.size())
    throw DataError("PLDA score dimension mismatch");
  Vector u = enroll - mean_, v = test - mean_;
  double quad = u.dot((tot_inv_ - m1_) * u) + v.dot((tot_inv_ - m1_) * v) -
                2.0 * u.dot(m2_ * v);
  return 0.5 * (quad + log_det_term_);
}

double PldaScore(const PldaModel &m, const Vector &enroll, const Vector &test) {
  return PldaScorer(m).Score(enroll, test);
}

}  // namespace svkit
