// src/toydata.cpp

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

#include "svkit/toydata.hpp"

#include <cmath>

namespace svkit {

namespace {

void CheckModel(const ToySpeakerModel &m) {
  if (m.num_speakers < 1 || m.utts_per_speaker < 1 || m.feature_dim < 1 ||
      m.frames_per_utt < 1 || m.senones < 1)
    throw ConfigError("toy model counts must be positive");
  if (m.speaker_stddev < 0 || m.frame_stddev < 0)
    throw ConfigError("toy model deviations must be non-negative");
  if (m.senone_stay_prob < 0 || m.senone_stay_prob > 1)
    throw ConfigError("senone stay probability must lie in [0,1]");
}

}  // namespace

ToyCorpus GenToyAudio(const ToySpeakerModel &m, std::uint64_t seed) {
  CheckModel(m);
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  std::uniform_int_distribution<int> senone(0, m.senones - 1);

  ToyCorpus c;
  c.num_speakers = m.num_speakers;
  c.senones = m.senones;
  for (int s = 0; s < m.num_speakers; s++) {
    Vector mean(m.feature_dim);
    for (int d = 0; d < m.feature_dim; d++)
      mean[d] = m.speaker_stddev * gauss(rng);
    for (int u = 0; u < m.utts_per_speaker; u++) {
      std::string id =
          m.id_prefix + std::to_string(s) + "_u" + std::to_string(u);
      Matrix feats(m.frames_per_utt, m.feature_dim);
      for (int t = 0; t < m.frames_per_utt; t++)
        for (int d = 0; d < m.feature_dim; d++)
          feats(t, d) = mean[d] + m.frame_stddev * gauss(rng);
      std::vector<int> labels(m.frames_per_utt);
      int state = senone(rng);
      for (int t = 0; t < m.frames_per_utt; t++) {
        labels[t] = state;
        if (unif(rng) >= m.senone_stay_prob)
          state = senone(rng);
      }
      c.utts.push_back(id);
      c.feats[id] = feats;
      c.speaker[id] = s;
      c.frame_labels[id] = labels;
    }
  }
  return c;
}

Matrix SampleGaussian(const Vector &mean, const Matrix &cov, int n, Rng *rng) {
  const long d = mean.size();
  if (cov.rows() != d || cov.cols() != d)
    throw DataError("covariance shape does not match mean");
  Eigen::SelfAdjointEigenSolver<Matrix> es(cov);
  if (es.eigenvalues().minCoeff() < -1e-8 * std::abs(es.eigenvalues().maxCoeff()))
    throw NumericalError("covariance is not PSD");
  Matrix sqrt_cov = es.eigenvectors() *
                    es.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal() *
                    es.eigenvectors().transpose();
  std::normal_distribution<double> gauss(0.0, 1.0);
  Matrix out(n, d);
  for (int i = 0; i < n; i++) {
    Vector z(d);
    for (long j = 0; j < d; j++)
      z[j] = gauss(*rng);
    out.row(i) = (mean + sqrt_cov * z).transpose();
  }
  return out;
}

ToyEmbeddingSet GenToyEmbeddings(const PldaModel &plda, int speakers,
                                 int per_speaker, std::uint64_t seed) {
  if (speakers < 1 || per_speaker < 1)
    throw ConfigError("toy embedding counts must be positive");
  Rng rng(seed);
  ToyEmbeddingSet set;
  const long d = plda.mean.size();
  set.vectors.resize(static_cast<long>(speakers) * per_speaker, d);
  long row = 0;
  for (int s = 0; s < speakers; s++) {
    Vector mean_s = SampleGaussian(plda.mean, plda.between, 1, &rng).row(0);
    Matrix draws = SampleGaussian(mean_s, plda.within, per_speaker, &rng);
    for (int i = 0; i < per_speaker; i++) {
      set.vectors.row(row++) = draws.row(i);
      set.labels.push_back(s);
    }
  }
  return set;
}

}  // namespace svkit
