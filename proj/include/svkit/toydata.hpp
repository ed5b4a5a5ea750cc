// svkit/toydata.hpp
//
// Synthetic corpora: Gaussian speaker-feature utterances with Markov-chain
// frame labels, and embedding sets drawn from a PLDA generative model.

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

#ifndef SVKIT_TOYDATA_HPP
#define SVKIT_TOYDATA_HPP

#include <map>
#include <string>
#include <vector>

#include "svkit/backend.hpp"
#include "svkit/common.hpp"

namespace svkit {

struct ToySpeakerModel {
  int num_speakers = 50;
  int utts_per_speaker = 20;
  int feature_dim = 23;
  int frames_per_utt = 200;
  double speaker_stddev = 1.0;  // isotropic between-speaker deviation
  double frame_stddev = 0.3;    // isotropic within-utterance deviation
  int senones = 40;             // frame-label alphabet for the stubs
  double senone_stay_prob = 0.7;
  std::string id_prefix = "spk";
};

struct ToyCorpus {
  std::vector<std::string> utts;  // "<prefix><s>_u<u>"
  std::map<std::string, Matrix> feats;  // frames x dim
  std::map<std::string, int> speaker;
  std::map<std::string, std::vector<int>> frame_labels;
  int num_speakers = 0;
  int senones = 0;
};

// Deterministic per seed.  Speaker means ~ N(0, speaker_stddev^2 I); frames
// ~ N(mean_s, frame_stddev^2 I); labels follow a speaker-independent Markov
// chain (stay with senone_stay_prob, else jump uniformly).
ToyCorpus GenToyAudio(const ToySpeakerModel &m, std::uint64_t seed);

struct ToyEmbeddingSet {
  Matrix vectors;           // n x dim
  std::vector<int> labels;  // speaker index per row
};

// Speaker means ~ N(plda.mean, plda.between); vectors ~ N(mean_s, plda.within).
ToyEmbeddingSet GenToyEmbeddings(const PldaModel &plda, int speakers,
                                 int per_speaker, std::uint64_t seed);

// Draws n rows from N(mean, cov); cov must be PSD.
Matrix SampleGaussian(const Vector &mean, const Matrix &cov, int n, Rng *rng);

}  // namespace svkit

#endif  // SVKIT_TOYDATA_HPP
