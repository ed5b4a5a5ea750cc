// svkit/features.hpp
//
// MFCC / log mel-filterbank extraction, energy VAD and additive-noise
// augmentation.

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

#ifndef SVKIT_FEATURES_HPP
#define SVKIT_FEATURES_HPP

#include <limits>
#include <vector>

#include "svkit/common.hpp"
#include "svkit/io.hpp"

namespace svkit {

enum class FeatureKind { kMfcc, kFbank };

struct FeatureConfig {
  int num_coeffs = 23;
  double low_freq = 20.0;
  double high_freq = 3700.0;
  double frame_length_ms = 25.0;
  double frame_shift_ms = 10.0;
  FeatureKind kind = FeatureKind::kMfcc;
  int num_mel_bins = 23;
  double preemph = 0.97;
  // Optional sliding-window cepstral mean normalization (frames, 0 = off).
  int cmn_window = 0;
};

struct FeatureMatrix {
  Matrix values;  // frames x num_coeffs; column 0 carries energy for MFCC
  double frame_shift_ms = 10.0;
  Eigen::Index NumFrames() const { return values.rows(); }
  Eigen::Index Dim() const { return values.cols(); }
};

struct FrameMask {
  std::vector<bool> keep;
};

FeatureMatrix ComputeFeatures(const Waveform &w, const FeatureConfig &cfg);

// Keeps frame t iff C0(t) > mean(C0) + threshold_offset, then smooths the
// raw mask by majority vote over +-context frames.
FrameMask EnergyVad(const FeatureMatrix &f, double threshold_offset = 0.0,
                    int context = 2);

FeatureMatrix ApplyMask(const FeatureMatrix &f, const FrameMask &m);

// Sentinel for "no noise added".
constexpr double kNoNoiseSnr = std::numeric_limits<double>::infinity();

Waveform AugmentNoise(const Waveform &w, const Waveform &noise, double snr_db,
                      std::uint64_t seed);

// Internals exposed for tests: mel scale and the triangular filterbank.
double HzToMel(double hz);
double MelToHz(double mel);
Matrix MelFilterbank(int num_bins, int fft_size, double sample_rate,
                     double low_freq, double high_freq);

// In-place iterative radix-2 FFT used by the front end (n a power of two).
void Fft(std::vector<double> &re, std::vector<double> &im);

}  // namespace svkit

#endif  // SVKIT_FEATURES_HPP
