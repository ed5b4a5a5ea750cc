// src/features.cpp

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

#include "svkit/features.hpp"

#include <cmath>

namespace svkit {

namespace {

constexpr double kPi = 3.14159265358979323846;
constexpr double kLogFloor = 1e-20;

int NextPowerOfTwo(int n) {
  int p = 1;
  while (p < n)
    p *= 2;
  return p;
}

void CheckConfig(const FeatureConfig &cfg, int sample_rate) {
  if (cfg.num_coeffs < 1)
    throw ConfigError("num_coeffs must be >= 1");
  if (cfg.low_freq < 0 || cfg.low_freq >= cfg.high_freq)
    throw ConfigError("need 0 <= low_freq < high_freq");
  if (cfg.high_freq > sample_rate / 2.0)
    throw ConfigError("high_freq above Nyquist");
  if (cfg.frame_length_ms <= 0 || cfg.frame_shift_ms <= 0)
    throw ConfigError("frame length/shift must be positive");
  if (cfg.num_mel_bins < cfg.num_coeffs && cfg.kind == FeatureKind::kMfcc)
    throw ConfigError("num_coeffs exceeds num_mel_bins");
}

}  // namespace

void Fft(std::vector<double> &re, std::vector<double> &im) {
  const size_t n = re.size();
  if (n == 0 || (n & (n - 1)) != 0)
    throw ConfigError("FFT size must be a power of two");
  // bit reversal
  for (size_t i = 1, j = 0; i < n; i++) {
    size_t bit = n >> 1;
    for (; j & bit; bit >>= 1)
      j ^= bit;
    j ^= bit;
    if (i < j) {
      std::swap(re[i], re[j]);
      std::swap(im[i], im[j]);
    }
  }
  for (size_t len = 2; len <= n; len <<= 1) {
    double ang = -2.0 * kPi / static_cast<double>(len);
    double wr = std::cos(ang), wi = std::sin(ang);
    for (size_t i = 0; i < n; i += len) {
      double cr = 1.0, ci = 0.0;
      for (size_t k = 0; k < len / 2; k++) {
        double ur = re[i + k], ui = im[i + k];
        double vr = re[i + k + len / 2] * cr - im[i + k + len / 2] * ci;
        double vi = re[i + k + len / 2] * ci + im[i + k + len / 2] * cr;
        re[i + k] = ur + vr;
        im[i + k] = ui + vi;
        re[i + k + len / 2] = ur - vr;
        im[i + k + len / 2] = ui - vi;
        double ncr = cr * wr - ci * wi;
        ci = cr * wi + ci * wr;
        cr = ncr;
      }
    }
  }
}

double HzToMel(double hz) { return 1127.0 * std::log1p(hz / 700.0); }
double MelToHz(double mel) { return 700.0 * (std::exp(mel / 1127.0) - 1.0); }

Matrix MelFilterbank(int num_bins, int fft_size, double sample_rate,
                     double low_freq, double high_freq) {
  const int num_fft_bins = fft_size / 2 + 1;
  Matrix fb = Matrix::Zero(num_bins, num_fft_bins);
  double mel_low = HzToMel(low_freq), mel_high = HzToMel(high_freq);
  double mel_step = (mel_high - mel_low) / (num_bins + 1);
  for (int b = 0; b < num_bins; b++) {
    double left = mel_low + b * mel_step;
    double center = left + mel_step;
    double right = center + mel_step;
    for (int k = 0; k < num_fft_bins; k++) {
      double mel = HzToMel(k * sample_rate / fft_size);
      if (mel > left && mel < right) {
        fb(b, k) = mel <= center ? (mel - left) / mel_step
                                 : (right - mel) / mel_step;
      }
    }
  }
  return fb;
}

FeatureMatrix ComputeFeatures(const Waveform &w, const FeatureConfig &cfg) {
  if (w.sample_rate <= 0)
    throw ConfigError("sample_rate must be positive");
  CheckConfig(cfg, w.sample_rate);
  const int frame_len =
      static_cast<int>(std::lround(cfg.frame_length_ms * w.sample_rate / 1000.0));
  const int frame_shift =
      static_cast<int>(std::lround(cfg.frame_shift_ms * w.sample_rate / 1000.0));
  const auto n = static_cast<long>(w.samples.size());
  if (n < frame_len)
    throw DataError("waveform shorter than one frame");
  const long num_frames = (n - frame_len) / frame_shift + 1;

  const int fft_size = NextPowerOfTwo(frame_len);
  const int num_bins =
      cfg.kind == FeatureKind::kFbank ? cfg.num_coeffs : cfg.num_mel_bins;
  Matrix fb = MelFilterbank(num_bins, fft_size, w.sample_rate, cfg.low_freq,
                            cfg.high_freq);

  std::vector<double> window(frame_len);
  for (int i = 0; i < frame_len; i++)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * kPi * i / (frame_len - 1));

  // Orthonormal DCT-II rows; transpose inverts it, so truncation to
  // num_mel_bins coefficients reconstructs log-mel energies exactly.
  Matrix dct;
  if (cfg.kind == FeatureKind::kMfcc) {
    dct.resize(cfg.num_coeffs, num_bins);
    for (int k = 0; k < cfg.num_coeffs; k++) {
      double scale = std::sqrt((k == 0 ? 1.0 : 2.0) / num_bins);
      for (int j = 0; j < num_bins; j++)
        dct(k, j) = scale * std::cos(kPi * k * (j + 0.5) / num_bins);
    }
  }

  FeatureMatrix out;
  out.frame_shift_ms = cfg.frame_shift_ms;
  out.values.resize(num_frames, cfg.num_coeffs);

  std::vector<double> re(fft_size), im(fft_size);
  Vector power(fft_size / 2 + 1), logmel(num_bins);
  for (long t = 0; t < num_frames; t++) {
    const double *src = w.samples.data() + t * frame_shift;
    for (int i = frame_len - 1; i > 0; i--)
      re[i] = (src[i] - cfg.preemph * src[i - 1]) * window[i];
    re[0] = src[0] * (1.0 - cfg.preemph) * window[0];
    std::fill(re.begin() + frame_len, re.end(), 0.0);
    std::fill(im.begin(), im.end(), 0.0);
    Fft(re, im);
    for (int k = 0; k <= fft_size / 2; k++)
      power[k] = re[k] * re[k] + im[k] * im[k];
    logmel = (fb * power).array().max(kLogFloor).log();
    if (cfg.kind == FeatureKind::kFbank)
      out.values.row(t) = logmel.transpose();
    else
      out.values.row(t) = (dct * logmel).transpose();
  }

  if (cfg.cmn_window > 0) {
    Matrix raw = out.values;
    for (long t = 0; t < num_frames; t++) {
      long half = cfg.cmn_window / 2;
      long lo = std::max(0L, t - half);
      long hi = std::min(num_frames - 1, t + half);
      out.values.row(t) =
          raw.row(t) - raw.middleRows(lo, hi - lo + 1).colwise().mean();
    }
  }
  return out;
}

FrameMask EnergyVad(const FeatureMatrix &f, double threshold_offset,
                    int context) {
  FrameMask mask;
  const long n = f.NumFrames();
  if (n == 0)
    return mask;
  if (context < 0)
    throw ConfigError("VAD context must be >= 0");
  double threshold = f.values.col(0).mean() + threshold_offset;
  std::vector<bool> raw(n);
  for (long t = 0; t < n; t++)
    raw[t] = f.values(t, 0) > threshold;
  mask.keep.resize(n);
  for (long t = 0; t < n; t++) {
    int votes = 0, total = 0;
    for (long u = std::max(0L, t - context);
         u <= std::min(n - 1, static_cast<long>(t + context)); u++) {
      votes += raw[u] ? 1 : 0;
      total++;
    }
    mask.keep[t] = 2 * votes > total;
  }
  return mask;
}

FeatureMatrix ApplyMask(const FeatureMatrix &f, const FrameMask &m) {
  if (static_cast<long>(m.keep.size()) != f.NumFrames())
    throw DataError("frame mask length does not match feature matrix");
  long kept = 0;
  for (bool k : m.keep)
    kept += k ? 1 : 0;
  FeatureMatrix out;
  out.frame_shift_ms = f.frame_shift_ms;
  out.values.resize(kept, f.Dim());
  long r = 0;
  for (long t = 0; t < f.NumFrames(); t++)
    if (m.keep[t])
      out.values.row(r++) = f.values.row(t);
  return out;
}

Waveform AugmentNoise(const Waveform &w, const Waveform &noise, double snr_db,
                      std::uint64_t seed) {
  if (std::isinf(snr_db) && snr_db > 0)
    return w;
  if (w.sample_rate != noise.sample_rate)
    throw DataError("signal and noise sample rates differ");
  if (noise.samples.empty())
    throw DataError("empty noise waveform");

  Rng rng(seed);
  std::uniform_int_distribution<size_t> offset_dist(0, noise.samples.size() - 1);
  size_t offset = offset_dist(rng);

  const size_t n = w.samples.size();
  std::vector<double> seg(n);
  for (size_t i = 0; i < n; i++)
    seg[i] = noise.samples[(offset + i) % noise.samples.size()];

  double p_sig = 0.0, p_noise = 0.0;
  for (size_t i = 0; i < n; i++) {
    p_sig += w.samples[i] * w.samples[i];
    p_noise += seg[i] * seg[i];
  }
  if (p_sig <= 0.0 || p_noise <= 0.0)
    throw NumericalError("degenerate energy in signal or noise");
  double gain = std::sqrt(p_sig / (p_noise * std::pow(10.0, snr_db / 10.0)));

  Waveform out;
  out.sample_rate = w.sample_rate;
  out.samples.resize(n);
  for (size_t i = 0; i < n; i++)
    out.samples[i] = w.samples[i] + gain * seg[i];
  return out;
}

}  // namespace svkit
