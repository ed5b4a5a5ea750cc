// svkit/embedder.hpp
//
// Executes and trains the networks described by a NetSpec: context splicing,
// dense / factorized / residual layers, statistics pooling, margin losses and
// embedding extraction at the tap point.  All math is double precision with
// hand-written backward passes; training is plain SGD with momentum.

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

#ifndef SVKIT_EMBEDDER_HPP
#define SVKIT_EMBEDDER_HPP

#include <map>
#include <memory>
#include <string>
#include <vector>

#include "svkit/features.hpp"
#include "svkit/netspec.hpp"

namespace svkit {

// Named tensors; vectors are stored as n x 1.
struct Params {
  std::map<std::string, Matrix> t;

  Params &AxpyInPlace(double alpha, const Params &other);  // this += alpha*other
  void Scale(double alpha);
  void SetZero();
  double MaxAbs() const;
};

enum class LossKind { kSoftmax, kAmSoftmax, kASoftmax };

struct LossConfig {
  LossKind kind = LossKind::kSoftmax;
  double margin = 0.15;     // AM-softmax additive margin m
  double scale = 30.0;      // AM-softmax scale s
  int angular_m = 4;        // A-softmax margin (1..4)
  double multitask_weight = 0.0;  // weight of the frame-level phonetic loss
  // A-softmax annealing lambda_t = max(min, l0 * (1 + gamma*t)^(-power)).
  double anneal_lambda0 = 1000.0;
  double anneal_gamma = 1e-4;
  double anneal_power = 1.0;
  double anneal_min = 5.0;
};

struct Embedding {
  Vector vector;
  std::string source;  // architecture name
  std::string utterance_id;
};

// frame t of the result is the concatenation of input rows t+o for o in ctx,
// with edges clamped to the first/last frame.
Matrix Splice(const Matrix &frames, const ContextSpec &ctx);

// (mean, population stddev) per dimension; stddev floored at sqrt(kVarFloor).
constexpr double kVarFloor = 1e-12;
Vector StatsPool(const Matrix &frame_outputs);

// ------------------------------------------------------------------ losses
// All losses are per-sample; d_input is the gradient w.r.t. the (pre-
// normalization) input activation, d_weights w.r.t. the class weight matrix.

struct LossResult {
  double loss = 0.0;
  Vector d_input;
  Matrix d_weights;
  Vector d_bias;  // softmax only
};

LossResult SoftmaxCrossEntropy(const Vector &input, int label, const Matrix &weights,
                               const Vector &bias);
LossResult AmSoftmaxLoss(const Vector &input, int label, const Matrix &weights,
                         double m, double s);
// Annealed A-softmax: target logit = |x| * (lambda*cos + psi(theta)) / (1 + lambda)
// with psi(theta) = (-1)^k cos(m*theta) - 2k.
LossResult ASoftmaxLoss(const Vector &input, int label, const Matrix &weights,
                        int m, double lambda);
// The piecewise psi, exposed for tests.
double ASoftmaxPsi(double theta, int m);

// ------------------------------------------------------------------ network

struct Trace;  // opaque activation cache
struct TraceDeleter {
  void operator()(Trace *t) const;
};
using TracePtr = std::unique_ptr<Trace, TraceDeleter>;

class Network {
 public:
  // speaker_classes resolves output_softmax sizes for branches without an
  // explicit `classes` entry.
  Network(NetSpec spec, int input_dim, int speaker_classes);
  ~Network();
  Network(Network &&) noexcept;

  const NetSpec &Spec() const { return spec_; }
  int InputDim() const { return input_dim_; }
  int EmbeddingDim() const;
  // Resolved class count of a branch's output layer.
  int OutputClasses(const std::string &branch) const;

  Params Init(std::uint64_t seed) const;

  // Full forward through every branch.  Returns the cache needed by Backward.
  TracePtr Forward(const Params &p, const Matrix &feats) const;

  // Activation feeding the output layer of `branch` (segment level: 1 x D,
  // frame level: T x D), and the tap pre-activation.
  const Matrix &HeadInput(const Trace &tr, const std::string &branch) const;
  Vector TapPreActivation(const Trace &tr) const;
  Vector Pooled(const Trace &tr) const;
  // Plain affine logits of the output layer (used by the softmax path).
  Matrix Logits(const Params &p, const Trace &tr, const std::string &branch) const;

  // Name of the output weight/bias tensors for a branch.
  std::string OutWeightName(const std::string &branch) const;
  std::string OutBiasName(const std::string &branch) const;

  // Propagates head-input gradients (same shapes as HeadInput) back through
  // the net, accumulating into *grad (which must be zero- or pre-filled with
  // the same shapes as p).
  void Backward(const Params &p, const Trace &tr,
                const std::map<std::string, Matrix> &head_grads,
                Params *grad) const;

  // Combined loss + gradient for one utterance: speaker label on the tap
  // branch plus (optionally) frame labels on the frame-level softmax branch.
  double ComputeLossAndGrad(const Params &p, const Matrix &feats, int spk_label,
                            const std::vector<int> *frame_labels,
                            const LossConfig &cfg, double anneal_lambda,
                            Params *grad) const;

  struct Impl;
  const Impl &impl() const { return *impl_; }

 private:
  NetSpec spec_;
  int input_dim_;
  std::unique_ptr<Impl> impl_;
};

// One semi-orthogonality constraint step on every non-final F-TDNN factor
// matrix: M <- M - alpha_scale * alpha (M M^T - beta I) M, beta tracking
// M's current scale.  alpha_scale = 0 is the identity.
void SemiOrthStep(Params *p, double alpha_scale = 1.0);
// Largest ||M M^T / beta - I||_F over constrained factors, for monitoring.
double SemiOrthDeviation(const Params &p);
// Same step applied to a bare matrix.
void SemiOrthStepMatrix(Matrix *m, double alpha_scale = 1.0);
double SemiOrthDeviationMatrix(const Matrix &m);

// ------------------------------------------------------------------ training

struct TrainConfig {
  LossConfig loss;
  int epochs = 6;
  double learn_rate = 0.02;
  double momentum = 0.9;
  double lr_decay = 0.7;  // geometric, per epoch
  int chunk_frames = 200;
  double grad_clip = 5.0;     // max-abs gradient clip; <= 0 disables
  int semiorth_interval = 4;  // steps between constraint applications
  std::uint64_t seed = 0;
};

struct TrainData {
  std::vector<std::string> utts;
  std::map<std::string, Matrix> feats;
  std::map<std::string, int> speaker;                    // utt -> class
  std::map<std::string, std::vector<int>> frame_labels;  // optional
  int num_speakers = 0;
  int senones = 3800;
};

struct TrainReport {
  std::vector<double> epoch_loss;
  double heldout_initial = 0.0, heldout_final = 0.0;
};

Params Train(const Network &net, const TrainData &data, const TrainConfig &cfg,
             TrainReport *report = nullptr);

Embedding ExtractEmbedding(const Params &p, const Network &net,
                           const FeatureMatrix &feats,
                           const std::string &utterance_id = "");

// ------------------------------------------------------------------ utilities

// Divides layer widths by `divisor` (keeping pooling = 2 x input width and
// resnet channel ramps consistent) for desk-scale training and grad checks.
NetSpec ScaleWidth(const NetSpec &spec, int divisor);

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_tensor;
};

// Analytic vs central finite-difference gradients on a small random instance.
GradCheckReport GradCheck(const Network &net, const LossConfig &cfg,
                          std::uint64_t seed, int samples_per_tensor = 4,
                          double step = 1e-5);

// Model file round trip (format version, netspec text, loss config + tensors).
void SaveModel(const std::string &path, const NetSpec &spec, const Params &p,
               const LossConfig &loss, int speaker_classes);
struct LoadedModel {
  NetSpec spec;
  Params params;
  LossConfig loss;
  int speaker_classes = 0;
};
LoadedModel LoadModel(const std::string &path);

}  // namespace svkit

#endif  // SVKIT_EMBEDDER_HPP
