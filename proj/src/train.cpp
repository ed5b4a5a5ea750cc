// src/train.cpp
//
// SGD training loop, embedding extraction, gradient checking, width scaling
// and the model file format.

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

#include <algorithm>
#include <cmath>

#include "svkit/embedder.hpp"
#include "svkit/io.hpp"

namespace svkit {

namespace {

double AnnealLambda(const LossConfig &cfg, long step) {
  return std::max(cfg.anneal_min,
                  cfg.anneal_lambda0 *
                      std::pow(1.0 + cfg.anneal_gamma * step, -cfg.anneal_power));
}

bool HasFtdnn(const NetSpec &spec) {
  for (const auto &b : spec.branches)
    for (const auto &l : b.layers)
      if (l.kind == LayerKind::kFtdnn)
        return true;
  return false;
}

struct Chunk {
  Matrix feats;
  std::vector<int> labels;
  bool has_labels = false;
};

Chunk TakeChunk(const TrainData &data, const std::string &utt, int chunk_frames,
                Rng &rng) {
  Chunk c;
  const Matrix &f = data.feats.at(utt);
  long t_len = f.rows();
  long len = std::min<long>(chunk_frames, t_len);
  long start = 0;
  if (t_len > len) {
    std::uniform_int_distribution<long> dist(0, t_len - len);
    start = dist(rng);
  }
  c.feats = f.middleRows(start, len);
  auto it = data.frame_labels.find(utt);
  if (it != data.frame_labels.end()) {
    if (static_cast<long>(it->second.size()) != t_len)
      throw DataError("frame labels for " + utt + " do not match frame count");
    c.labels.assign(it->second.begin() + start, it->second.begin() + start + len);
    c.has_labels = true;
  }
  return c;
}

}  // namespace

Params Train(const Network &net, const TrainData &data, const TrainConfig &cfg,
             TrainReport *report) {
  if (data.num_speakers < 2)
    throw DataError("training needs at least 2 speakers");
  if (data.utts.empty())
    throw DataError("no training utterances");

  Params p = net.Init(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Params velocity = p;
  velocity.SetZero();
  Params grad = velocity;

  // Held-out batch: every 10th utterance, excluded from the SGD stream.
  std::vector<std::string> train_utts, heldout;
  for (size_t i = 0; i < data.utts.size(); i++)
    (i % 10 == 9 ? heldout : train_utts).push_back(data.utts[i]);
  if (train_utts.empty())
    train_utts = data.utts;
  if (heldout.empty())
    heldout.push_back(data.utts.front());

  auto heldout_loss = [&](const Params &params) {
    double sum = 0.0;
    for (const auto &utt : heldout) {
      const Matrix &f = data.feats.at(utt);
      auto it = data.frame_labels.find(utt);
      const std::vector<int> *labels =
          it != data.frame_labels.end() ? &it->second : nullptr;
      sum += net.ComputeLossAndGrad(params, f, data.speaker.at(utt), labels,
                                    cfg.loss, AnnealLambda(cfg.loss, 1 << 20),
                                    nullptr);
    }
    return sum / static_cast<double>(heldout.size());
  };

  if (report != nullptr)
    report->heldout_initial = heldout_loss(p);

  const bool constrain = HasFtdnn(net.Spec());
  Rng rng(cfg.seed);
  double lr = cfg.learn_rate;
  long step = 0;
  for (int epoch = 0; epoch < cfg.epochs; epoch++) {
    std::shuffle(train_utts.begin(), train_utts.end(), rng);
    double epoch_loss = 0.0;
    for (const auto &utt : train_utts) {
      Chunk c = TakeChunk(data, utt, cfg.chunk_frames, rng);
      double loss;
      if (lr == 0.0) {
        loss = net.ComputeLossAndGrad(p, c.feats, data.speaker.at(utt),
                                      c.has_labels ? &c.labels : nullptr,
                                      cfg.loss, AnnealLambda(cfg.loss, step),
                                      nullptr);
      } else {
        grad.SetZero();
        loss = net.ComputeLossAndGrad(p, c.feats, data.speaker.at(utt),
                                      c.has_labels ? &c.labels : nullptr,
                                      cfg.loss, AnnealLambda(cfg.loss, step),
                                      &grad);
        if (cfg.grad_clip > 0.0) {
          double gmax = grad.MaxAbs();
          if (gmax > cfg.grad_clip)
            grad.Scale(cfg.grad_clip / gmax);
        }
        velocity.Scale(cfg.momentum);
        velocity.AxpyInPlace(-lr, grad);
        p.AxpyInPlace(1.0, velocity);
        if (constrain && cfg.semiorth_interval > 0 &&
            step % cfg.semiorth_interval == 0)
          SemiOrthStep(&p);
      }
      if (!std::isfinite(loss))
        throw NumericalError("NaN loss at step " + std::to_string(step) +
                             " (utterance " + utt + ")");
      epoch_loss += loss;
      step++;
    }
    if (report != nullptr)
      report->epoch_loss.push_back(epoch_loss /
                                   static_cast<double>(train_utts.size()));
    lr *= cfg.lr_decay;
  }

  if (report != nullptr)
    report->heldout_final = heldout_loss(p);
  return p;
}

Embedding ExtractEmbedding(const Params &p, const Network &net,
                           const FeatureMatrix &feats,
                           const std::string &utterance_id) {
  if (feats.NumFrames() < 1)
    throw DataError("cannot extract embedding from empty features");
  auto tr = net.Forward(p, feats.values);
  Embedding e;
  e.vector = net.TapPreActivation(*tr);
  e.source = net.Spec().name;
  e.utterance_id = utterance_id;
  return e;
}

// ------------------------------------------------------------------ scaling

NetSpec ScaleWidth(const NetSpec &spec, int divisor) {
  if (divisor <= 1)
    return spec;
  NetSpec s = spec;
  auto scaled = [&](int v, int floor_to) {
    int w = std::max(floor_to, v / divisor);
    return (w / floor_to) * floor_to;
  };
  for (auto &b : s.branches) {
    for (auto &l : b.layers) {
      switch (l.kind) {
        case LayerKind::kResnetBlockStack:
          l.size = scaled(l.size, 8);
          break;
        case LayerKind::kPooling:
        case LayerKind::kOutputSoftmax:
          break;  // pooling recomputed below, classes untouched
        default:
          l.size = scaled(l.size, 4);
          if (l.inner_size > 0)
            l.inner_size = scaled(l.inner_size, 2);
      }
    }
  }
  for (auto &b : s.branches) {
    int prev = 0;
    for (auto &l : b.layers) {
      if (l.kind == LayerKind::kPooling) {
        int extra = 0;
        if (s.concat_into_pooling && b.name == s.tap.branch) {
          const Branch &src = s.GetBranch(s.concat_into_pooling->branch);
          extra = src.layers[s.concat_into_pooling->layer - 1].size;
        }
        l.size = 2 * (prev + extra);
      }
      if (l.size > 0)
        prev = l.size;
    }
  }
  return s;
}

// ----------------------------------------------------------------- gradcheck

GradCheckReport GradCheck(const Network &net, const LossConfig &cfg,
                          std::uint64_t seed, int samples_per_tensor,
                          double step) {
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  const int t_len = 9;
  Matrix feats(t_len, net.InputDim());
  for (long r = 0; r < feats.rows(); r++)
    for (long c = 0; c < feats.cols(); c++)
      feats(r, c) = gauss(rng);

  Params p = net.Init(seed + 1);
  // Zero-initialized biases can leave pre-activations exactly on the ReLU
  // kink (dead windows), where central differences disagree with any valid
  // subgradient.  Jitter everything off the kinks.
  for (auto &[name, w] : p.t)
    for (long r = 0; r < w.rows(); r++)
      for (long c = 0; c < w.cols(); c++)
        w(r, c) += 0.05 * gauss(rng);
  int spk_classes = net.OutputClasses(net.Spec().tap.branch);
  std::uniform_int_distribution<int> spk_dist(0, spk_classes - 1);
  int label = spk_dist(rng);

  std::vector<int> frame_labels;
  const std::vector<int> *labels_ptr = nullptr;
  if (cfg.multitask_weight > 0.0) {
    // frame-level branch class count, if any
    int classes = 0;
    for (const auto &b : net.Spec().branches) {
      bool has_pool = false, has_out = false;
      for (const auto &l : b.layers) {
        has_pool |= l.kind == LayerKind::kPooling;
        has_out |= l.kind == LayerKind::kOutputSoftmax;
      }
      if (has_out && !has_pool)
        classes = net.OutputClasses(b.name);
    }
    if (classes > 0) {
      std::uniform_int_distribution<int> fd(0, classes - 1);
      for (int t = 0; t < t_len; t++)
        frame_labels.push_back(fd(rng));
      labels_ptr = &frame_labels;
    }
  }

  const double anneal = 10.0;  // margin term active but not dominant
  Params grad = p;
  grad.SetZero();
  net.ComputeLossAndGrad(p, feats, label, labels_ptr, cfg, anneal, &grad);

  GradCheckReport rep;
  for (auto &[name, w] : p.t) {
    const Matrix &g = grad.t.at(name);
    std::uniform_int_distribution<long> ri(0, w.rows() - 1), ci(0, w.cols() - 1);
    for (int k = 0; k < samples_per_tensor; k++) {
      long r = ri(rng), c = ci(rng);
      double orig = w(r, c);
      double analytic = g(r, c);
      // Several steps: a probe that straddles a ReLU kink, or drowns in
      // roundoff, at one step almost never does at the others, while a wrong
      // analytic gradient fails every step.
      double rel = std::numeric_limits<double>::infinity();
      for (double h_scale : {10.0, 1.0, 0.1}) {
        double h = h_scale * step * std::max(1.0, std::abs(orig));
        w(r, c) = orig + h;
        double up = net.ComputeLossAndGrad(p, feats, label, labels_ptr, cfg,
                                           anneal, nullptr);
        w(r, c) = orig - h;
        double down = net.ComputeLossAndGrad(p, feats, label, labels_ptr, cfg,
                                             anneal, nullptr);
        w(r, c) = orig;
        double numeric = (up - down) / (2.0 * h);
        rel = std::min(rel, std::abs(numeric - analytic) /
                                std::max(1e-6, std::abs(numeric) +
                                                   std::abs(analytic)));
      }
      if (rel > rep.max_rel_error) {
        rep.max_rel_error = rel;
        rep.worst_tensor = name;
      }
    }
  }
  return rep;
}

// ---------------------------------------------------------------- model file

namespace {

std::string LossKindName(LossKind k) {
  switch (k) {
    case LossKind::kSoftmax: return "softmax";
    case LossKind::kAmSoftmax: return "am_softmax";
    case LossKind::kASoftmax: return "a_softmax";
  }
  return "?";
}

LossKind LossKindFromName(const std::string &s) {
  if (s == "softmax") return LossKind::kSoftmax;
  if (s == "am_softmax") return LossKind::kAmSoftmax;
  if (s == "a_softmax") return LossKind::kASoftmax;
  throw ConfigError("unknown loss kind '" + s + "'");
}

}  // namespace

void SaveModel(const std::string &path, const NetSpec &spec, const Params &p,
               const LossConfig &loss, int speaker_classes) {
  TensorFile tf;
  tf.meta["netspec"] = RenderNetSpec(spec);
  tf.meta["loss.kind"] = LossKindName(loss.kind);
  tf.meta["loss.margin"] = std::to_string(loss.margin);
  tf.meta["loss.scale"] = std::to_string(loss.scale);
  tf.meta["loss.angular_m"] = std::to_string(loss.angular_m);
  tf.meta["loss.multitask_weight"] = std::to_string(loss.multitask_weight);
  tf.meta["speaker_classes"] = std::to_string(speaker_classes);
  tf.tensors = p.t;
  WriteTensorFile(path, tf);
}

LoadedModel LoadModel(const std::string &path) {
  TensorFile tf = ReadTensorFile(path);
  LoadedModel m;
  m.spec = ParseNetSpec(tf.meta.at("netspec"));
  m.loss.kind = LossKindFromName(tf.meta.at("loss.kind"));
  m.loss.margin = std::stod(tf.meta.at("loss.margin"));
  m.loss.scale = std::stod(tf.meta.at("loss.scale"));
  m.loss.angular_m = std::stoi(tf.meta.at("loss.angular_m"));
  m.loss.multitask_weight = std::stod(tf.meta.at("loss.multitask_weight"));
  m.speaker_classes = std::stoi(tf.meta.at("speaker_classes"));
  m.params.t = tf.tensors;
  return m;
}

}  // namespace svkit
