// src/network.cpp
//
// Compiles a NetSpec into an executable layer graph and implements the
// forward and backward passes for every layer kind.

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

namespace svkit {

namespace {

using Channels = std::vector<Matrix>;

ContextSpec IdentityContext() { return ContextSpec{{0}}; }

void SpliceBackward(const Matrix &d_out, const ContextSpec &ctx, Matrix *d_in) {
  const long t_len = d_in->rows();
  const long d = d_in->cols();
  for (long t = 0; t < d_out.rows(); t++) {
    for (size_t i = 0; i < ctx.offsets.size(); i++) {
      long src = std::clamp<long>(t + ctx.offsets[i], 0, t_len - 1);
      d_in->row(src) += d_out.block(t, static_cast<long>(i) * d, 1, d);
    }
  }
}

// ------------------------------------------------------------ 3x3 conv

int ConvOutDim(int f, int stride) { return (f - 1) / stride + 1; }

Matrix Im2Col(const Channels &in, int stride_f) {
  const long t_len = in[0].rows(), f_len = in[0].cols();
  const long cin = static_cast<long>(in.size());
  const long f_out = ConvOutDim(static_cast<int>(f_len), stride_f);
  Matrix col = Matrix::Zero(cin * 9, t_len * f_out);
  for (long c = 0; c < cin; c++) {
    const Matrix &x = in[c];
    for (int dt = -1; dt <= 1; dt++) {
      for (int df = -1; df <= 1; df++) {
        long row = c * 9 + (dt + 1) * 3 + (df + 1);
        for (long t = 0; t < t_len; t++) {
          long ts = t + dt;
          if (ts < 0 || ts >= t_len)
            continue;
          for (long fo = 0; fo < f_out; fo++) {
            long fs = fo * stride_f + df;
            if (fs < 0 || fs >= f_len)
              continue;
            col(row, t * f_out + fo) = x(ts, fs);
          }
        }
      }
    }
  }
  return col;
}

void Col2ImAdd(const Matrix &d_col, int stride_f, Channels *d_in) {
  const long t_len = (*d_in)[0].rows(), f_len = (*d_in)[0].cols();
  const long cin = static_cast<long>(d_in->size());
  const long f_out = ConvOutDim(static_cast<int>(f_len), stride_f);
  for (long c = 0; c < cin; c++) {
    Matrix &x = (*d_in)[c];
    for (int dt = -1; dt <= 1; dt++) {
      for (int df = -1; df <= 1; df++) {
        long row = c * 9 + (dt + 1) * 3 + (df + 1);
        for (long t = 0; t < t_len; t++) {
          long ts = t + dt;
          if (ts < 0 || ts >= t_len)
            continue;
          for (long fo = 0; fo < f_out; fo++) {
            long fs = fo * stride_f + df;
            if (fs < 0 || fs >= f_len)
              continue;
            x(ts, fs) += d_col(row, t * f_out + fo);
          }
        }
      }
    }
  }
}

struct ConvCache {
  Matrix col;        // im2col of the input
  Channels pre;      // pre-activation output channels
  long in_t = 0, in_f = 0;
  int stride = 1;
};

Channels ConvForward(const Channels &in, const Matrix &k, const Vector &b,
                     int stride_f, ConvCache *cache) {
  const long t_len = in[0].rows(), f_len = in[0].cols();
  const long f_out = ConvOutDim(static_cast<int>(f_len), stride_f);
  Matrix col = Im2Col(in, stride_f);
  Matrix out = k * col;  // cout x (t*f_out)
  Channels res(k.rows());
  for (long c = 0; c < k.rows(); c++) {
    res[c].resize(t_len, f_out);
    for (long t = 0; t < t_len; t++)
      res[c].row(t) =
          out.block(c, t * f_out, 1, f_out).array() + b[c];
  }
  if (cache != nullptr) {
    cache->col = std::move(col);
    cache->pre = res;
    cache->in_t = t_len;
    cache->in_f = f_len;
    cache->stride = stride_f;
  }
  return res;
}

void ConvBackward(const Channels &d_out, const Matrix &k, const ConvCache &cache,
                  Channels *d_in, Matrix *d_k, Vector *d_b) {
  const long f_out = d_out[0].cols(), t_len = d_out[0].rows();
  Matrix d_out_mat(k.rows(), t_len * f_out);
  for (long c = 0; c < k.rows(); c++) {
    for (long t = 0; t < t_len; t++)
      d_out_mat.block(c, t * f_out, 1, f_out) = d_out[c].row(t);
    (*d_b)[c] += d_out[c].sum();
  }
  *d_k += d_out_mat * cache.col.transpose();
  if (d_in != nullptr) {
    Matrix d_col = k.transpose() * d_out_mat;
    Col2ImAdd(d_col, cache.stride, d_in);
  }
}

Channels ReluChannels(const Channels &in) {
  Channels out(in.size());
  for (size_t i = 0; i < in.size(); i++)
    out[i] = in[i].cwiseMax(0.0);
  return out;
}

void ReluBackwardChannels(const Channels &pre, Channels *d) {
  for (size_t i = 0; i < pre.size(); i++)
    (*d)[i] = (*d)[i].cwiseProduct(
        (pre[i].array() > 0.0).cast<double>().matrix());
}

Channels MakeZeroLike(long channels, long t_len, long f_len) {
  Channels c(channels);
  for (auto &m : c)
    m = Matrix::Zero(t_len, f_len);
  return c;
}

}  // namespace

// ------------------------------------------------------------ compiled model

namespace {

struct ResnetShape {
  int channels[4] = {0, 0, 0, 0};
  int freq[6] = {0, 0, 0, 0, 0, 0};  // after conv0 and each stage
  int flat = 0;
  int out = 0;  // projection size
};

struct CompiledLayer {
  LayerSpec spec;
  int in_dim = 0;   // frame width after skip concat
  int out_dim = 0;
  std::string prefix;  // canonical param prefix "<branch>.<idx>."
  ResnetShape resnet;
};

struct CompiledBranch {
  std::string name;
  std::vector<CompiledLayer> layers;
  int pooling_idx = 0;   // 1-based, 0 = none
  bool has_output = false;
  int head_layer = 0;    // layer whose post-activation feeds the output
};

}  // namespace

struct BlockCache {
  ConvCache c1, c2;
  Channels block_in;
  Channels sum_pre;  // shortcut + conv2 output, before the final relu
};

struct ResnetLayerCache {
  ConvCache conv0;
  std::vector<BlockCache> blocks;
  Matrix flat;      // T x flat_dim
  Matrix proj_pre;  // T x out
};

struct LayerCache {
  Matrix input;                    // post skip-concat
  Matrix pre;                      // pre-activation
  Matrix post;                     // post-activation
  std::vector<Matrix> factor_in;   // ftdnn inputs per factor
  std::unique_ptr<ResnetLayerCache> resnet;
};

struct BranchTrace {
  std::vector<LayerCache> layers;
  Matrix pool_in;  // pooling input incl. concatenated columns
};

struct Trace {
  std::map<std::string, BranchTrace> branches;
  Matrix feats;
};

struct Network::Impl {
  std::vector<CompiledBranch> branches;  // in evaluation order
  std::map<std::string, int> branch_index;
  int speaker_classes = 0;
  int concat_extra = 0;  // columns appended to the tap branch pooling input

  const CompiledBranch &Get(const std::string &name) const {
    auto it = branch_index.find(name);
    if (it == branch_index.end())
      throw ConfigError("no branch named '" + name + "'");
    return branches[it->second];
  }
};

Network::~Network() = default;
Network::Network(Network &&) noexcept = default;

Network::Network(NetSpec spec, int input_dim, int speaker_classes)
    : spec_(std::move(spec)), input_dim_(input_dim) {
  impl_ = std::make_unique<Impl>();
  impl_->speaker_classes = speaker_classes;

  // Canonical prefixes for shared layers (first-declared branch wins).
  std::map<std::pair<std::string, int>, std::string> canon;
  for (const auto &sh : spec_.shared_layers)
    canon[{sh.branch_b, sh.layer}] =
        sh.branch_a + "." + std::to_string(sh.layer) + ".";

  // Evaluation order: concat-source branch first so its frame output is
  // available when the tap branch pools.
  std::vector<const Branch *> order;
  if (spec_.concat_into_pooling)
    order.push_back(&spec_.GetBranch(spec_.concat_into_pooling->branch));
  for (const auto &b : spec_.branches) {
    if (std::find(order.begin(), order.end(), &b) == order.end())
      order.push_back(&b);
  }

  for (const Branch *bp : order) {
    CompiledBranch cb;
    cb.name = bp->name;
    std::vector<int> out_dims(bp->layers.size() + 1, 0);
    out_dims[0] = input_dim_;
    for (const auto &l : bp->layers) {
      CompiledLayer cl;
      cl.spec = l;
      auto it = canon.find({bp->name, l.index});
      cl.prefix = it != canon.end()
                      ? it->second
                      : bp->name + "." + std::to_string(l.index) + ".";
      cl.in_dim = out_dims[l.index - 1];
      for (int s : l.skip_inputs)
        cl.in_dim += out_dims[s];
      switch (l.kind) {
        case LayerKind::kPooling: {
          cb.pooling_idx = l.index;
          int extra = 0;
          if (spec_.concat_into_pooling && bp->name == spec_.tap.branch) {
            const auto &src = spec_.GetBranch(spec_.concat_into_pooling->branch);
            extra = src.layers[spec_.concat_into_pooling->layer - 1].size;
            impl_->concat_extra = extra;
          }
          cl.out_dim = 2 * (cl.in_dim + extra);
          if (l.size != 0 && l.size != cl.out_dim)
            throw ConfigError("branch " + bp->name + " layer " +
                              std::to_string(l.index) + ": pooling size " +
                              std::to_string(l.size) + " != computed " +
                              std::to_string(cl.out_dim));
          break;
        }
        case LayerKind::kOutputSoftmax: {
          auto oc = spec_.output_classes.find(bp->name);
          cl.out_dim = oc != spec_.output_classes.end() && oc->second > 0
                           ? oc->second
                           : speaker_classes;
          cb.has_output = true;
          cb.head_layer = l.index - 1;
          break;
        }
        case LayerKind::kResnetBlockStack: {
          ResnetShape &rs = cl.resnet;
          ResnetStageChannels(l.size, rs.channels);
          // freq[0] = input, freq[1] = after conv0/stage 1 (stride 1),
          // freq[2..4] = after stages 2..4 (first block stride 2 in freq).
          rs.freq[0] = cl.in_dim;
          rs.freq[1] = cl.in_dim;
          rs.freq[2] = ConvOutDim(rs.freq[1], 2);
          rs.freq[3] = ConvOutDim(rs.freq[2], 2);
          rs.freq[4] = ConvOutDim(rs.freq[3], 2);
          rs.flat = rs.channels[3] * rs.freq[4];
          rs.out = l.size;
          cl.out_dim = l.size;
          break;
        }
        default:
          cl.out_dim = l.size;
      }
      out_dims[l.index] = cl.out_dim;
      cb.layers.push_back(std::move(cl));
    }
    impl_->branch_index[cb.name] = static_cast<int>(impl_->branches.size());
    impl_->branches.push_back(std::move(cb));
  }
}

int Network::EmbeddingDim() const {
  const CompiledBranch &b = impl_->Get(spec_.tap.branch);
  return b.layers[spec_.tap.layer - 1].out_dim;
}

int Network::OutputClasses(const std::string &branch) const {
  const CompiledBranch &b = impl_->Get(branch);
  if (!b.has_output)
    throw ConfigError("branch " + branch + " has no output layer");
  return b.layers.back().out_dim;
}

std::string Network::OutWeightName(const std::string &branch) const {
  const CompiledBranch &b = impl_->Get(branch);
  if (!b.has_output)
    throw ConfigError("branch " + branch + " has no output layer");
  return b.layers.back().prefix + "W";
}

std::string Network::OutBiasName(const std::string &branch) const {
  const CompiledBranch &b = impl_->Get(branch);
  return b.layers.back().prefix + "b";
}

// ------------------------------------------------------------------ init

Params Network::Init(std::uint64_t seed) const {
  Params p;
  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  auto add_affine = [&](const std::string &prefix, int out, int in) {
    if (p.t.count(prefix + "W"))
      return;  // shared layer already initialized
    Matrix w(out, in);
    double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index r = 0; r < w.rows(); r++)
      for (Eigen::Index c = 0; c < w.cols(); c++)
        w(r, c) = scale * gauss(rng);
    p.t[prefix + "W"] = std::move(w);
    p.t[prefix + "b"] = Matrix::Zero(out, 1);
  };
  auto add_matrix = [&](const std::string &name, int out, int in) {
    Matrix w(out, in);
    double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (Eigen::Index r = 0; r < w.rows(); r++)
      for (Eigen::Index c = 0; c < w.cols(); c++)
        w(r, c) = scale * gauss(rng);
    p.t[name] = std::move(w);
  };

  for (const auto &b : impl_->branches) {
    for (const auto &l : b.layers) {
      switch (l.spec.kind) {
        case LayerKind::kTdnn:
        case LayerKind::kDense:
        case LayerKind::kEmbeddingTap: {
          int ctx = l.spec.contexts.empty()
                        ? 1
                        : static_cast<int>(l.spec.contexts[0].offsets.size());
          add_affine(l.prefix, l.out_dim, l.in_dim * ctx);
          break;
        }
        case LayerKind::kFtdnn: {
          if (p.t.count(l.prefix + "f1"))
            break;
          int cur = l.in_dim;
          int nf = static_cast<int>(l.spec.contexts.size());
          for (int i = 0; i < nf; i++) {
            int ctx = static_cast<int>(l.spec.contexts[i].offsets.size());
            int out = (i + 1 == nf) ? l.out_dim : l.spec.inner_size;
            add_matrix(l.prefix + "f" + std::to_string(i + 1), out, cur * ctx);
            cur = out;
          }
          p.t[l.prefix + "b"] = Matrix::Zero(l.out_dim, 1);
          break;
        }
        case LayerKind::kResnetBlockStack: {
          const ResnetShape &rs = l.resnet;
          add_affine(l.prefix + "conv0.", rs.channels[0], 9);
          int cin = rs.channels[0];
          for (int s = 0; s < 4; s++) {
            for (int blk = 0; blk < kResnetBlocksPerStage[s]; blk++) {
              std::string bp = l.prefix + "s" + std::to_string(s + 1) + "b" +
                               std::to_string(blk) + ".";
              add_affine(bp + "c1.", rs.channels[s], cin * 9);
              add_affine(bp + "c2.", rs.channels[s], rs.channels[s] * 9);
              cin = rs.channels[s];
            }
          }
          add_affine(l.prefix + "proj.", rs.out, rs.flat);
          break;
        }
        case LayerKind::kPooling:
          break;
        case LayerKind::kOutputSoftmax:
          add_affine(l.prefix, l.out_dim, l.in_dim);
          break;
      }
    }
  }
  return p;
}

// ------------------------------------------------------------------ forward

namespace {

const Matrix &ParamM(const Params &p, const std::string &name) {
  auto it = p.t.find(name);
  if (it == p.t.end())
    throw ConfigError("missing parameter tensor " + name);
  return it->second;
}

void ResnetForward(const Params &p, const CompiledLayer &l, const Matrix &x,
                   LayerCache *cache) {
  const ResnetShape &rs = l.resnet;
  auto rc = std::make_unique<ResnetLayerCache>();
  Channels cur = {x};
  cur = ConvForward(cur, ParamM(p, l.prefix + "conv0.W"),
                    ParamM(p, l.prefix + "conv0.b").col(0), 1, &rc->conv0);
  cur = ReluChannels(cur);
  for (int s = 0; s < 4; s++) {
    for (int blk = 0; blk < kResnetBlocksPerStage[s]; blk++) {
      std::string bp =
          l.prefix + "s" + std::to_string(s + 1) + "b" + std::to_string(blk) + ".";
      BlockCache bc;
      bc.block_in = cur;
      int stride = (s > 0 && blk == 0) ? 2 : 1;
      Channels h = ConvForward(cur, ParamM(p, bp + "c1.W"),
                               ParamM(p, bp + "c1.b").col(0), stride, &bc.c1);
      h = ReluChannels(h);
      h = ConvForward(h, ParamM(p, bp + "c2.W"),
                      ParamM(p, bp + "c2.b").col(0), 1, &bc.c2);
      // Shortcut: subsample in frequency, zero-pad missing channels.
      const long t_len = h[0].rows(), f_out = h[0].cols();
      Channels shortcut = MakeZeroLike(static_cast<long>(h.size()), t_len, f_out);
      for (size_t c = 0; c < cur.size() && c < h.size(); c++) {
        if (stride == 1) {
          shortcut[c] = cur[c];
        } else {
          for (long f = 0; f < f_out; f++)
            shortcut[c].col(f) = cur[c].col(f * stride);
        }
      }
      bc.sum_pre.resize(h.size());
      for (size_t c = 0; c < h.size(); c++)
        bc.sum_pre[c] = h[c] + shortcut[c];
      cur = ReluChannels(bc.sum_pre);
      rc->blocks.push_back(std::move(bc));
    }
  }
  // Flatten channels x freq into one per-frame vector, then project.
  const long t_len = cur[0].rows(), f_len = cur[0].cols();
  rc->flat.resize(t_len, static_cast<long>(cur.size()) * f_len);
  for (size_t c = 0; c < cur.size(); c++)
    rc->flat.middleCols(static_cast<long>(c) * f_len, f_len) = cur[c];
  const Matrix &w = ParamM(p, l.prefix + "proj.W");
  const Matrix &b = ParamM(p, l.prefix + "proj.b");
  rc->proj_pre = (rc->flat * w.transpose()).rowwise() + b.col(0).transpose();
  cache->pre = rc->proj_pre;
  cache->post = cache->pre.cwiseMax(0.0);
  cache->resnet = std::move(rc);
}

void ResnetBackward(const Params &p, const CompiledLayer &l,
                    const LayerCache &cache, const Matrix &d_post,
                    Params *grad) {
  const ResnetLayerCache &rc = *cache.resnet;
  Matrix d_pre =
      d_post.cwiseProduct((cache.pre.array() > 0.0).cast<double>().matrix());
  const Matrix &w = ParamM(p, l.prefix + "proj.W");
  grad->t[l.prefix + "proj.W"] += d_pre.transpose() * rc.flat;
  grad->t[l.prefix + "proj.b"].col(0) += d_pre.colwise().sum().transpose();
  Matrix d_flat = d_pre * w;

  const long f_len = rc.blocks.back().sum_pre[0].cols();
  const long t_len = d_flat.rows();
  Channels d_cur(rc.blocks.back().sum_pre.size());
  for (size_t c = 0; c < d_cur.size(); c++)
    d_cur[c] = d_flat.middleCols(static_cast<long>(c) * f_len, f_len);

  for (int s = 3; s >= 0; s--) {
    for (int blk = kResnetBlocksPerStage[s] - 1; blk >= 0; blk--) {
      size_t bi = 0;
      for (int ss = 0; ss < s; ss++)
        bi += kResnetBlocksPerStage[ss];
      bi += blk;
      const BlockCache &bc = rc.blocks[bi];
      std::string bp =
          l.prefix + "s" + std::to_string(s + 1) + "b" + std::to_string(blk) + ".";
      int stride = (s > 0 && blk == 0) ? 2 : 1;
      ReluBackwardChannels(bc.sum_pre, &d_cur);
      // conv2 path
      Channels d_h = MakeZeroLike(static_cast<long>(bc.c2.pre.size()),
                                  bc.c1.pre[0].rows(), bc.c1.pre[0].cols());
      {
        Matrix &dk = grad->t[bp + "c2.W"];
        Vector db = Vector::Zero(dk.rows());
        ConvBackward(d_cur, ParamM(p, bp + "c2.W"), bc.c2, &d_h, &dk, &db);
        grad->t[bp + "c2.b"].col(0) += db;
      }
      ReluBackwardChannels(bc.c1.pre, &d_h);
      Channels d_in = MakeZeroLike(static_cast<long>(bc.block_in.size()),
                                   bc.block_in[0].rows(), bc.block_in[0].cols());
      {
        Matrix &dk = grad->t[bp + "c1.W"];
        Vector db = Vector::Zero(dk.rows());
        ConvBackward(d_h, ParamM(p, bp + "c1.W"), bc.c1, &d_in, &dk, &db);
        grad->t[bp + "c1.b"].col(0) += db;
      }
      // shortcut path
      for (size_t c = 0; c < bc.block_in.size() && c < d_cur.size(); c++) {
        if (stride == 1) {
          d_in[c] += d_cur[c];
        } else {
          for (long f = 0; f < d_cur[c].cols(); f++)
            d_in[c].col(f * stride) += d_cur[c].col(f);
        }
      }
      d_cur = std::move(d_in);
    }
  }
  ReluBackwardChannels(rc.conv0.pre, &d_cur);
  {
    Matrix &dk = grad->t[l.prefix + "conv0.W"];
    Vector db = Vector::Zero(dk.rows());
    ConvBackward(d_cur, ParamM(p, l.prefix + "conv0.W"), rc.conv0, nullptr, &dk,
                 &db);
    grad->t[l.prefix + "conv0.b"].col(0) += db;
  }
  (void)t_len;
}

void StatsPoolBackward(const Matrix &pool_in, const Vector &pooled,
                       const Matrix &d_out_row, Matrix *d_in) {
  const long t_len = pool_in.rows(), d = pool_in.cols();
  Vector d_mean = d_out_row.block(0, 0, 1, d).transpose();
  Vector d_std = d_out_row.block(0, d, 1, d).transpose();
  Vector mean = pool_in.colwise().mean();
  Vector stddev = pooled.tail(d);
  d_in->resize(t_len, d);
  for (long j = 0; j < d; j++) {
    double var = stddev[j] * stddev[j];
    bool floored = var <= kVarFloor * (1.0 + 1e-9);
    for (long t = 0; t < t_len; t++) {
      double g = d_mean[j] / t_len;
      if (!floored)
        g += d_std[j] * (pool_in(t, j) - mean[j]) / (t_len * stddev[j]);
      (*d_in)(t, j) = g;
    }
  }
}

}  // namespace

void TraceDeleter::operator()(Trace *t) const { delete t; }

TracePtr Network::Forward(const Params &p, const Matrix &feats) const {
  if (feats.rows() < 1)
    throw DataError("forward needs at least one frame");
  if (feats.cols() != input_dim_)
    throw DataError("feature dim " + std::to_string(feats.cols()) +
                    " != network input dim " + std::to_string(input_dim_));
  TracePtr tr(new Trace());
  tr->feats = feats;

  for (const auto &b : impl_->branches) {
    BranchTrace bt;
    bt.layers.resize(b.layers.size());
    for (const auto &l : b.layers) {
      LayerCache &lc = bt.layers[l.spec.index - 1];
      const Matrix &prev =
          l.spec.index == 1 ? feats : bt.layers[l.spec.index - 2].post;
      // skip concatenation
      if (l.spec.skip_inputs.empty()) {
        lc.input = prev;
      } else {
        lc.input.resize(prev.rows(), l.in_dim);
        long col = prev.cols();
        lc.input.leftCols(col) = prev;
        for (int s : l.spec.skip_inputs) {
          const Matrix &sk = bt.layers[s - 1].post;
          lc.input.middleCols(col, sk.cols()) = sk;
          col += sk.cols();
        }
      }
      switch (l.spec.kind) {
        case LayerKind::kTdnn:
        case LayerKind::kDense:
        case LayerKind::kEmbeddingTap: {
          ContextSpec ctx =
              l.spec.contexts.empty() ? IdentityContext() : l.spec.contexts[0];
          Matrix s = ctx.offsets.size() == 1 && ctx.offsets[0] == 0
                         ? lc.input
                         : Splice(lc.input, ctx);
          const Matrix &w = ParamM(p, l.prefix + "W");
          const Matrix &bias = ParamM(p, l.prefix + "b");
          if (s.cols() != w.cols())
            throw DataError("branch " + b.name + " layer " +
                            std::to_string(l.spec.index) + ": input width " +
                            std::to_string(s.cols()) + " != weight cols " +
                            std::to_string(w.cols()));
          lc.pre = (s * w.transpose()).rowwise() + bias.col(0).transpose();
          lc.post = lc.pre.cwiseMax(0.0);
          break;
        }
        case LayerKind::kFtdnn: {
          Matrix cur = lc.input;
          lc.factor_in.clear();
          int nf = static_cast<int>(l.spec.contexts.size());
          for (int i = 0; i < nf; i++) {
            lc.factor_in.push_back(cur);
            Matrix s = Splice(cur, l.spec.contexts[i]);
            cur = s * ParamM(p, l.prefix + "f" + std::to_string(i + 1)).transpose();
          }
          lc.pre = cur.rowwise() +
                   ParamM(p, l.prefix + "b").col(0).transpose();
          lc.post = lc.pre.cwiseMax(0.0);
          break;
        }
        case LayerKind::kResnetBlockStack:
          ResnetForward(p, l, lc.input, &lc);
          break;
        case LayerKind::kPooling: {
          if (b.name == spec_.tap.branch && spec_.concat_into_pooling) {
            const auto &src_b = impl_->Get(spec_.concat_into_pooling->branch);
            const Matrix &src_post =
                tr->branches[src_b.name]
                    .layers[spec_.concat_into_pooling->layer - 1]
                    .post;
            if (src_post.rows() != lc.input.rows())
              throw DataError("concat_pool frame count mismatch");
            bt.pool_in.resize(lc.input.rows(),
                              lc.input.cols() + src_post.cols());
            bt.pool_in << lc.input, src_post;
          } else {
            bt.pool_in = lc.input;
          }
          lc.pre = StatsPool(bt.pool_in).transpose();
          lc.post = lc.pre;  // no nonlinearity after pooling
          break;
        }
        case LayerKind::kOutputSoftmax:
          // Logits are computed by the loss; keep the head input visible.
          lc.pre.resize(0, 0);
          lc.post = lc.input;
          break;
      }
    }
    tr->branches[b.name] = std::move(bt);
  }
  return tr;
}

const Matrix &Network::HeadInput(const Trace &tr, const std::string &branch) const {
  const CompiledBranch &b = impl_->Get(branch);
  if (!b.has_output)
    throw ConfigError("branch " + branch + " has no output layer");
  return tr.branches.at(branch).layers[b.head_layer - 1].post;
}

Vector Network::TapPreActivation(const Trace &tr) const {
  const BranchTrace &bt = tr.branches.at(spec_.tap.branch);
  return bt.layers[spec_.tap.layer - 1].pre.row(0).transpose();
}

Vector Network::Pooled(const Trace &tr) const {
  const CompiledBranch &b = impl_->Get(spec_.tap.branch);
  if (b.pooling_idx == 0)
    throw ConfigError("tap branch has no pooling layer");
  return tr.branches.at(b.name).layers[b.pooling_idx - 1].post.row(0).transpose();
}

Matrix Network::Logits(const Params &p, const Trace &tr,
                       const std::string &branch) const {
  const Matrix &head = HeadInput(tr, branch);
  const Matrix &w = ParamM(p, OutWeightName(branch));
  const Matrix &bias = ParamM(p, OutBiasName(branch));
  return (head * w.transpose()).rowwise() + bias.col(0).transpose();
}

// ------------------------------------------------------------------ backward

namespace {

// Gradient accumulation uses operator+= throughout, so every tensor present
// in p must exist (zero-filled) in *grad before backprop starts.
void EnsureShaped(Params *grad, const Params &p) {
  for (const auto &[name, m] : p.t)
    if (grad->t.find(name) == grad->t.end())
      grad->t[name] = Matrix::Zero(m.rows(), m.cols());
}

}  // namespace

void Network::Backward(const Params &p, const Trace &tr,
                       const std::map<std::string, Matrix> &head_grads,
                       Params *grad) const {
  EnsureShaped(grad, p);
  // Gradient flowing into the concat-source branch's tapped layer output.
  Matrix concat_src_grad;

  for (auto it = impl_->branches.rbegin(); it != impl_->branches.rend(); ++it) {
    const CompiledBranch &b = *it;
    const BranchTrace &bt = tr.branches.at(b.name);
    std::vector<Matrix> d_post(b.layers.size());

    bool is_concat_src =
        spec_.concat_into_pooling &&
        b.name == spec_.concat_into_pooling->branch &&
        b.name != spec_.tap.branch;
    if (is_concat_src) {
      if (concat_src_grad.size() == 0)
        continue;  // nothing reached the source branch
      d_post[spec_.concat_into_pooling->layer - 1] = concat_src_grad;
    }
    auto hg = head_grads.find(b.name);
    if (hg != head_grads.end()) {
      if (!b.has_output)
        throw ConfigError("head gradient for branch without output: " + b.name);
      Matrix g = hg->second;
      if (d_post[b.head_layer - 1].size() == 0)
        d_post[b.head_layer - 1] = g;
      else
        d_post[b.head_layer - 1] += g;
    } else if (!is_concat_src) {
      continue;  // branch does not contribute to this loss
    }

    for (int li = static_cast<int>(b.layers.size()); li >= 1; li--) {
      const CompiledLayer &l = b.layers[li - 1];
      const LayerCache &lc = bt.layers[li - 1];
      if (d_post[li - 1].size() == 0)
        continue;
      Matrix d_a = std::move(d_post[li - 1]);
      Matrix d_x;  // gradient w.r.t. lc.input
      switch (l.spec.kind) {
        case LayerKind::kTdnn:
        case LayerKind::kDense:
        case LayerKind::kEmbeddingTap: {
          Matrix d_z = d_a.cwiseProduct(
              (lc.pre.array() > 0.0).cast<double>().matrix());
          ContextSpec ctx =
              l.spec.contexts.empty() ? IdentityContext() : l.spec.contexts[0];
          bool identity = ctx.offsets.size() == 1 && ctx.offsets[0] == 0;
          Matrix s = identity ? lc.input : Splice(lc.input, ctx);
          const Matrix &w = ParamM(p, l.prefix + "W");
          grad->t[l.prefix + "W"] += d_z.transpose() * s;
          grad->t[l.prefix + "b"].col(0) += d_z.colwise().sum().transpose();
          Matrix d_s = d_z * w;
          if (identity) {
            d_x = std::move(d_s);
          } else {
            d_x = Matrix::Zero(lc.input.rows(), lc.input.cols());
            SpliceBackward(d_s, ctx, &d_x);
          }
          break;
        }
        case LayerKind::kFtdnn: {
          Matrix d_z = d_a.cwiseProduct(
              (lc.pre.array() > 0.0).cast<double>().matrix());
          grad->t[l.prefix + "b"].col(0) += d_z.colwise().sum().transpose();
          Matrix d_cur = std::move(d_z);
          int nf = static_cast<int>(l.spec.contexts.size());
          for (int i = nf - 1; i >= 0; i--) {
            const Matrix &w = ParamM(p, l.prefix + "f" + std::to_string(i + 1));
            Matrix s = Splice(lc.factor_in[i], l.spec.contexts[i]);
            grad->t[l.prefix + "f" + std::to_string(i + 1)] +=
                d_cur.transpose() * s;
            Matrix d_s = d_cur * w;
            Matrix d_in = Matrix::Zero(lc.factor_in[i].rows(),
                                       lc.factor_in[i].cols());
            SpliceBackward(d_s, l.spec.contexts[i], &d_in);
            d_cur = std::move(d_in);
          }
          d_x = std::move(d_cur);
          break;
        }
        case LayerKind::kResnetBlockStack:
          ResnetBackward(p, l, lc, d_a, grad);
          d_x.resize(0, 0);  // input features need no gradient
          break;
        case LayerKind::kPooling: {
          Matrix d_pool_in;
          StatsPoolBackward(bt.pool_in, lc.post.row(0).transpose(), d_a,
                            &d_pool_in);
          if (b.name == spec_.tap.branch && spec_.concat_into_pooling) {
            long own = lc.input.cols();
            d_x = d_pool_in.leftCols(own);
            Matrix extra = d_pool_in.rightCols(d_pool_in.cols() - own);
            if (concat_src_grad.size() == 0)
              concat_src_grad = extra;
            else
              concat_src_grad += extra;
          } else {
            d_x = std::move(d_pool_in);
          }
          break;
        }
        case LayerKind::kOutputSoftmax:
          d_x = std::move(d_a);
          break;
      }
      if (d_x.size() == 0)
        continue;
      // Split the input gradient back onto the previous layer and the skips.
      const Matrix &prev_post =
          li == 1 ? tr.feats : bt.layers[li - 2].post;
      long col = prev_post.cols();
      if (li > 1) {
        if (d_post[li - 2].size() == 0)
          d_post[li - 2] = d_x.leftCols(col);
        else
          d_post[li - 2] += d_x.leftCols(col);
      }
      for (int sidx : l.spec.skip_inputs) {
        long width = bt.layers[sidx - 1].post.cols();
        if (d_post[sidx - 1].size() == 0)
          d_post[sidx - 1] = d_x.middleCols(col, width);
        else
          d_post[sidx - 1] += d_x.middleCols(col, width);
        col += width;
      }
    }
  }
}

// ----------------------------------------------------------- combined loss

double Network::ComputeLossAndGrad(const Params &p, const Matrix &feats,
                                   int spk_label,
                                   const std::vector<int> *frame_labels,
                                   const LossConfig &cfg, double anneal_lambda,
                                   Params *grad) const {
  auto tr = Forward(p, feats);
  if (grad != nullptr)
    EnsureShaped(grad, p);
  std::map<std::string, Matrix> head_grads;
  double total = 0.0;

  const std::string &spk_branch = spec_.tap.branch;
  Vector head = HeadInput(*tr, spk_branch).row(0).transpose();
  const Matrix &w = ParamM(p, OutWeightName(spk_branch));
  LossResult lr;
  switch (cfg.kind) {
    case LossKind::kSoftmax:
      lr = SoftmaxCrossEntropy(head, spk_label, w,
                               ParamM(p, OutBiasName(spk_branch)).col(0));
      break;
    case LossKind::kAmSoftmax:
      lr = AmSoftmaxLoss(head, spk_label, w, cfg.margin, cfg.scale);
      break;
    case LossKind::kASoftmax:
      lr = ASoftmaxLoss(head, spk_label, w, cfg.angular_m, anneal_lambda);
      break;
  }
  total += lr.loss;
  if (grad != nullptr) {
    grad->t[OutWeightName(spk_branch)] += lr.d_weights;
    if (lr.d_bias.size() > 0)
      grad->t[OutBiasName(spk_branch)].col(0) += lr.d_bias;
    head_grads[spk_branch] = lr.d_input.transpose();
  }

  // Frame-level phonetic branch (multitask / c-vector training).
  if (cfg.multitask_weight > 0.0 && frame_labels != nullptr) {
    const CompiledBranch *fb = nullptr;
    for (const auto &b : impl_->branches)
      if (b.has_output && b.pooling_idx == 0)
        fb = &b;
    if (fb != nullptr) {
      const Matrix &h = HeadInput(*tr, fb->name);
      const long t_len = h.rows();
      if (static_cast<long>(frame_labels->size()) != t_len)
        throw DataError("frame label count " +
                        std::to_string(frame_labels->size()) +
                        " != frame count " + std::to_string(t_len));
      const Matrix &wf = ParamM(p, OutWeightName(fb->name));
      const Matrix &bf = ParamM(p, OutBiasName(fb->name));
      Matrix logits = (h * wf.transpose()).rowwise() + bf.col(0).transpose();
      double frame_loss = 0.0;
      Matrix d_logits(t_len, logits.cols());
      for (long t = 0; t < t_len; t++) {
        Vector row = logits.row(t).transpose();
        Vector prob = (row.array() - row.maxCoeff()).exp();
        prob /= prob.sum();
        int lab = (*frame_labels)[t];
        frame_loss += -std::log(std::max(prob[lab], 1e-300));
        prob[lab] -= 1.0;
        d_logits.row(t) = prob.transpose();
      }
      frame_loss /= static_cast<double>(t_len);
      total += cfg.multitask_weight * frame_loss;
      if (grad != nullptr) {
        double scale = cfg.multitask_weight / static_cast<double>(t_len);
        grad->t[OutWeightName(fb->name)] += scale * d_logits.transpose() * h;
        grad->t[OutBiasName(fb->name)].col(0) +=
            scale * d_logits.colwise().sum().transpose();
        head_grads[fb->name] = scale * d_logits * wf;
      }
    }
  }

  if (!std::isfinite(total))
    throw NumericalError("non-finite loss");
  if (grad != nullptr)
    Backward(p, *tr, head_grads, grad);
  return total;
}

}  // namespace svkit
