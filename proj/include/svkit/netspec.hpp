// svkit/netspec.hpp
//
// Architecture-description DSL covering TDNN/F-TDNN context splicing, skip
// connections, residual stacks, statistics pooling, multi-branch sharing and
// embedding tap points, plus the six builtin layer graphs.

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

#ifndef SVKIT_NETSPEC_HPP
#define SVKIT_NETSPEC_HPP

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "svkit/common.hpp"

namespace svkit {

// Ordered set of integer frame offsets, e.g. "t-2:t+2" -> {-2,-1,0,1,2}.
struct ContextSpec {
  std::vector<int> offsets;
  bool operator==(const ContextSpec &) const = default;
  int Left() const { return -offsets.front(); }   // may be negative
  int Right() const { return offsets.back(); }
};

ContextSpec ParseContext(const std::string &text);
std::string RenderContext(const ContextSpec &ctx);

enum class LayerKind {
  kTdnn,
  kDense,
  kFtdnn,
  kResnetBlockStack,
  kPooling,
  kEmbeddingTap,  // dense layer doubling as the declared tap point
  kOutputSoftmax,
};

std::string KindName(LayerKind k);

struct LayerSpec {
  int index = 0;  // 1-based ordinal within its branch
  LayerKind kind = LayerKind::kDense;
  std::vector<ContextSpec> contexts;  // up to 3 factor contexts
  std::vector<int> skip_inputs;       // earlier layer indices, concatenated in
  int size = 0;                       // output nodes (0 = class count, resolved later)
  int inner_size = 0;                 // ftdnn bottleneck
  bool operator==(const LayerSpec &) const = default;
};

struct Branch {
  std::string name;
  std::vector<LayerSpec> layers;
  bool operator==(const Branch &) const = default;
};

struct SharedDecl {
  std::string branch_a, branch_b;
  int layer = 0;
  bool operator==(const SharedDecl &) const = default;
};

struct BranchLayerRef {
  std::string branch;
  int layer = 0;
  bool operator==(const BranchLayerRef &) const = default;
};

struct NetSpec {
  std::string name;
  std::vector<Branch> branches;
  std::vector<SharedDecl> shared_layers;
  std::optional<BranchLayerRef> concat_into_pooling;
  BranchLayerRef tap;
  std::map<std::string, int> output_classes;  // branch -> class count
  bool operator==(const NetSpec &) const = default;

  const Branch &GetBranch(const std::string &name) const;
  const Branch *FindBranch(const std::string &name) const;
};

NetSpec ParseNetSpec(const std::string &text);
std::string RenderNetSpec(const NetSpec &n);

// The six architectures: etdnn, ftdnn, eftdnn, resnet, multitask, cvector.
NetSpec Builtin(const std::string &name);
std::vector<std::string> BuiltinNames();

struct ValidationReport {
  std::vector<std::string> violations;
  bool ok() const { return violations.empty(); }
};

ValidationReport Validate(const NetSpec &n);

struct ReceptiveField {
  int left = 0, right = 0;
};

// Total frame context consumed before pooling (whole branch if no pooling).
ReceptiveField ComputeReceptiveField(const NetSpec &n, const std::string &branch);

// ResNet34 stack shape shared with the embedder: blocks per stage and the
// channel ramp, scaled so the last stage has `size` channels.
inline const int kResnetBlocksPerStage[4] = {3, 4, 6, 3};
inline void ResnetStageChannels(int size, int out[4]) {
  out[0] = size / 8;
  out[1] = size / 4;
  out[2] = size / 2;
  out[3] = size;
}

}  // namespace svkit

#endif  // SVKIT_NETSPEC_HPP
