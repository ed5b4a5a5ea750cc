// tests/golden_tables.hpp
//
// The six builtin architectures encoded cell-for-cell as golden data, checked
// against Builtin() by the unit and acceptance suites.

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

#ifndef SVKIT_TESTS_GOLDEN_TABLES_HPP
#define SVKIT_TESTS_GOLDEN_TABLES_HPP

#include <string>
#include <vector>

#include "svkit/netspec.hpp"

namespace svkit_test {

struct GoldenRow {
  int index;
  const char *kind;       // KindName() string
  const char *f1, *f2, *f3;  // context factors ("" = none)
  const char *from;       // comma-separated skip inputs ("" = none)
  int size;               // 0 = class count (output layer)
  int inner;              // 0 = none
};

struct GoldenBranch {
  const char *name;
  std::vector<GoldenRow> rows;
};

struct GoldenArch {
  const char *name;
  std::vector<GoldenBranch> branches;
  const char *tap_branch;
  int tap_layer;
  int tap_size;       // embedding dimension
  int pooling_size;   // 2 x frame width at the pooling layer
};

inline const std::vector<GoldenArch> &GoldenArchs() {
  using R = GoldenRow;
  static const std::vector<GoldenArch> archs = {
      {"etdnn",
       {{"xvec",
         {
             R{1, "tdnn", "t-2:t+2", "", "", "", 512, 0},
             R{2, "dense", "", "", "", "", 512, 0},
             R{3, "tdnn", "t-2,t,t+2", "", "", "", 512, 0},
             R{4, "dense", "", "", "", "", 512, 0},
             R{5, "tdnn", "t-3:t+3", "", "", "", 512, 0},
             R{6, "dense", "", "", "", "", 512, 0},
             R{7, "tdnn", "t-4,t,t+4", "", "", "", 512, 0},
             R{8, "dense", "", "", "", "", 512, 0},
             R{9, "dense", "", "", "", "", 512, 0},
             R{10, "dense", "", "", "", "", 1500, 0},
             R{11, "pooling", "", "", "", "", 3000, 0},
             R{12, "dense", "", "", "", "", 512, 0},
             R{13, "dense", "", "", "", "", 512, 0},
             R{14, "output_softmax", "", "", "", "", 0, 0},
         }}},
       "xvec", 12, 512, 3000},
      {"ftdnn",
       {{"xvec",
         {
             R{1, "tdnn", "t-2:t+2", "", "", "", 512, 0},
             R{2, "ftdnn", "t-2,t", "t,t+2", "", "", 1024, 256},
             R{3, "ftdnn", "t", "t", "", "", 1024, 256},
             R{4, "ftdnn", "t-3,t", "t,t+3", "", "", 1024, 256},
             R{5, "ftdnn", "t", "t", "", "3", 1024, 256},
             R{6, "ftdnn", "t-3,t", "t,t+3", "", "", 1024, 256},
             R{7, "ftdnn", "t-3,t", "t,t+3", "", "2,4", 1024, 256},
             R{8, "ftdnn", "t-3,t", "t,t+3", "", "", 1024, 256},
             R{9, "ftdnn", "t-3,t", "t,t+3", "", "4,6,8", 1024, 256},
             R{10, "dense", "", "", "", "", 2048, 0},
             R{11, "pooling", "", "", "", "", 4096, 0},
             R{12, "dense", "", "", "", "", 1024, 0},
             R{13, "dense", "", "", "", "", 1024, 0},
             R{14, "output_softmax", "", "", "", "", 0, 0},
         }}},
       "xvec", 12, 1024, 4096},
      {"eftdnn",
       {{"xvec",
         {
             R{1, "tdnn", "t-2:t+2", "", "", "", 512, 0},
             R{2, "dense", "", "", "", "", 512, 0},
             R{3, "ftdnn", "t-3,t-1", "t-1,t+1", "t+1,t+3", "", 1024, 256},
             R{4, "dense", "", "", "", "", 1024, 0},
             R{5, "ftdnn", "t", "t", "t", "", 1024, 256},
             R{6, "dense", "", "", "", "", 1024, 0},
             R{7, "ftdnn", "t-5,t-2", "t-2,t+1", "t+1,t+4", "", 1024, 256},
             R{8, "dense", "", "", "", "", 1024, 0},
             R{9, "ftdnn", "t", "t", "t", "5", 1024, 256},
             R{10, "dense", "", "", "", "", 1024, 0},
             R{11, "ftdnn", "t-5,t-2", "t-2,t+1", "t+1,t+4", "", 1024, 256},
             R{12, "dense", "", "", "", "", 1024, 0},
             R{13, "ftdnn", "t-5,t-2", "t-2,t+1", "t+1,t+4", "3,7", 1024, 256},
             R{14, "dense", "", "", "", "", 1024, 0},
             R{15, "ftdnn", "t-5,t-2", "t-2,t+1", "t+1,t+4", "", 1024, 256},
             R{16, "dense", "", "", "", "", 1024, 0},
             R{17, "ftdnn", "t", "t", "t", "7,11,15", 1024, 256},
             R{18, "dense", "", "", "", "", 2048, 0},
             R{19, "dense", "", "", "", "", 2048, 0},
             R{20, "dense", "", "", "", "", 2048, 0},
             R{21, "pooling", "", "", "", "", 4096, 0},
             R{22, "dense", "", "", "", "", 1024, 0},
             R{23, "dense", "", "", "", "", 1024, 0},
             R{24, "output_softmax", "", "", "", "", 0, 0},
         }}},
       "xvec", 22, 1024, 4096},
      {"resnet",
       {{"xvec",
         {
             R{1, "resnet_block_stack", "", "", "", "", 512, 0},
             R{2, "dense", "", "", "", "", 512, 0},
             R{3, "dense", "", "", "", "", 1000, 0},
             R{4, "pooling", "", "", "", "", 2000, 0},
             R{5, "dense", "", "", "", "", 512, 0},
             R{6, "dense", "", "", "", "", 512, 0},
             R{7, "output_softmax", "", "", "", "", 0, 0},
         }}},
       "xvec", 5, 512, 2000},
      {"multitask",
       {{"xvec",
         {
             R{1, "tdnn", "t-2:t+2", "", "", "", 512, 0},
             R{2, "tdnn", "t", "", "", "", 512, 0},
             R{3, "tdnn", "t-2,t,t+2", "", "", "", 512, 0},
             R{4, "tdnn", "t", "", "", "", 512, 0},
             R{5, "tdnn", "t-3,t,t+3", "", "", "", 512, 0},
             R{6, "tdnn", "t", "", "", "", 512, 0},
             R{7, "tdnn", "t-4,t,t+4", "", "", "", 512, 0},
             R{8, "tdnn", "t", "", "", "", 512, 0},
             R{9, "tdnn", "t", "", "", "", 512, 0},
             R{10, "tdnn", "t", "", "", "", 1500, 0},
             R{11, "pooling", "", "", "", "", 3000, 0},
             R{12, "dense", "", "", "", "", 512, 0},
             R{13, "dense", "", "", "", "", 512, 0},
             R{14, "output_softmax", "", "", "", "", 0, 0},
         }},
        {"asr",
         {
             R{1, "tdnn", "t-2:t+2", "", "", "", 512, 0},
             R{2, "tdnn", "t-2,t,t+2", "", "", "", 512, 0},
             R{3, "tdnn", "t-3,t,t+3", "", "", "", 512, 0},
             R{4, "tdnn", "t", "", "", "", 512, 0},
             R{5, "tdnn", "t", "", "", "", 512, 0},
             R{6, "tdnn", "t", "", "", "", 512, 0},
             R{7, "tdnn", "t", "", "", "", 512, 0},
             R{8, "output_softmax", "", "", "", "", 0, 0},
         }}},
       "xvec", 12, 512, 3000},
      {"cvector",
       {{"xvec",
         {
             R{1, "tdnn", "t-2:t+2", "", "", "", 512, 0},
             R{2, "tdnn", "t", "", "", "", 512, 0},
             R{3, "tdnn", "t-2,t,t+2", "", "", "", 512, 0},
             R{4, "tdnn", "t", "", "", "", 512, 0},
             R{5, "tdnn", "t-3,t,t+3", "", "", "", 512, 0},
             R{6, "tdnn", "t", "", "", "", 512, 0},
             R{7, "tdnn", "t-4,t,t+4", "", "", "", 512, 0},
             R{8, "tdnn", "t", "", "", "", 512, 0},
             R{9, "tdnn", "t", "", "", "", 512, 0},
             R{10, "tdnn", "t", "", "", "", 1500, 0},
             R{11, "pooling", "", "", "", "", 3256, 0},  // 2 x (1500 + 128)
             R{12, "dense", "", "", "", "", 512, 0},
             R{13, "dense", "", "", "", "", 512, 0},
             R{14, "output_softmax", "", "", "", "", 0, 0},
         }},
        {"asr",
         {
             R{1, "tdnn", "t-2:t+2", "", "", "", 512, 0},
             R{2, "tdnn", "t-2,t,t+2", "", "", "", 512, 0},
             R{3, "tdnn", "t-3,t,t+3", "", "", "", 512, 0},
             R{4, "tdnn", "t", "", "", "", 512, 0},
             R{5, "tdnn", "t", "", "", "", 512, 0},
             R{6, "tdnn", "t", "", "", "", 512, 0},
             R{7, "tdnn", "t", "", "", "", 512, 0},
             R{8, "output_softmax", "", "", "", "", 0, 0},
         }},
        {"am",
         {
             R{1, "tdnn", "t-2:t+2", "", "", "", 650, 0},
             R{2, "tdnn", "t-1:t+1", "", "", "", 650, 0},
             R{3, "tdnn", "t-1:t+1", "", "", "", 650, 0},
             R{4, "tdnn", "t-3,t,t+3", "", "", "", 650, 0},
             R{5, "tdnn", "t-6,t-3,t", "", "", "", 128, 0},
         }}},
       "xvec", 12, 512, 3256},
  };
  return archs;
}

// Renders one parsed context list back to golden notation ("" when empty).
inline std::string ContextsOf(const svkit::LayerSpec &l, size_t factor) {
  if (factor >= l.contexts.size())
    return "";
  return svkit::RenderContext(l.contexts[factor]);
}

inline std::string SkipsOf(const svkit::LayerSpec &l) {
  std::string s;
  for (size_t i = 0; i < l.skip_inputs.size(); i++) {
    if (i > 0)
      s += ',';
    s += std::to_string(l.skip_inputs[i]);
  }
  return s;
}

// Compares Builtin(arch.name) against the golden cells.  Returns a list of
// mismatch descriptions; empty means the architecture matches cell-for-cell.
inline std::vector<std::string> CheckGoldenArch(const GoldenArch &g) {
  std::vector<std::string> bad;
  auto mism = [&](const std::string &what) { bad.push_back(g.name + (": " + what)); };
  svkit::NetSpec n = svkit::Builtin(g.name);
  if (n.branches.size() != g.branches.size())
    mism("branch count " + std::to_string(n.branches.size()));
  for (const auto &gb : g.branches) {
    const svkit::Branch *b = n.FindBranch(gb.name);
    if (b == nullptr) {
      mism(std::string("missing branch ") + gb.name);
      continue;
    }
    if (b->layers.size() != gb.rows.size()) {
      mism(std::string(gb.name) + " layer count " +
           std::to_string(b->layers.size()) + " != " +
           std::to_string(gb.rows.size()));
      continue;
    }
    for (size_t i = 0; i < gb.rows.size(); i++) {
      const GoldenRow &r = gb.rows[i];
      const svkit::LayerSpec &l = b->layers[i];
      std::string at = std::string(gb.name) + " layer " + std::to_string(r.index);
      if (l.index != r.index)
        mism(at + " index");
      if (svkit::KindName(l.kind) != r.kind)
        mism(at + " kind " + svkit::KindName(l.kind) + " != " + r.kind);
      if (ContextsOf(l, 0) != r.f1)
        mism(at + " f1 '" + ContextsOf(l, 0) + "' != '" + r.f1 + "'");
      if (ContextsOf(l, 1) != r.f2)
        mism(at + " f2 '" + ContextsOf(l, 1) + "' != '" + r.f2 + "'");
      if (ContextsOf(l, 2) != r.f3)
        mism(at + " f3 '" + ContextsOf(l, 2) + "' != '" + r.f3 + "'");
      if (SkipsOf(l) != r.from)
        mism(at + " from '" + SkipsOf(l) + "' != '" + r.from + "'");
      if (l.size != r.size)
        mism(at + " size " + std::to_string(l.size));
      if (l.inner_size != r.inner)
        mism(at + " inner " + std::to_string(l.inner_size));
    }
  }
  if (n.tap.branch != g.tap_branch || n.tap.layer != g.tap_layer)
    mism("tap " + n.tap.branch + " " + std::to_string(n.tap.layer));
  const svkit::Branch *tb = n.FindBranch(g.tap_branch);
  if (tb != nullptr && tb->layers[g.tap_layer - 1].size != g.tap_size)
    mism("tap size " + std::to_string(tb->layers[g.tap_layer - 1].size));
  return bad;
}

}  // namespace svkit_test

#endif  // SVKIT_TESTS_GOLDEN_TABLES_HPP
