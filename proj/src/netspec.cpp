// src/netspec.cpp

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

#include "svkit/netspec.hpp"

#include <algorithm>
#include <sstream>

namespace svkit {

namespace {

[[noreturn]] void ParseFail(const std::string &what, const std::string &where) {
  throw ConfigError("netspec parse error: " + what +
                    (where.empty() ? "" : " at '" + where + "'"));
}

// One term of a context expression: "t", "t+3" or "t-3".
int ParseTerm(const std::string &term) {
  if (term == "t")
    return 0;
  if (term.size() < 2 || term[0] != 't' || (term[1] != '+' && term[1] != '-'))
    ParseFail("bad context term", term);
  try {
    size_t used = 0;
    int v = std::stoi(term.substr(2), &used);
    if (used != term.size() - 2)
      ParseFail("bad context term", term);
    return term[1] == '-' ? -v : v;
  } catch (const std::logic_error &) {
    ParseFail("bad context term", term);
  }
}

std::vector<std::string> SplitOn(const std::string &s, char sep) {
  std::vector<std::string> parts;
  std::string cur;
  for (char c : s) {
    if (c == sep) {
      parts.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  parts.push_back(cur);
  return parts;
}

std::vector<std::string> Tokenize(const std::string &line) {
  std::istringstream is(line);
  std::vector<std::string> toks;
  std::string t;
  while (is >> t)
    toks.push_back(t);
  return toks;
}

}  // namespace

ContextSpec ParseContext(const std::string &text) {
  std::string s;
  for (char c : text)
    if (!std::isspace(static_cast<unsigned char>(c)))
      s += c;
  if (s.empty())
    ParseFail("empty context", text);
  ContextSpec ctx;
  if (s.find(':') != std::string::npos) {
    auto parts = SplitOn(s, ':');
    if (parts.size() != 2)
      ParseFail("range context needs exactly two endpoints", s);
    int lo = ParseTerm(parts[0]), hi = ParseTerm(parts[1]);
    if (lo > hi)
      ParseFail("decreasing range", s);
    for (int o = lo; o <= hi; o++)
      ctx.offsets.push_back(o);
  } else {
    for (const auto &part : SplitOn(s, ',')) {
      int o = ParseTerm(part);
      if (!ctx.offsets.empty() && o == ctx.offsets.back())
        ParseFail("duplicate offset", part);
      if (!ctx.offsets.empty() && o < ctx.offsets.back())
        ParseFail("offsets must be strictly increasing", part);
      ctx.offsets.push_back(o);
    }
  }
  return ctx;
}

std::string RenderContext(const ContextSpec &ctx) {
  auto term = [](int o) {
    if (o == 0)
      return std::string("t");
    return "t" + std::string(o > 0 ? "+" : "-") + std::to_string(std::abs(o));
  };
  const auto &off = ctx.offsets;
  bool consecutive = off.size() >= 3;
  for (size_t i = 1; i < off.size() && consecutive; i++)
    consecutive = (off[i] == off[i - 1] + 1);
  if (consecutive)
    return term(off.front()) + ":" + term(off.back());
  std::string s;
  for (size_t i = 0; i < off.size(); i++)
    s += (i ? "," : "") + term(off[i]);
  return s;
}

std::string KindName(LayerKind k) {
  switch (k) {
    case LayerKind::kTdnn: return "tdnn";
    case LayerKind::kDense: return "dense";
    case LayerKind::kFtdnn: return "ftdnn";
    case LayerKind::kResnetBlockStack: return "resnet_block_stack";
    case LayerKind::kPooling: return "pooling";
    case LayerKind::kEmbeddingTap: return "embedding_tap";
    case LayerKind::kOutputSoftmax: return "output_softmax";
  }
  return "?";
}

static bool KindFromName(const std::string &s, LayerKind *out) {
  for (LayerKind k : {LayerKind::kTdnn, LayerKind::kDense, LayerKind::kFtdnn,
                      LayerKind::kResnetBlockStack, LayerKind::kPooling,
                      LayerKind::kEmbeddingTap, LayerKind::kOutputSoftmax}) {
    if (KindName(k) == s) {
      *out = k;
      return true;
    }
  }
  return false;
}

const Branch *NetSpec::FindBranch(const std::string &name) const {
  for (const auto &b : branches)
    if (b.name == name)
      return &b;
  return nullptr;
}

const Branch &NetSpec::GetBranch(const std::string &name) const {
  const Branch *b = FindBranch(name);
  if (b == nullptr)
    throw ConfigError("no branch named '" + name + "'");
  return *b;
}

NetSpec ParseNetSpec(const std::string &text) {
  NetSpec n;
  Branch *cur = nullptr;
  bool tap_set = false;
  std::istringstream is(text);
  std::string line;
  while (std::getline(is, line)) {
    auto hash = line.find('#');
    if (hash != std::string::npos)
      line = line.substr(0, hash);
    auto toks = Tokenize(line);
    if (toks.empty())
      continue;
    const std::string &head = toks[0];
    if (head == "name") {
      if (toks.size() != 2)
        ParseFail("name takes one identifier", line);
      n.name = toks[1];
    } else if (head == "branch") {
      if (toks.size() != 2)
        ParseFail("branch takes one identifier", line);
      if (n.FindBranch(toks[1]) != nullptr)
        ParseFail("duplicate branch", toks[1]);
      n.branches.push_back(Branch{toks[1], {}});
      cur = &n.branches.back();
    } else if (head == "share") {
      if (toks.size() != 4)
        ParseFail("share takes <branchA> <branchB> <layer>", line);
      n.shared_layers.push_back({toks[1], toks[2], std::stoi(toks[3])});
    } else if (head == "concat_pool") {
      if (toks.size() != 3)
        ParseFail("concat_pool takes <branch> <layer>", line);
      n.concat_into_pooling = BranchLayerRef{toks[1], std::stoi(toks[2])};
    } else if (head == "tap") {
      if (toks.size() != 3)
        ParseFail("tap takes <branch> <layer>", line);
      if (tap_set)
        ParseFail("duplicate tap", line);
      n.tap = BranchLayerRef{toks[1], std::stoi(toks[2])};
      tap_set = true;
    } else if (head == "classes") {
      if (toks.size() != 3)
        ParseFail("classes takes <branch> <n>", line);
      n.output_classes[toks[1]] = std::stoi(toks[2]);
    } else if (std::isdigit(static_cast<unsigned char>(head[0]))) {
      if (cur == nullptr)
        ParseFail("layer line before any 'branch' header", line);
      if (toks.size() < 2)
        ParseFail("layer line needs <index> <kind>", line);
      LayerSpec ls;
      ls.index = std::stoi(head);
      int expected = static_cast<int>(cur->layers.size()) + 1;
      if (ls.index != expected)
        ParseFail("layer index must be " + std::to_string(expected), head);
      if (!KindFromName(toks[1], &ls.kind))
        ParseFail("unknown layer kind", toks[1]);
      for (size_t i = 2; i < toks.size(); i++) {
        auto eq = toks[i].find('=');
        if (eq == std::string::npos)
          ParseFail("expected key=value", toks[i]);
        std::string key = toks[i].substr(0, eq), val = toks[i].substr(eq + 1);
        if (key == "f1" || key == "f2" || key == "f3") {
          size_t fi = key[1] - '1';
          if (ls.contexts.size() != fi)
            ParseFail("context factors must appear in order f1,f2,f3", toks[i]);
          ls.contexts.push_back(ParseContext(val));
        } else if (key == "size") {
          ls.size = std::stoi(val);
        } else if (key == "inner") {
          ls.inner_size = std::stoi(val);
        } else if (key == "from") {
          for (const auto &p : SplitOn(val, ',')) {
            int ref = std::stoi(p);
            if (ref < 1 || ref >= ls.index)
              ParseFail("skip reference to layer " + p +
                        " from layer " + head + " is not strictly earlier", line);
            ls.skip_inputs.push_back(ref);
          }
        } else {
          ParseFail("unknown key", key);
        }
      }
      if ((ls.inner_size != 0) != (ls.kind == LayerKind::kFtdnn))
        ParseFail("inner= is required for ftdnn layers and only those", line);
      if (ls.kind == LayerKind::kEmbeddingTap) {
        if (tap_set)
          ParseFail("duplicate tap", line);
        n.tap = BranchLayerRef{cur->name, ls.index};
        tap_set = true;
      }
      cur->layers.push_back(std::move(ls));
    } else {
      ParseFail("unknown directive", head);
    }
  }
  return n;
}

std::string RenderNetSpec(const NetSpec &n) {
  std::ostringstream os;
  if (!n.name.empty())
    os << "name " << n.name << "\n";
  for (const auto &b : n.branches) {
    os << "branch " << b.name << "\n";
    for (const auto &l : b.layers) {
      os << l.index << ' ' << KindName(l.kind);
      for (size_t i = 0; i < l.contexts.size(); i++)
        os << " f" << (i + 1) << '=' << RenderContext(l.contexts[i]);
      if (l.size != 0)
        os << " size=" << l.size;
      if (l.inner_size != 0)
        os << " inner=" << l.inner_size;
      if (!l.skip_inputs.empty()) {
        os << " from=";
        for (size_t i = 0; i < l.skip_inputs.size(); i++)
          os << (i ? "," : "") << l.skip_inputs[i];
      }
      os << "\n";
    }
  }
  for (const auto &s : n.shared_layers)
    os << "share " << s.branch_a << ' ' << s.branch_b << ' ' << s.layer << "\n";
  if (n.concat_into_pooling)
    os << "concat_pool " << n.concat_into_pooling->branch << ' '
       << n.concat_into_pooling->layer << "\n";
  if (n.tap.layer != 0) {
    const Branch *b = n.FindBranch(n.tap.branch);
    bool implicit = b != nullptr && n.tap.layer <= static_cast<int>(b->layers.size()) &&
                    b->layers[n.tap.layer - 1].kind == LayerKind::kEmbeddingTap;
    if (!implicit)
      os << "tap " << n.tap.branch << ' ' << n.tap.layer << "\n";
  }
  for (const auto &[branch, classes] : n.output_classes)
    os << "classes " << branch << ' ' << classes << "\n";
  return os.str();
}

// ---------------------------------------------------------------- builtins

namespace {

const char *kEtdnn = R"(name etdnn
branch xvec
1 tdnn f1=t-2:t+2 size=512
2 dense size=512
3 tdnn f1=t-2,t,t+2 size=512
4 dense size=512
5 tdnn f1=t-3:t+3 size=512
6 dense size=512
7 tdnn f1=t-4,t,t+4 size=512
8 dense size=512
9 dense size=512
10 dense size=1500
11 pooling size=3000
12 dense size=512
13 dense size=512
14 output_softmax
tap xvec 12
)";

const char *kFtdnn = R"(name ftdnn
branch xvec
1 tdnn f1=t-2:t+2 size=512
2 ftdnn f1=t-2,t f2=t,t+2 size=1024 inner=256
3 ftdnn f1=t f2=t size=1024 inner=256
4 ftdnn f1=t-3,t f2=t,t+3 size=1024 inner=256
5 ftdnn f1=t f2=t size=1024 inner=256 from=3
6 ftdnn f1=t-3,t f2=t,t+3 size=1024 inner=256
7 ftdnn f1=t-3,t f2=t,t+3 size=1024 inner=256 from=2,4
8 ftdnn f1=t-3,t f2=t,t+3 size=1024 inner=256
9 ftdnn f1=t-3,t f2=t,t+3 size=1024 inner=256 from=4,6,8
10 dense size=2048
11 pooling size=4096
12 dense size=1024
13 dense size=1024
14 output_softmax
tap xvec 12
)";

const char *kEftdnn = R"(name eftdnn
branch xvec
1 tdnn f1=t-2:t+2 size=512
2 dense size=512
3 ftdnn f1=t-3,t-1 f2=t-1,t+1 f3=t+1,t+3 size=1024 inner=256
4 dense size=1024
5 ftdnn f1=t f2=t f3=t size=1024 inner=256
6 dense size=1024
7 ftdnn f1=t-5,t-2 f2=t-2,t+1 f3=t+1,t+4 size=1024 inner=256
8 dense size=1024
9 ftdnn f1=t f2=t f3=t size=1024 inner=256 from=5
10 dense size=1024
11 ftdnn f1=t-5,t-2 f2=t-2,t+1 f3=t+1,t+4 size=1024 inner=256
12 dense size=1024
13 ftdnn f1=t-5,t-2 f2=t-2,t+1 f3=t+1,t+4 size=1024 inner=256 from=3,7
14 dense size=1024
15 ftdnn f1=t-5,t-2 f2=t-2,t+1 f3=t+1,t+4 size=1024 inner=256
16 dense size=1024
17 ftdnn f1=t f2=t f3=t size=1024 inner=256 from=7,11,15
18 dense size=2048
19 dense size=2048
20 dense size=2048
21 pooling size=4096
22 dense size=1024
23 dense size=1024
24 output_softmax
tap xvec 22
)";

const char *kResnet = R"(name resnet
branch xvec
1 resnet_block_stack size=512
2 dense size=512
3 dense size=1000
4 pooling size=2000
5 dense size=512
6 dense size=512
7 output_softmax
tap xvec 5
)";

const char *kMultitask = R"(name multitask
branch xvec
1 tdnn f1=t-2:t+2 size=512
2 tdnn f1=t size=512
3 tdnn f1=t-2,t,t+2 size=512
4 tdnn f1=t size=512
5 tdnn f1=t-3,t,t+3 size=512
6 tdnn f1=t size=512
7 tdnn f1=t-4,t,t+4 size=512
8 tdnn f1=t size=512
9 tdnn f1=t size=512
10 tdnn f1=t size=1500
11 pooling size=3000
12 dense size=512
13 dense size=512
14 output_softmax
branch asr
1 tdnn f1=t-2:t+2 size=512
2 tdnn f1=t-2,t,t+2 size=512
3 tdnn f1=t-3,t,t+3 size=512
4 tdnn f1=t size=512
5 tdnn f1=t size=512
6 tdnn f1=t size=512
7 tdnn f1=t size=512
8 output_softmax
share xvec asr 1
tap xvec 12
classes asr 3800
)";

// c-vector = multitask + acoustic-model bottleneck branch concatenated into
// the pooling input (1500 + 128 per frame -> pooling output 3256).
const char *kCvectorExtra = R"(branch am
1 tdnn f1=t-2:t+2 size=650
2 tdnn f1=t-1,t,t+1 size=650
3 tdnn f1=t-1,t,t+1 size=650
4 tdnn f1=t-3,t,t+3 size=650
5 tdnn f1=t-6,t-3,t size=128
concat_pool am 5
)";

}  // namespace

std::vector<std::string> BuiltinNames() {
  return {"etdnn", "ftdnn", "eftdnn", "resnet", "multitask", "cvector"};
}

NetSpec Builtin(const std::string &name) {
  if (name == "etdnn")
    return ParseNetSpec(kEtdnn);
  if (name == "ftdnn")
    return ParseNetSpec(kFtdnn);
  if (name == "eftdnn")
    return ParseNetSpec(kEftdnn);
  if (name == "resnet")
    return ParseNetSpec(kResnet);
  if (name == "multitask")
    return ParseNetSpec(kMultitask);
  if (name == "cvector") {
    std::string text(kMultitask);
    text += kCvectorExtra;
    NetSpec n = ParseNetSpec(text);
    n.name = "cvector";
    n.GetBranch("xvec");  // exists
    for (auto &b : n.branches)
      if (b.name == "xvec")
        b.layers[10].size = 3256;  // pooling over 1500 + 128 concatenated dims
    return n;
  }
  throw ConfigError("unknown builtin architecture '" + name + "'");
}

// ---------------------------------------------------------------- validate

namespace {

int PoolingIndex(const Branch &b) {
  for (const auto &l : b.layers)
    if (l.kind == LayerKind::kPooling)
      return l.index;
  return 0;
}

// Per-layer context contribution; factors chain, so mins and maxes add.
void LayerContext(const LayerSpec &l, int *left, int *right) {
  *left = *right = 0;
  if (l.kind == LayerKind::kResnetBlockStack) {
    int convs = 1;
    for (int blocks : kResnetBlocksPerStage)
      convs += 2 * blocks;
    *left = *right = convs;  // 3x3 convs, each +-1 frame
    return;
  }
  for (const auto &ctx : l.contexts) {
    *left += -ctx.offsets.front();
    *right += ctx.offsets.back();
  }
}

}  // namespace

ValidationReport Validate(const NetSpec &n) {
  ValidationReport rep;
  auto fail = [&](const std::string &msg) { rep.violations.push_back(msg); };

  for (const auto &b : n.branches) {
    int pool_idx = 0, pool_count = 0;
    int frame_size = -1;  // per-frame width carried into the next layer
    for (size_t i = 0; i < b.layers.size(); i++) {
      const auto &l = b.layers[i];
      if (l.index != static_cast<int>(i) + 1)
        fail(b.name + ": layer indices not consecutive at position " +
             std::to_string(i + 1));
      for (int s : l.skip_inputs) {
        if (s < 1 || s >= l.index)
          fail(b.name + " layer " + std::to_string(l.index) +
               ": skip input " + std::to_string(s) + " is not strictly earlier");
        else if (pool_count == 0 &&
                 b.layers[s - 1].kind == LayerKind::kPooling)
          fail(b.name + " layer " + std::to_string(l.index) +
               ": skip input crosses pooling");
      }
      if (l.kind == LayerKind::kPooling) {
        pool_count++;
        pool_idx = l.index;
        int extra = 0;
        if (n.concat_into_pooling) {
          const Branch *src = n.FindBranch(n.concat_into_pooling->branch);
          if (src == nullptr) {
            fail("concat_pool references unknown branch " +
                 n.concat_into_pooling->branch);
          } else if (&b != src) {
            int sl = n.concat_into_pooling->layer;
            if (sl < 1 || sl > static_cast<int>(src->layers.size()))
              fail("concat_pool references missing layer " + std::to_string(sl));
            else if (PoolingIndex(*src) != 0 && PoolingIndex(*src) <= sl)
              fail("concat_pool source is not frame-level output");
            else
              extra = src->layers[sl - 1].size;
          }
        }
        if (frame_size > 0 && l.size != 2 * (frame_size + extra))
          fail(b.name + " layer " + std::to_string(l.index) +
               ": pooling size " + std::to_string(l.size) + " != 2 x " +
               std::to_string(frame_size + extra));
      }
      if (l.size > 0)
        frame_size = l.size;
    }
    if (pool_count > 1)
      fail(b.name + ": more than one pooling layer");
    if (b.name == n.tap.branch && pool_count == 0)
      fail(b.name + ": embedding branch has no pooling layer");
    (void)pool_idx;
  }

  if (n.tap.layer != 0) {
    const Branch *tb = n.FindBranch(n.tap.branch);
    if (tb == nullptr) {
      fail("tap references unknown branch " + n.tap.branch);
    } else if (n.tap.layer < 1 ||
               n.tap.layer > static_cast<int>(tb->layers.size())) {
      fail("tap references missing layer " + std::to_string(n.tap.layer));
    } else if (n.tap.layer >= static_cast<int>(tb->layers.size())) {
      fail("tap must precede the output layer");
    }
  } else {
    fail("no embedding tap declared");
  }

  for (const auto &s : n.shared_layers) {
    const Branch *a = n.FindBranch(s.branch_a);
    const Branch *b = n.FindBranch(s.branch_b);
    if (a == nullptr || b == nullptr) {
      fail("share references unknown branch");
      continue;
    }
    if (s.layer < 1 || s.layer > static_cast<int>(a->layers.size()) ||
        s.layer > static_cast<int>(b->layers.size())) {
      fail("share references missing layer " + std::to_string(s.layer));
      continue;
    }
    if (!(a->layers[s.layer - 1] == b->layers[s.layer - 1]))
      fail("shared layer " + std::to_string(s.layer) + " differs between " +
           s.branch_a + " and " + s.branch_b);
  }
  return rep;
}

ReceptiveField ComputeReceptiveField(const NetSpec &n, const std::string &branch) {
  const Branch &b = n.GetBranch(branch);
  std::vector<int> left(b.layers.size() + 1, 0), right(b.layers.size() + 1, 0);
  ReceptiveField rf;
  for (const auto &l : b.layers) {
    if (l.kind == LayerKind::kPooling)
      break;
    int ll, lr;
    LayerContext(l, &ll, &lr);
    int in_left = left[l.index - 1], in_right = right[l.index - 1];
    for (int s : l.skip_inputs) {
      in_left = std::max(in_left, left[s]);
      in_right = std::max(in_right, right[s]);
    }
    left[l.index] = in_left + ll;
    right[l.index] = in_right + lr;
    rf.left = left[l.index];
    rf.right = right[l.index];
  }
  return rf;
}

}  // namespace svkit
