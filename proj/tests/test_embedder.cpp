// tests/test_embedder.cpp

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

#include <cmath>

#include "doctest.h"
#include "svkit/embedder.hpp"
#include "test_util.hpp"

using namespace svkit;

namespace {

// Cosines between v and the rows of w, both length-normalized.
Vector Cosines(const Vector &v, const Matrix &w) {
  Vector c(w.rows());
  for (int j = 0; j < w.rows(); j++)
    c[j] = v.dot(w.row(j).transpose()) / (v.norm() * w.row(j).norm());
  return c;
}

double SoftmaxCeOnLogits(const Vector &logits, int label) {
  double mx = logits.maxCoeff();
  double denom = (logits.array() - mx).exp().sum();
  return -(logits[label] - mx) + std::log(denom);
}

}  // namespace

TEST_CASE("splice") {
  Matrix in(3, 2);
  in << 1, 2, 3, 4, 5, 6;
  CHECK(Splice(in, ParseContext("t")) == in);

  Matrix out = Splice(in, ParseContext("t-1,t"));
  REQUIRE(out.rows() == 3);
  REQUIRE(out.cols() == 4);
  Matrix want(3, 4);
  want << 1, 2, 1, 2,  // a+a (edge clamp)
      1, 2, 3, 4,      // a+b
      3, 4, 5, 6;      // b+c
  CHECK(out == want);

  CHECK(Splice(in, ParseContext("t-2:t+2")).cols() == 10);  // 5x width
}

TEST_CASE("stats pooling") {
  Matrix constant(4, 3);
  for (int t = 0; t < 4; t++)
    constant.row(t) << 1.5, -2.0, 0.25;
  Vector pooled = StatsPool(constant);
  REQUIRE(pooled.size() == 6);
  CHECK(pooled.head(3).isApprox(constant.row(0).transpose(), 1e-12));
  for (int d = 0; d < 3; d++)
    CHECK(pooled[3 + d] == doctest::Approx(std::sqrt(kVarFloor)).epsilon(1e-9));

  Matrix two(2, 1);
  two << 0, 2;
  Vector p2 = StatsPool(two);
  CHECK(p2[0] == doctest::Approx(1.0));
  CHECK(p2[1] == doctest::Approx(1.0));  // population stddev

  Rng rng(4);
  Matrix r = svkit_test::RandomMatrix(7, 3, rng);
  Vector pr = StatsPool(r);
  for (int d = 0; d < 3; d++) {
    double mean = r.col(d).mean();
    double var = (r.col(d).array() - mean).square().mean();
    CHECK(std::abs(pr[d] - mean) < 1e-6);
    CHECK(std::abs(pr[3 + d] - std::sqrt(var)) < 1e-6);
  }

  // Permutation invariance and exact-duplication invariance.
  Matrix perm(7, 3);
  perm << r.bottomRows(3), r.topRows(4);
  CHECK(StatsPool(perm).isApprox(pr, 1e-12));
  Matrix dup(14, 3);
  dup << r, r;
  CHECK(StatsPool(dup).isApprox(pr, 1e-9));
}

TEST_CASE("am-softmax reduces to softmax on cosines at m=0, s=1") {
  Rng rng(5);
  for (int rep = 0; rep < 10; rep++) {
    Vector x = svkit_test::RandomMatrix(6, 1, rng);
    Matrix w = svkit_test::RandomMatrix(4, 6, rng);
    int label = rep % 4;
    LossResult am = AmSoftmaxLoss(x, label, w, 0.0, 1.0);
    double want = SoftmaxCeOnLogits(Cosines(x, w), label);
    CHECK(am.loss == doctest::Approx(want).epsilon(1e-9));
  }
}

TEST_CASE("am-softmax closed-form scalar") {
  // Embedding [1,0]; target row at cosine 0.90, competitor at 0.10.
  Vector x(2);
  x << 1.0, 0.0;
  Matrix w(2, 2);
  w << 0.90, std::sqrt(1.0 - 0.81), 0.10, std::sqrt(1.0 - 0.01);
  LossResult r = AmSoftmaxLoss(x, 0, w, 0.15, 30.0);
  double want = std::log1p(std::exp(30.0 * (0.10 - 0.75)));
  CHECK(r.loss == doctest::Approx(want).epsilon(1e-9));
  CHECK(r.loss == doctest::Approx(3.4e-9).epsilon(0.02));
}

TEST_CASE("am-softmax monotonicity") {
  Rng rng(6);
  Vector x = svkit_test::RandomMatrix(5, 1, rng);
  Matrix w = svkit_test::RandomMatrix(3, 5, rng);
  double prev = AmSoftmaxLoss(x, 1, w, 0.0, 30.0).loss;
  for (double m : {0.05, 0.15, 0.3}) {
    double cur = AmSoftmaxLoss(x, 1, w, m, 30.0).loss;
    CHECK(cur > prev);  // non-decreasing in m
    prev = cur;
  }
  // Non-increasing in cos(theta_y): move the target row toward x.
  Matrix closer = w;
  closer.row(1) = x.transpose() / x.norm();
  CHECK(AmSoftmaxLoss(x, 1, closer, 0.15, 30.0).loss <
        AmSoftmaxLoss(x, 1, w, 0.15, 30.0).loss);
}

TEST_CASE("a-softmax psi") {
  CHECK(ASoftmaxPsi(0.0, 1) == doctest::Approx(1.0));
  CHECK(ASoftmaxPsi(0.0, 4) == doctest::Approx(1.0));
  // theta = pi/3, m=4: m*theta in (pi, 2pi) -> k=1, psi = -cos(4pi/3) - 2.
  CHECK(ASoftmaxPsi(M_PI / 3.0, 4) == doctest::Approx(-1.5).epsilon(1e-12));
  for (double th : {0.1, 0.7, 2.0})
    CHECK(ASoftmaxPsi(th, 1) == doctest::Approx(std::cos(th)).epsilon(1e-12));
}

TEST_CASE("a-softmax reduces to softmax at m=1") {
  Rng rng(7);
  for (int rep = 0; rep < 10; rep++) {
    Vector x = svkit_test::RandomMatrix(6, 1, rng);
    Matrix w = svkit_test::RandomMatrix(4, 6, rng);
    int label = rep % 4;
    // psi(theta, 1) = cos(theta): logits are |x| cos(theta_j) at any lambda.
    LossResult as = ASoftmaxLoss(x, label, w, 1, 0.0);
    Vector logits = x.norm() * Cosines(x, w);
    double want = SoftmaxCeOnLogits(logits, label);
    CHECK(as.loss == doctest::Approx(want).epsilon(1e-9));
  }
  CHECK_THROWS_AS(ASoftmaxLoss(Vector::Ones(3), 0, Matrix::Identity(3, 3), 5, 1.0),
                  ConfigError);
}

TEST_CASE("semi-orthogonal constraint") {
  Rng rng(8);
  Matrix m = svkit_test::RandomMatrix(4, 16, rng);
  CHECK(SemiOrthDeviationMatrix(m) > 1e-3);
  Matrix id_check = m;
  SemiOrthStepMatrix(&id_check, 0.0);  // alpha 0 is the identity
  CHECK(id_check == m);
  for (int i = 0; i < 100; i++)
    SemiOrthStepMatrix(&m);
  CHECK(SemiOrthDeviationMatrix(m) < 1e-3);
  // Fixed point: already semi-orthogonal input barely moves.
  Matrix fixed = m;
  SemiOrthStepMatrix(&fixed);
  CHECK((fixed - m).cwiseAbs().maxCoeff() < 1e-5);
}

TEST_CASE("zero-weight forward emits the tap bias") {
  NetSpec spec = ScaleWidth(Builtin("etdnn"), 16);
  Network net(spec, 10, 3);
  Params p = net.Init(1);
  for (auto &[name, t] : p.t)
    t.setZero();
  Vector bias = Vector::LinSpaced(net.EmbeddingDim(), -1.0, 1.0);
  p.t.at("xvec.12.b").col(0) = bias;
  Rng rng(9);
  Matrix feats = svkit_test::RandomMatrix(6, 10, rng);
  auto tr = net.Forward(p, feats);
  CHECK(net.TapPreActivation(*tr).isApprox(bias, 1e-12));
}

TEST_CASE("full-width pooled dimensions and embedding dims") {
  Rng rng(10);
  Matrix feats = svkit_test::RandomMatrix(3, 23, rng);
  {
    Network net(Builtin("etdnn"), 23, 3);
    Params p = net.Init(2);
    auto tr = net.Forward(p, feats);
    CHECK(net.Pooled(*tr).size() == 3000);
    FeatureMatrix f;
    f.values = feats;
    CHECK(ExtractEmbedding(p, net, f).vector.size() == 512);
  }
  {
    Network net(Builtin("ftdnn"), 23, 3);
    Params p = net.Init(2);
    FeatureMatrix f;
    f.values = feats;
    CHECK(ExtractEmbedding(p, net, f).vector.size() == 1024);
  }
  {
    Network net(Builtin("eftdnn"), 23, 3);
    Params p = net.Init(2);
    auto tr = net.Forward(p, feats);
    CHECK(net.Pooled(*tr).size() == 4096);
  }
  {
    Network net(Builtin("resnet"), 23, 3);
    Params p = net.Init(2);
    FeatureMatrix f;
    f.values = feats;
    CHECK(ExtractEmbedding(p, net, f).vector.size() == 512);
  }
}

TEST_CASE("constant utterance embedding is invariant to frame duplication") {
  NetSpec spec = ScaleWidth(Builtin("etdnn"), 32);
  Network net(spec, 8, 3);
  Params p = net.Init(3);
  Matrix one = Matrix::Ones(4, 8) * 0.3;
  Matrix two(8, 8);
  two << one, one;
  FeatureMatrix fa, fb;
  fa.values = one;
  fb.values = two;
  CHECK(ExtractEmbedding(p, net, fa)
            .vector.isApprox(ExtractEmbedding(p, net, fb).vector, 1e-9));
}

TEST_CASE("impulse probe matches the declared asr receptive field") {
  NetSpec spec = ScaleWidth(Builtin("multitask"), 32);
  Network net(spec, 8, 3);
  Params p = net.Init(4);
  Rng rng(11);
  Matrix feats = svkit_test::RandomMatrix(30, 8, rng);
  auto base = net.Forward(p, feats);
  Matrix base_out = net.HeadInput(*base, "asr");

  Matrix bumped = feats;
  const int t0 = 15;
  bumped.row(t0).array() += 1.0;
  auto probe = net.Forward(p, bumped);
  Matrix probe_out = net.HeadInput(*probe, "asr");

  ReceptiveField rf = ComputeReceptiveField(spec, "asr");
  CHECK(rf.left == 7);
  CHECK(rf.right == 7);
  for (int t = 0; t < 30; t++) {
    double delta = (probe_out.row(t) - base_out.row(t)).cwiseAbs().maxCoeff();
    bool inside = t >= t0 - rf.right && t <= t0 + rf.left;
    if (inside)
      CHECK(delta > 0.0);
    else
      CHECK(delta == 0.0);
  }
}

TEST_CASE("multitask loss is speaker loss plus lambda times frame loss") {
  NetSpec spec = ScaleWidth(Builtin("multitask"), 32);
  for (auto &[branch, classes] : spec.output_classes)
    classes = 5;
  Network net(spec, 8, 3);
  Params p = net.Init(5);
  Rng rng(12);
  Matrix feats = svkit_test::RandomMatrix(12, 8, rng);
  std::vector<int> frame_labels;
  for (int t = 0; t < 12; t++)
    frame_labels.push_back(t % 5);

  auto loss_at = [&](double lambda) {
    LossConfig cfg;
    cfg.multitask_weight = lambda;
    return net.ComputeLossAndGrad(p, feats, 1, &frame_labels, cfg, 5.0, nullptr);
  };
  double l0 = loss_at(0.0), l1 = loss_at(0.7), l2 = loss_at(1.4);
  CHECK(l1 - l0 == doctest::Approx(0.5 * (l2 - l0)).epsilon(1e-9));  // linear in lambda
  CHECK(l1 > l0);

  // Frame-label length mismatch is an error.
  std::vector<int> short_labels(5, 0);
  LossConfig cfg;
  cfg.multitask_weight = 0.5;
  CHECK_THROWS_AS(
      net.ComputeLossAndGrad(p, feats, 1, &short_labels, cfg, 5.0, nullptr),
      DataError);
}

TEST_CASE("cvector gradient reaches the acoustic-model branch") {
  NetSpec spec = ScaleWidth(Builtin("cvector"), 32);
  for (auto &[branch, classes] : spec.output_classes)
    classes = 5;
  Network net(spec, 8, 3);
  Params p = net.Init(6);
  Rng rng(13);
  Matrix feats = svkit_test::RandomMatrix(10, 8, rng);
  Params grad = p;
  grad.SetZero();
  LossConfig cfg;
  net.ComputeLossAndGrad(p, feats, 0, nullptr, cfg, 5.0, &grad);
  CHECK(grad.t.at("am.1.W").cwiseAbs().maxCoeff() > 0.0);
  CHECK(grad.t.at("am.5.W").cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("training determinism and zero learning rate") {
  NetSpec spec = ScaleWidth(Builtin("etdnn"), 64);
  Network net(spec, 6, 2);
  Rng rng(14);
  TrainData data;
  data.num_speakers = 2;
  for (int s = 0; s < 2; s++) {
    for (int u = 0; u < 4; u++) {
      std::string id = "s" + std::to_string(s) + "u" + std::to_string(u);
      Matrix f = svkit_test::RandomMatrix(20, 6, rng);
      f.array() += s == 0 ? -2.0 : 2.0;
      data.utts.push_back(id);
      data.feats[id] = f;
      data.speaker[id] = s;
    }
  }
  TrainConfig cfg;
  cfg.epochs = 1;
  cfg.seed = 42;

  TrainConfig zero = cfg;
  zero.learn_rate = 0.0;
  Params before = net.Init(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  Params after = Train(net, data, zero);
  for (const auto &[name, t] : before.t)
    CHECK(t == after.t.at(name));

  Params a = Train(net, data, cfg);
  Params b = Train(net, data, cfg);
  for (const auto &[name, t] : a.t)
    CHECK(t == b.t.at(name));

  TrainData one_speaker = data;
  one_speaker.num_speakers = 1;
  CHECK_THROWS_AS(Train(net, one_speaker, cfg), DataError);
}

TEST_CASE("two separable speakers reach high training accuracy") {
  NetSpec spec = ScaleWidth(Builtin("etdnn"), 16);
  Network net(spec, 6, 2);
  Rng rng(15);
  TrainData data;
  data.num_speakers = 2;
  for (int s = 0; s < 2; s++) {
    for (int u = 0; u < 10; u++) {
      std::string id = "s" + std::to_string(s) + "u" + std::to_string(u);
      Matrix f = svkit_test::RandomMatrix(30, 6, rng) * 0.1;
      f.array() += s == 0 ? -1.0 : 1.0;
      data.utts.push_back(id);
      data.feats[id] = f;
      data.speaker[id] = s;
    }
  }
  TrainConfig cfg;
  cfg.epochs = 15;
  cfg.learn_rate = 0.05;
  cfg.lr_decay = 1.0;
  cfg.chunk_frames = 30;
  cfg.seed = 1;
  TrainReport report;
  Params p = Train(net, data, cfg, &report);
  CHECK(report.heldout_final < report.heldout_initial);

  int correct = 0;
  for (const auto &id : data.utts) {
    auto tr = net.Forward(p, data.feats.at(id));
    Matrix logits = net.Logits(p, *tr, "xvec");
    int argmax = 0;
    logits.row(0).maxCoeff(&argmax);
    correct += argmax == data.speaker.at(id) ? 1 : 0;
  }
  CHECK(static_cast<double>(correct) / data.utts.size() >= 0.99);
}

TEST_CASE("grad check on a reduced etdnn with am-softmax") {
  NetSpec spec = ScaleWidth(Builtin("etdnn"), 64);
  Network net(spec, 10, 3);
  LossConfig cfg;
  cfg.kind = LossKind::kAmSoftmax;
  GradCheckReport r = GradCheck(net, cfg, 1);
  CHECK(r.max_rel_error < 1e-4);
}

TEST_CASE("model file round trip") {
  svkit_test::TempDir tmp("model");
  NetSpec spec = ScaleWidth(Builtin("ftdnn"), 64);
  Network net(spec, 6, 4);
  Params p = net.Init(7);
  LossConfig loss;
  loss.kind = LossKind::kAmSoftmax;
  loss.margin = 0.2;
  std::string path = tmp.Path("m.svkt");
  SaveModel(path, spec, p, loss, 4);
  LoadedModel m = LoadModel(path);
  CHECK(m.spec == spec);
  CHECK(m.speaker_classes == 4);
  CHECK(m.loss.kind == LossKind::kAmSoftmax);
  CHECK(m.loss.margin == doctest::Approx(0.2));
  for (const auto &[name, t] : p.t)
    CHECK((m.params.t.at(name) - t).cwiseAbs().maxCoeff() < 1e-6);
}
