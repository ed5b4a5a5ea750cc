// tests/test_fusion.cpp

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
#include "svkit/fusion.hpp"
#include "svkit/metrics.hpp"
#include "test_util.hpp"

using namespace svkit;

TEST_CASE("duplicated subsystems share the weight") {
  Rng rng(60);
  int n = 2000;
  Matrix scores(n, 2);
  std::vector<bool> labels(n);
  for (int i = 0; i < n; i++) {
    bool target = i % 2 == 0;
    double s = svkit_test::Gauss(rng) + (target ? 1.0 : -1.0);
    scores(i, 0) = s;
    scores(i, 1) = s;
    labels[i] = target;
  }
  FusionModel m = FusionFit(scores, labels);
  REQUIRE(m.weights.size() == 2);
  CHECK(m.weights(0) == doctest::Approx(m.weights(1)).epsilon(1e-6));
  CHECK(m.weights(0) > 0.0);
}

TEST_CASE("a pure-noise subsystem gets a near-zero weight") {
  Rng rng(61);
  int n = 4000;
  Matrix scores(n, 2);
  std::vector<bool> labels(n);
  for (int i = 0; i < n; i++) {
    bool target = i % 2 == 0;
    scores(i, 0) = 2.0 * (svkit_test::Gauss(rng) + (target ? 1.0 : -1.0));
    scores(i, 1) = svkit_test::Gauss(rng);  // independent of the label
    labels[i] = target;
  }
  FusionModel m = FusionFit(scores, labels);
  CHECK(std::abs(m.weights(1)) < 0.1 * std::abs(m.weights(0)));
}

TEST_CASE("fit recovers a generative logistic model") {
  // Labels drawn from sigmoid(2*s1 + 3*s2 - 1) with balanced inputs.
  Rng rng(62);
  int n = 10000;
  Matrix scores(n, 2);
  std::vector<bool> labels(n);
  for (int i = 0; i < n; i++) {
    double s1 = svkit_test::Gauss(rng), s2 = svkit_test::Gauss(rng);
    scores(i, 0) = s1;
    scores(i, 1) = s2;
    double p = 1.0 / (1.0 + std::exp(-(2.0 * s1 + 3.0 * s2 - 1.0)));
    labels[i] = svkit_test::Uniform(rng, 0.0, 1.0) < p;
  }
  FusionConfig cfg;
  cfg.effective_prior = 0.5;
  FusionModel m = FusionFit(scores, labels, cfg);
  CHECK(m.weights(0) == doctest::Approx(2.0).epsilon(0.10));
  CHECK(m.weights(1) == doctest::Approx(3.0).epsilon(0.10));
  // Offset absorbs both the model bias and the empirical prior log-odds.
  CHECK(std::abs(m.offset + 1.0) < 0.5);
}

TEST_CASE("fusion does not hurt the dev metric it optimizes") {
  Rng rng(63);
  int n = 3000;
  Matrix scores(n, 2);
  std::vector<bool> labels(n);
  for (int i = 0; i < n; i++) {
    bool target = i % 3 == 0;
    scores(i, 0) = svkit_test::Gauss(rng) + (target ? 1.2 : -1.2);
    scores(i, 1) = 0.7 * svkit_test::Gauss(rng) + (target ? 0.8 : -0.8);
    labels[i] = target;
  }
  FusionModel m = FusionFit(scores, labels);
  std::vector<double> fused = FusionApplyRows(m, scores);
  std::vector<double> ft, fn, s0t, s0n;
  for (int i = 0; i < n; i++) {
    (labels[i] ? ft : fn).push_back(fused[i]);
    (labels[i] ? s0t : s0n).push_back(scores(i, 0));
  }
  DcfConfig dcf;
  CHECK(MinDcf(ft, fn, dcf) <= MinDcf(s0t, s0n, dcf) + 1e-9);
}

TEST_CASE("apply matches the linear form and the row variant") {
  FusionModel m;
  m.weights = Vector(3);
  m.weights << 0.5, -1.0, 2.0;
  m.offset = 0.25;
  Vector s(3);
  s << 1.0, 2.0, 3.0;
  CHECK(FusionApply(m, s) == doctest::Approx(0.5 - 2.0 + 6.0 + 0.25).epsilon(1e-12));

  Matrix rows(2, 3);
  rows << 1.0, 2.0, 3.0, -1.0, 0.0, 1.0;
  std::vector<double> out = FusionApplyRows(m, rows);
  REQUIRE(out.size() == 2);
  CHECK(out[0] == doctest::Approx(FusionApply(m, rows.row(0).transpose())));
  CHECK(out[1] == doctest::Approx(FusionApply(m, rows.row(1).transpose())));
}

TEST_CASE("fusion model serialization round trip") {
  FusionModel m;
  m.weights = Vector(4);
  m.weights << 1.5, -0.25, 0.0, 3.125;
  m.offset = -0.75;
  FusionModel r = ParseFusionModel(SerializeFusionModel(m));
  REQUIRE(r.weights.size() == 4);
  for (int i = 0; i < 4; i++)
    CHECK(r.weights(i) == doctest::Approx(m.weights(i)).epsilon(1e-12));
  CHECK(r.offset == doctest::Approx(m.offset).epsilon(1e-12));
  CHECK_THROWS_AS(ParseFusionModel(""), DataError);
}

TEST_CASE("fit input validation") {
  Matrix scores(2, 1);
  scores << 1.0, -1.0;
  CHECK_THROWS_AS(FusionFit(scores, {true, true}), DataError);
  CHECK_THROWS_AS(FusionFit(scores, {true}), DataError);
}
