// tests/test_pipeline.cpp

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
#include <map>

#include "doctest.h"
#include "svkit/io.hpp"
#include "svkit/pipeline.hpp"
#include "svkit/toydata.hpp"
#include "test_util.hpp"

using namespace svkit;

namespace {

// Small enough to run the whole recipe in a few seconds.
PipelineConfig TinyConfig() {
  PipelineConfig cfg;
  cfg.Set("seed", "7");
  cfg.Set("toy.speakers", "12");
  cfg.Set("toy.utts", "6");
  cfg.Set("toy.eval_speakers", "8");
  cfg.Set("toy.eval_utts", "4");
  cfg.Set("toy.cohort_speakers", "8");
  cfg.Set("toy.cohort_utts", "2");
  cfg.Set("toy.dim", "10");
  cfg.Set("toy.frames", "60");
  cfg.Set("train.arch", "etdnn");
  cfg.Set("train.width_divisor", "64");
  cfg.Set("train.epochs", "2");
  cfg.Set("train.chunk_frames", "50");
  cfg.Set("backend.lda_dim", "8");
  cfg.Set("backend.plda_iters", "5");
  cfg.Set("asnorm.k", "6");
  return cfg;
}

}  // namespace

TEST_CASE("config parsing") {
  PipelineConfig cfg = ParsePipelineConfig(
      "# comment\n"
      "top = 1\n"
      "[toy]\n"
      "speakers = 50   # trailing comment\n"
      "frame_stddev = 0.25\n"
      "[vad]\n"
      "enabled = false\n"
      "[dcf]\n"
      "p_targets = 0.01, 0.005\n");
  CHECK(cfg.Get("top", "") == "1");
  CHECK(cfg.GetInt("toy.speakers", 0) == 50);
  CHECK(cfg.GetDouble("toy.frame_stddev", 0.0) == doctest::Approx(0.25));
  CHECK(cfg.GetBool("vad.enabled", true) == false);
  CHECK(cfg.GetDoubleList("dcf.p_targets", {}) ==
        std::vector<double>{0.01, 0.005});
  CHECK(cfg.GetInt("missing", 42) == 42);
  CHECK_FALSE(cfg.Has("toy.missing"));

  PipelineConfig bad = ParsePipelineConfig("[a]\nx = oops\nb = maybe\n");
  CHECK_THROWS_AS(bad.GetInt("a.x", 0), ConfigError);
  CHECK_THROWS_AS(bad.GetDouble("a.x", 0.0), ConfigError);
  CHECK_THROWS_AS(bad.GetBool("a.b", true), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("no_equals_here\n"), ConfigError);
  CHECK_THROWS_AS(ParsePipelineConfig("= value\n"), ConfigError);
}

TEST_CASE("canonical text and hashing") {
  PipelineConfig a, b;
  a.Set("b.y", "2");
  a.Set("a.x", "1");
  b.Set("a.x", "1");
  b.Set("b.y", "2");
  std::string text = CanonicalConfigText(a);
  CHECK(text == "a.x = 1\nb.y = 2\n");
  CHECK(CanonicalConfigText(b) == text);
  CHECK(ConfigHash(a) == ConfigHash(b));
  CHECK(ConfigHash(a).size() == 16);

  // Reference FNV-1a 64 values.
  CHECK(Fnv1a64("") == 14695981039346656037ull);
  CHECK(Fnv1a64("a") == 0xaf63dc4c8601ec8cull);
  CHECK(Fnv1a64("foobar") == 0x85944171f73967e8ull);

  b.Set("b.y", "3");
  CHECK(ConfigHash(a) != ConfigHash(b));
}

TEST_CASE("toy audio corpus") {
  ToySpeakerModel m;
  m.num_speakers = 6;
  m.utts_per_speaker = 4;
  m.feature_dim = 8;
  m.frames_per_utt = 30;
  m.speaker_stddev = 3.0;
  m.frame_stddev = 0.1;
  ToyCorpus c = GenToyAudio(m, 11);
  REQUIRE(c.utts.size() == 24);
  CHECK(c.num_speakers == 6);
  for (const auto &utt : c.utts) {
    const Matrix &f = c.feats.at(utt);
    CHECK(f.rows() == 30);
    CHECK(f.cols() == 8);
    const auto &lab = c.frame_labels.at(utt);
    REQUIRE(lab.size() == 30);
    for (int l : lab) {
      CHECK(l >= 0);
      CHECK(l < m.senones);
    }
  }

  // Deterministic per seed.
  ToyCorpus c2 = GenToyAudio(m, 11);
  CHECK(c2.feats.at(c.utts[0]) == c.feats.at(c.utts[0]));
  CHECK(c2.frame_labels.at(c.utts[1]) == c.frame_labels.at(c.utts[1]));
  ToyCorpus c3 = GenToyAudio(m, 12);
  CHECK(c3.feats.at(c.utts[0]) != c.feats.at(c.utts[0]));

  // Well-separated speakers: nearest speaker centroid classifies every
  // utterance mean correctly.
  std::map<int, Vector> centroid;
  std::map<int, int> count;
  for (const auto &utt : c.utts) {
    Vector mean = c.feats.at(utt).colwise().mean().transpose();
    int s = c.speaker.at(utt);
    if (!centroid.count(s))
      centroid[s] = Vector::Zero(8);
    centroid[s] += mean;
    count[s]++;
  }
  for (auto &[s, v] : centroid)
    v /= count[s];
  for (const auto &utt : c.utts) {
    Vector mean = c.feats.at(utt).colwise().mean().transpose();
    int best = -1;
    double best_d = 1e300;
    for (const auto &[s, v] : centroid) {
      double d = (mean - v).norm();
      if (d < best_d) {
        best_d = d;
        best = s;
      }
    }
    CHECK(best == c.speaker.at(utt));
  }
}

TEST_CASE("toy embeddings follow the generative model") {
  PldaModel plda;
  plda.mean = Vector(2);
  plda.mean << 1.0, -2.0;
  plda.between = Matrix::Zero(2, 2);
  plda.between.diagonal() << 2.0, 0.5;
  plda.within = Matrix::Identity(2, 2);

  ToyEmbeddingSet set = GenToyEmbeddings(plda, 500, 100, 21);
  REQUIRE(set.vectors.rows() == 50000);
  REQUIRE(set.labels.size() == 50000);

  Vector mean = set.vectors.colwise().mean().transpose();
  CHECK(std::abs(mean(0) - 1.0) < 0.05);
  CHECK(std::abs(mean(1) + 2.0) < 0.05);
  Matrix centered = set.vectors.rowwise() - mean.transpose();
  Matrix total = centered.transpose() * centered / 50000.0;
  // Total covariance is between + within.
  CHECK(total(0, 0) == doctest::Approx(3.0).epsilon(0.05));
  CHECK(total(1, 1) == doctest::Approx(1.5).epsilon(0.05));
  CHECK(std::abs(total(0, 1)) < 0.15);  // sampling noise ~ sqrt(2*b00*b11/500)

  // Zero within-class covariance: all vectors of a speaker coincide.
  plda.within = Matrix::Zero(2, 2);
  ToyEmbeddingSet tight = GenToyEmbeddings(plda, 4, 5, 22);
  for (int i = 1; i < tight.vectors.rows(); i++)
    if (tight.labels[i] == tight.labels[i - 1])
      CHECK((tight.vectors.row(i) - tight.vectors.row(i - 1)).norm() == 0.0);
}

TEST_CASE("sample gaussian moments") {
  Rng rng(23);
  Vector mean(2);
  mean << -1.0, 3.0;
  Matrix cov(2, 2);
  cov << 2.0, 0.8, 0.8, 1.0;
  Matrix x = SampleGaussian(mean, cov, 20000, &rng);
  Vector emp = x.colwise().mean().transpose();
  CHECK((emp - mean).norm() < 0.05);
  Matrix c = x.rowwise() - emp.transpose();
  Matrix emp_cov = c.transpose() * c / 20000.0;
  CHECK((emp_cov - cov).norm() < 0.1);
}

TEST_CASE("pipeline stages, staleness and determinism") {
  svkit_test::TempDir dir_a("pipe_a"), dir_b("pipe_b");
  PipelineConfig cfg = TinyConfig();

  Pipeline a(dir_a.Path("w"), cfg);
  CHECK_FALSE(a.StageDone("gen"));
  // Prerequisites are enforced.
  CHECK_THROWS_AS(a.RunStage("score"), DataError);
  CHECK_THROWS_AS(a.RunStage("nosuch"), ConfigError);

  a.RunAll();
  for (const auto &stage : Pipeline::Stages())
    if (stage != "fuse")  // optional: no fusion inputs configured
      CHECK(a.StageDone(stage));
  std::string report = ReadTextFile(a.Path("report.txt"));
  CHECK(report.find("EER(%):") != std::string::npos);

  // Completed hash-matched stages are no-ops.
  std::string raw = ReadTextFile(a.Path("scores/raw.txt"));
  a.RunStage("score");
  a.RunStage("evaluate");
  CHECK(ReadTextFile(a.Path("scores/raw.txt")) == raw);
  CHECK(ReadTextFile(a.Path("report.txt")) == report);

  // A second run elsewhere with the same config is byte-identical.
  Pipeline b(dir_b.Path("w"), cfg);
  b.RunAll();
  CHECK(ReadTextFile(b.Path("scores/raw.txt")) == raw);
  CHECK(ReadTextFile(b.Path("scores/calibrated.txt")) ==
        ReadTextFile(a.Path("scores/calibrated.txt")));
  CHECK(ReadTextFile(b.Path("report.txt")) == report);

  // Forced rerun of the scoring tail reproduces the same bytes.
  a.RunRange("score", "evaluate");
  CHECK(ReadTextFile(a.Path("scores/raw.txt")) == raw);
  CHECK(ReadTextFile(a.Path("report.txt")) == report);
  CHECK_THROWS_AS(a.RunRange("evaluate", "score"), ConfigError);

  // Changing the config makes existing artifacts stale.
  PipelineConfig changed = cfg;
  changed.Set("backend.lda_dim", "6");
  Pipeline stale(dir_a.Path("w"), changed);
  CHECK_FALSE(stale.StageDone("gen"));
  CHECK_THROWS_AS(stale.RunStage("evaluate"), DataError);
}
