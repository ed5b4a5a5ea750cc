// tests/test_io.cpp

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
#include <filesystem>

#include "doctest.h"
#include "svkit/io.hpp"
#include "test_util.hpp"

using namespace svkit;
using svkit_test::TempDir;

TEST_CASE("wav round trip") {
  TempDir tmp("wav");
  Waveform w;
  w.sample_rate = 8000;
  for (int i = 0; i < 800; i++)
    w.samples.push_back(0.5 * std::sin(2.0 * M_PI * 440.0 * i / 8000.0));
  std::string path = tmp.Path("a.wav");
  WriteWav(path, w);
  Waveform r = ReadWav(path);
  REQUIRE(r.sample_rate == 8000);
  REQUIRE(r.samples.size() == w.samples.size());
  for (size_t i = 0; i < w.samples.size(); i++)
    CHECK(std::abs(r.samples[i] - w.samples[i]) < 1.0 / 32768.0 + 1e-9);
}

TEST_CASE("wav read of missing file fails") {
  CHECK_THROWS_AS(ReadWav("/nonexistent/file.wav"), DataError);
}

TEST_CASE("archive round trip preserves order and values") {
  TempDir tmp("arch");
  Rng rng(1);
  std::string path = tmp.Path("feats.ark");
  std::vector<std::pair<std::string, Matrix>> records;
  records.emplace_back("utt_b", svkit_test::RandomMatrix(5, 3, rng));
  records.emplace_back("utt_a", svkit_test::RandomMatrix(2, 7, rng));
  records.emplace_back("utt_c", svkit_test::RandomMatrix(1, 1, rng));
  {
    ArchiveWriter w(path);
    for (const auto &[id, m] : records)
      w.Write(id, m);
    w.Close();
  }
  CHECK(std::filesystem::exists(path + ".idx"));
  ArchiveReader r(path);
  CHECK(r.Ids() == std::vector<std::string>{"utt_b", "utt_a", "utt_c"});
  CHECK(r.Has("utt_a"));
  CHECK_FALSE(r.Has("utt_z"));
  for (const auto &[id, m] : records) {
    Matrix got = r.Read(id);
    REQUIRE(got.rows() == m.rows());
    REQUIRE(got.cols() == m.cols());
    // Storage is float32.
    CHECK((got - m).cwiseAbs().maxCoeff() < 1e-6 * (1 + m.cwiseAbs().maxCoeff()));
  }
  CHECK_THROWS_AS(r.Read("utt_z"), DataError);

  auto all = ReadArchive(path);
  REQUIRE(all.size() == 3);
  CHECK(all[0].first == "utt_b");
}

TEST_CASE("tensor file round trip") {
  TempDir tmp("tf");
  Rng rng(2);
  TensorFile tf;
  tf.meta["netspec"] = "name x\nbranch b\n1 dense size=4\n";
  tf.meta["loss"] = "softmax";
  tf.tensors["layer1.W"] = svkit_test::RandomMatrix(4, 6, rng);
  tf.tensors["layer1.b"] = svkit_test::RandomMatrix(4, 1, rng);
  std::string path = tmp.Path("model.svkt");
  WriteTensorFile(path, tf);
  TensorFile r = ReadTensorFile(path);
  CHECK(r.meta == tf.meta);
  REQUIRE(r.tensors.size() == 2);
  for (const auto &[name, m] : tf.tensors)
    CHECK((r.tensors.at(name) - m).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("score and key files") {
  TempDir tmp("scores");
  std::vector<Trial> trials = {{"e1", "t1", 1.25, -1}, {"e2", "t2", -0.5, -1}};
  std::string spath = tmp.Path("scores.txt");
  WriteScoreFile(spath, trials);
  auto r = ReadScoreFile(spath);
  REQUIRE(r.size() == 2);
  CHECK(r[0].enroll == "e1");
  CHECK(r[0].score == doctest::Approx(1.25).epsilon(1e-12));

  AtomicWriteText(tmp.Path("key.txt"), "e1 t1 target\ne2 t2 nontarget\n");
  auto key = ReadKeyFile(tmp.Path("key.txt"));
  REQUIRE(key.size() == 2);
  CHECK(key[0].label == 1);
  CHECK(key[1].label == 0);
}

TEST_CASE("atomic text write and id list") {
  TempDir tmp("txt");
  AtomicWriteText(tmp.Path("x.txt"), "hello\nworld\n");
  CHECK(ReadTextFile(tmp.Path("x.txt")) == "hello\nworld\n");
  AtomicWriteText(tmp.Path("ids.txt"), "a\nb\nc\n");
  CHECK(ReadIdList(tmp.Path("ids.txt")) == std::vector<std::string>{"a", "b", "c"});
  CHECK_THROWS_AS(ReadTextFile(tmp.Path("missing.txt")), DataError);
}
