// svkit/pipeline.hpp
//
// Staged end-to-end recipe over a working directory: toy corpus generation,
// feature processing, embedder training, extraction, back-end fitting,
// scoring, normalization, calibration, fusion and evaluation.  A manifest
// records the config hash each artifact was built with; stale or missing
// prerequisites are errors.

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

#ifndef SVKIT_PIPELINE_HPP
#define SVKIT_PIPELINE_HPP

#include <map>
#include <string>
#include <vector>

#include "svkit/common.hpp"

namespace svkit {

// Flat "section.key" -> value view of an INI-style config file.
struct PipelineConfig {
  std::map<std::string, std::string> kv;

  bool Has(const std::string &key) const { return kv.count(key) > 0; }
  std::string Get(const std::string &key, const std::string &def) const;
  int GetInt(const std::string &key, int def) const;
  double GetDouble(const std::string &key, double def) const;
  bool GetBool(const std::string &key, bool def) const;
  std::vector<double> GetDoubleList(const std::string &key,
                                    const std::vector<double> &def) const;
  void Set(const std::string &key, const std::string &value) { kv[key] = value; }
};

// "[section]" headers, "key = value" lines, '#' comments.
PipelineConfig ParsePipelineConfig(const std::string &text);
PipelineConfig LoadPipelineConfig(const std::string &path);

// Sorted "key = value" lines; the config hash is the digest of this text.
std::string CanonicalConfigText(const PipelineConfig &cfg);
std::uint64_t Fnv1a64(const std::string &text);
std::string ConfigHash(const PipelineConfig &cfg);  // 16 hex chars

class Pipeline {
 public:
  Pipeline(const std::string &workdir, PipelineConfig cfg);

  // In execution order: gen, features, vad, train, extract, lda, norm, plda,
  // adapt, score, asnorm, calibrate, fuse, evaluate.
  static const std::vector<std::string> &Stages();

  // True when the manifest records this stage with the current config hash.
  bool StageDone(const std::string &stage) const;

  // Verifies all prior stages are present and hash-matched, then runs the
  // stage.  A hash-matched completed stage is a no-op unless force is set.
  void RunStage(const std::string &stage, bool force = false);
  void RunRange(const std::string &first, const std::string &last,
                bool force = true);
  void RunAll();

  const std::string &Workdir() const { return workdir_; }
  const PipelineConfig &Config() const { return cfg_; }
  std::string Path(const std::string &relative) const;

 private:
  void LoadManifest();
  void SaveManifest() const;
  void CheckPrerequisites(const std::string &stage) const;

  void StageGen();
  void StageFeatures();
  void StageVad();
  void StageTrain();
  void StageExtract();
  void StageLda();
  void StageNorm();
  void StagePlda();
  void StageAdapt();
  void StageScore();
  void StageAsnorm();
  void StageCalibrate();
  void StageFuse();
  void StageEvaluate();

  std::string workdir_;
  PipelineConfig cfg_;
  std::string hash_;
  std::map<std::string, std::string> manifest_;  // stage -> config hash
};

}  // namespace svkit

#endif  // SVKIT_PIPELINE_HPP
