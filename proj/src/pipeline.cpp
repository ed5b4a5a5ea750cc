// src/pipeline.cpp

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

#include "svkit/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "svkit/backend.hpp"
#include "svkit/calibration.hpp"
#include "svkit/embedder.hpp"
#include "svkit/features.hpp"
#include "svkit/fusion.hpp"
#include "svkit/io.hpp"
#include "svkit/metrics.hpp"
#include "svkit/scorenorm.hpp"
#include "svkit/toydata.hpp"

namespace fs = std::filesystem;

namespace svkit {

// ------------------------------------------------------------------- config

std::string PipelineConfig::Get(const std::string &key,
                                const std::string &def) const {
  auto it = kv.find(key);
  return it == kv.end() ? def : it->second;
}

int PipelineConfig::GetInt(const std::string &key, int def) const {
  auto it = kv.find(key);
  if (it == kv.end())
    return def;
  try {
    return std::stoi(it->second);
  } catch (const std::exception &) {
    throw ConfigError("config key " + key + " is not an integer: " + it->second);
  }
}

double PipelineConfig::GetDouble(const std::string &key, double def) const {
  auto it = kv.find(key);
  if (it == kv.end())
    return def;
  try {
    return std::stod(it->second);
  } catch (const std::exception &) {
    throw ConfigError("config key " + key + " is not a number: " + it->second);
  }
}

bool PipelineConfig::GetBool(const std::string &key, bool def) const {
  auto it = kv.find(key);
  if (it == kv.end())
    return def;
  const std::string &v = it->second;
  if (v == "1" || v == "true" || v == "yes")
    return true;
  if (v == "0" || v == "false" || v == "no")
    return false;
  throw ConfigError("config key " + key + " is not a boolean: " + v);
}

std::vector<double> PipelineConfig::GetDoubleList(
    const std::string &key, const std::vector<double> &def) const {
  auto it = kv.find(key);
  if (it == kv.end())
    return def;
  std::vector<double> out;
  std::string item;
  std::istringstream is(it->second);
  while (std::getline(is, item, ',')) {
    if (item.empty())
      continue;
    try {
      out.push_back(std::stod(item));
    } catch (const std::exception &) {
      throw ConfigError("config key " + key + " has a bad list entry: " + item);
    }
  }
  if (out.empty())
    throw ConfigError("config key " + key + " is an empty list");
  return out;
}

namespace {

std::string Trim(const std::string &s) {
  size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos)
    return "";
  size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

}  // namespace

PipelineConfig ParsePipelineConfig(const std::string &text) {
  PipelineConfig cfg;
  std::istringstream is(text);
  std::string line, section;
  int lineno = 0;
  while (std::getline(is, line)) {
    lineno++;
    size_t hash = line.find('#');
    if (hash != std::string::npos)
      line = line.substr(0, hash);
    line = Trim(line);
    if (line.empty())
      continue;
    if (line.front() == '[') {
      if (line.back() != ']')
        throw ConfigError("config line " + std::to_string(lineno) +
                          ": unterminated section header");
      section = Trim(line.substr(1, line.size() - 2));
      continue;
    }
    size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config line " + std::to_string(lineno) +
                        ": expected key = value");
    std::string key = Trim(line.substr(0, eq));
    std::string value = Trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
    cfg.kv[section.empty() ? key : section + "." + key] = value;
  }
  return cfg;
}

PipelineConfig LoadPipelineConfig(const std::string &path) {
  return ParsePipelineConfig(ReadTextFile(path));
}

std::string CanonicalConfigText(const PipelineConfig &cfg) {
  std::ostringstream os;
  for (const auto &[k, v] : cfg.kv)
    os << k << " = " << v << "\n";
  return os.str();
}

std::uint64_t Fnv1a64(const std::string &text) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::string ConfigHash(const PipelineConfig &cfg) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0')
     << Fnv1a64(CanonicalConfigText(cfg));
  return os.str();
}

// ----------------------------------------------------------------- pipeline

namespace {

const std::vector<std::string> kStages = {
    "gen",   "features", "vad",    "train",     "extract",
    "lda",   "norm",     "plda",   "adapt",     "score",
    "asnorm", "calibrate", "fuse", "evaluate"};

int StageIndex(const std::string &stage) {
  for (size_t i = 0; i < kStages.size(); i++)
    if (kStages[i] == stage)
      return static_cast<int>(i);
  throw ConfigError("unknown pipeline stage: " + stage);
}

const char *kSets[3] = {"train", "eval", "cohort"};

std::map<std::string, int> ReadSpkFile(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open " + path);
  std::map<std::string, int> out;
  std::string utt;
  int spk;
  while (in >> utt >> spk)
    out[utt] = spk;
  return out;
}

std::string FormatSpkFile(const std::map<std::string, int> &spk) {
  std::ostringstream os;
  for (const auto &[utt, s] : spk)
    os << utt << " " << s << "\n";
  return os.str();
}

std::map<std::string, std::vector<int>> ReadLabelFile(const std::string &path) {
  std::ifstream in(path);
  if (!in)
    throw DataError("cannot open " + path);
  std::map<std::string, std::vector<int>> out;
  std::string line;
  while (std::getline(in, line)) {
    line = Trim(line);
    if (line.empty())
      continue;
    std::istringstream is(line);
    std::string utt;
    is >> utt;
    std::vector<int> labs;
    int l;
    while (is >> l)
      labs.push_back(l);
    out[utt] = labs;
  }
  return out;
}

std::string FormatLabelFile(const std::map<std::string, std::vector<int>> &m) {
  std::ostringstream os;
  for (const auto &[utt, labs] : m) {
    os << utt;
    for (int l : labs)
      os << " " << l;
    os << "\n";
  }
  return os.str();
}

// Centered sliding-window mean subtraction, window clamped at the edges.
Matrix SlidingCmn(const Matrix &feats, int window) {
  if (window <= 0)
    return feats;
  Matrix out = feats;
  const long t_count = feats.rows();
  int half = window / 2;
  for (long t = 0; t < t_count; t++) {
    long lo = std::max<long>(0, t - half);
    long hi = std::min<long>(t_count - 1, t + half);
    Vector mean = feats.middleRows(lo, hi - lo + 1).colwise().mean();
    out.row(t) -= mean.transpose();
  }
  return out;
}

void WriteTensorModel(const std::string &path,
                      const std::map<std::string, Matrix> &tensors,
                      const std::map<std::string, std::string> &meta) {
  TensorFile tf;
  tf.tensors = tensors;
  tf.meta = meta;
  WriteTensorFile(path, tf);
}

PldaModel ReadPldaFile(const std::string &path) {
  TensorFile tf = ReadTensorFile(path);
  PldaModel m;
  m.mean = tf.tensors.at("mean").col(0);
  m.between = tf.tensors.at("between");
  m.within = tf.tensors.at("within");
  return m;
}

LdaModel ReadLdaFile(const std::string &path) {
  TensorFile tf = ReadTensorFile(path);
  LdaModel m;
  m.projection = tf.tensors.at("projection");
  m.mean = tf.tensors.at("mean").col(0);
  return m;
}

LossKind ParseLossKind(const std::string &name) {
  if (name == "softmax")
    return LossKind::kSoftmax;
  if (name == "amsoftmax" || name == "am-softmax" || name == "am")
    return LossKind::kAmSoftmax;
  if (name == "asoftmax" || name == "a-softmax" || name == "a")
    return LossKind::kASoftmax;
  throw ConfigError("unknown loss: " + name);
}

}  // namespace

Pipeline::Pipeline(const std::string &workdir, PipelineConfig cfg)
    : workdir_(workdir), cfg_(std::move(cfg)) {
  hash_ = ConfigHash(cfg_);
  fs::create_directories(workdir_);
  LoadManifest();
}

const std::vector<std::string> &Pipeline::Stages() { return kStages; }

std::string Pipeline::Path(const std::string &relative) const {
  return (fs::path(workdir_) / relative).string();
}

void Pipeline::LoadManifest() {
  manifest_.clear();
  std::string path = Path("MANIFEST");
  if (!fs::exists(path))
    return;
  std::ifstream in(path);
  std::string stage, hash;
  while (in >> stage >> hash)
    manifest_[stage] = hash;
}

void Pipeline::SaveManifest() const {
  std::ostringstream os;
  // Stage order, not map order, so the file reads as a progress log.
  for (const auto &s : kStages) {
    auto it = manifest_.find(s);
    if (it != manifest_.end())
      os << s << " " << it->second << "\n";
  }
  AtomicWriteText(Path("MANIFEST"), os.str());
}

bool Pipeline::StageDone(const std::string &stage) const {
  auto it = manifest_.find(stage);
  return it != manifest_.end() && it->second == hash_;
}

void Pipeline::CheckPrerequisites(const std::string &stage) const {
  int idx = StageIndex(stage);
  for (int i = 0; i < idx; i++) {
    // Fusion is optional; without configured inputs the stage is a no-op and
    // later stages must not require it.
    if (std::string(kStages[i]) == "fuse" &&
        cfg_.Get("fusion.inputs", "").empty())
      continue;
    auto it = manifest_.find(kStages[i]);
    if (it == manifest_.end())
      throw DataError("stage '" + stage + "' needs stage '" + kStages[i] +
                      "' to run first (missing prerequisite artifact)");
    if (it->second != hash_)
      throw DataError("stale artifact: stage '" + kStages[i] +
                      "' was built with config hash " + it->second +
                      " but the current config hashes to " + hash_ +
                      "; rerun from that stage");
  }
}

void Pipeline::RunStage(const std::string &stage, bool force) {
  StageIndex(stage);  // validates the name
  CheckPrerequisites(stage);
  if (!force && StageDone(stage))
    return;
  if (stage == "gen")
    StageGen();
  else if (stage == "features")
    StageFeatures();
  else if (stage == "vad")
    StageVad();
  else if (stage == "train")
    StageTrain();
  else if (stage == "extract")
    StageExtract();
  else if (stage == "lda")
    StageLda();
  else if (stage == "norm")
    StageNorm();
  else if (stage == "plda")
    StagePlda();
  else if (stage == "adapt")
    StageAdapt();
  else if (stage == "score")
    StageScore();
  else if (stage == "asnorm")
    StageAsnorm();
  else if (stage == "calibrate")
    StageCalibrate();
  else if (stage == "fuse")
    StageFuse();
  else if (stage == "evaluate")
    StageEvaluate();
  manifest_[stage] = hash_;
  SaveManifest();
}

void Pipeline::RunRange(const std::string &first, const std::string &last,
                        bool force) {
  int a = StageIndex(first), b = StageIndex(last);
  if (a > b)
    throw ConfigError("stage range runs backwards: " + first + " to " + last);
  for (int i = a; i <= b; i++)
    RunStage(kStages[i], force);
}

void Pipeline::RunAll() {
  for (const auto &s : kStages)
    RunStage(s, /*force=*/false);
}

// ------------------------------------------------------------------- stages

void Pipeline::StageGen() {
  fs::create_directories(Path("data"));
  std::uint64_t seed = static_cast<std::uint64_t>(cfg_.GetInt("seed", 7));

  ToySpeakerModel base;
  base.feature_dim = cfg_.GetInt("toy.dim", 23);
  base.frames_per_utt = cfg_.GetInt("toy.frames", 200);
  base.speaker_stddev = cfg_.GetDouble("toy.speaker_stddev", 1.0);
  base.frame_stddev = cfg_.GetDouble("toy.frame_stddev", 0.3);
  base.senones = cfg_.GetInt("toy.senones", 40);

  ToySpeakerModel train = base;
  train.num_speakers = cfg_.GetInt("toy.speakers", 50);
  train.utts_per_speaker = cfg_.GetInt("toy.utts", 20);
  train.id_prefix = "spk";
  ToySpeakerModel eval = base;
  eval.num_speakers = cfg_.GetInt("toy.eval_speakers", 20);
  eval.utts_per_speaker = cfg_.GetInt("toy.eval_utts", 10);
  eval.id_prefix = "ev";
  ToySpeakerModel cohort = base;
  cohort.num_speakers = cfg_.GetInt("toy.cohort_speakers", 30);
  cohort.utts_per_speaker = cfg_.GetInt("toy.cohort_utts", 2);
  cohort.id_prefix = "coh";

  ToyCorpus corpora[3] = {GenToyAudio(train, seed), GenToyAudio(eval, seed + 1),
                          GenToyAudio(cohort, seed + 2)};
  for (int i = 0; i < 3; i++) {
    ArchiveWriter w(Path(std::string("data/") + kSets[i] + ".feats"));
    for (const auto &utt : corpora[i].utts)
      w.Write(utt, corpora[i].feats.at(utt));
    w.Close();
    AtomicWriteText(Path(std::string("data/") + kSets[i] + ".spk"),
                    FormatSpkFile(corpora[i].speaker));
  }
  AtomicWriteText(Path("data/train.lab"),
                  FormatLabelFile(corpora[0].frame_labels));

  // Trials: utterance 0 of each eval speaker enrolls; all other eval
  // utterances are tests.
  const ToyCorpus &ev = corpora[1];
  std::vector<std::string> enrolls, tests;
  for (const auto &utt : ev.utts) {
    if (utt.size() > 3 && utt.substr(utt.size() - 3) == "_u0")
      enrolls.push_back(utt);
    else
      tests.push_back(utt);
  }
  std::ostringstream key;
  for (const auto &e : enrolls)
    for (const auto &t : tests)
      key << e << " " << t << " "
          << (ev.speaker.at(e) == ev.speaker.at(t) ? "target" : "nontarget")
          << "\n";
  AtomicWriteText(Path("data/trials.key"), key.str());
}

void Pipeline::StageFeatures() {
  fs::create_directories(Path("feats"));
  int cmn = cfg_.GetInt("features.cmn_window", 0);
  for (const char *set : kSets) {
    ArchiveReader in(Path(std::string("data/") + set + ".feats"));
    ArchiveWriter out(Path(std::string("feats/") + set + ".proc"));
    for (const auto &utt : in.Ids())
      out.Write(utt, SlidingCmn(in.Read(utt), cmn));
    out.Close();
  }
}

void Pipeline::StageVad() {
  bool enabled = cfg_.GetBool("vad.enabled", true);
  double offset = cfg_.GetDouble("vad.offset", 0.0);
  int context = cfg_.GetInt("vad.context", 2);
  auto labels = ReadLabelFile(Path("data/train.lab"));
  std::map<std::string, std::vector<int>> masked_labels;
  for (const char *set : kSets) {
    ArchiveReader in(Path(std::string("feats/") + set + ".proc"));
    ArchiveWriter out(Path(std::string("feats/") + set + ".vad"));
    for (const auto &utt : in.Ids()) {
      Matrix feats = in.Read(utt);
      FrameMask mask;
      mask.keep.assign(feats.rows(), true);
      if (enabled) {
        FeatureMatrix fm;
        fm.values = feats;
        FrameMask m = EnergyVad(fm, offset, context);
        bool any = std::find(m.keep.begin(), m.keep.end(), true) != m.keep.end();
        if (any)
          mask = m;
      }
      long kept = std::count(mask.keep.begin(), mask.keep.end(), true);
      Matrix out_feats(kept, feats.cols());
      long r = 0;
      for (long t = 0; t < feats.rows(); t++)
        if (mask.keep[t])
          out_feats.row(r++) = feats.row(t);
      out.Write(utt, out_feats);
      if (std::string(set) == "train") {
        auto it = labels.find(utt);
        if (it == labels.end())
          throw DataError("no frame labels for utterance " + utt);
        if (it->second.size() != mask.keep.size())
          throw DataError("frame label length mismatch for " + utt);
        std::vector<int> kept_labels;
        for (size_t t = 0; t < mask.keep.size(); t++)
          if (mask.keep[t])
            kept_labels.push_back(it->second[t]);
        masked_labels[utt] = kept_labels;
      }
    }
    out.Close();
  }
  AtomicWriteText(Path("feats/train.vad.lab"), FormatLabelFile(masked_labels));
}

void Pipeline::StageTrain() {
  fs::create_directories(Path("model"));
  std::string arch = cfg_.Get("train.arch", "etdnn");
  int divisor = cfg_.GetInt("train.width_divisor", 16);
  NetSpec spec = Builtin(arch);
  if (divisor > 1)
    spec = ScaleWidth(spec, divisor);
  int senones = cfg_.GetInt("toy.senones", 40);
  for (auto &[branch, classes] : spec.output_classes)
    classes = senones;

  TrainData data;
  ArchiveReader in(Path("feats/train.vad"));
  data.utts = in.Ids();
  for (const auto &utt : data.utts)
    data.feats[utt] = in.Read(utt);
  data.speaker = ReadSpkFile(Path("data/train.spk"));
  data.frame_labels = ReadLabelFile(Path("feats/train.vad.lab"));
  data.num_speakers = cfg_.GetInt("toy.speakers", 50);
  data.senones = senones;

  bool multibranch = !spec.output_classes.empty();
  TrainConfig tc;
  tc.loss.kind = ParseLossKind(cfg_.Get("train.loss", "softmax"));
  tc.loss.margin = cfg_.GetDouble("train.margin", 0.15);
  tc.loss.scale = cfg_.GetDouble("train.scale", 30.0);
  tc.loss.angular_m = cfg_.GetInt("train.angular_m", 4);
  tc.loss.multitask_weight =
      cfg_.GetDouble("train.multitask_weight", multibranch ? 0.3 : 0.0);
  tc.epochs = cfg_.GetInt("train.epochs", 4);
  tc.learn_rate = cfg_.GetDouble("train.learn_rate", 0.02);
  tc.momentum = cfg_.GetDouble("train.momentum", 0.9);
  tc.lr_decay = cfg_.GetDouble("train.lr_decay", 0.7);
  tc.chunk_frames = cfg_.GetInt("train.chunk_frames", 150);
  tc.grad_clip = cfg_.GetDouble("train.grad_clip", 5.0);
  tc.seed = static_cast<std::uint64_t>(cfg_.GetInt("seed", 7)) + 100;

  int input_dim = cfg_.GetInt("toy.dim", 23);
  Network net(spec, input_dim, data.num_speakers);
  TrainReport report;
  Params p = Train(net, data, tc, &report);
  SaveModel(Path("model/embedder.svkt"), spec, p, tc.loss, data.num_speakers);

  std::ostringstream os;
  os.precision(10);
  os << "architecture: " << arch << " (width divisor " << divisor << ")\n";
  for (size_t e = 0; e < report.epoch_loss.size(); e++)
    os << "epoch " << e << " mean loss " << report.epoch_loss[e] << "\n";
  os << "heldout loss " << report.heldout_initial << " -> "
     << report.heldout_final << "\n";
  AtomicWriteText(Path("model/train_report.txt"), os.str());
}

void Pipeline::StageExtract() {
  fs::create_directories(Path("emb"));
  LoadedModel lm = LoadModel(Path("model/embedder.svkt"));
  int input_dim = cfg_.GetInt("toy.dim", 23);
  Network net(lm.spec, input_dim, lm.speaker_classes);
  for (const char *set : kSets) {
    ArchiveReader in(Path(std::string("feats/") + set + ".vad"));
    ArchiveWriter out(Path(std::string("emb/") + set + ".emb"));
    for (const auto &utt : in.Ids()) {
      FeatureMatrix fm;
      fm.values = in.Read(utt);
      Embedding e = ExtractEmbedding(lm.params, net, fm, utt);
      out.Write(utt, e.vector.transpose());
    }
    out.Close();
  }
}

void Pipeline::StageLda() {
  fs::create_directories(Path("backend"));
  ArchiveReader in(Path("emb/train.emb"));
  auto spk = ReadSpkFile(Path("data/train.spk"));
  std::vector<std::string> ids = in.Ids();
  if (ids.empty())
    throw DataError("no training embeddings");
  Matrix vectors(ids.size(), in.Read(ids[0]).cols());
  std::vector<int> labels;
  for (size_t i = 0; i < ids.size(); i++) {
    vectors.row(i) = in.Read(ids[i]).row(0);
    labels.push_back(spk.at(ids[i]));
  }
  std::vector<std::string> warnings;
  LdaModel lda = LdaFit(vectors, labels, cfg_.GetInt("backend.lda_dim", 150),
                        &warnings);
  Matrix mean(lda.mean.size(), 1);
  mean.col(0) = lda.mean;
  std::map<std::string, std::string> meta;
  if (!warnings.empty()) {
    std::ostringstream os;
    for (const auto &w : warnings)
      os << w << "\n";
    meta["warnings"] = os.str();
  }
  WriteTensorModel(Path("backend/lda.svkt"),
                   {{"projection", lda.projection}, {"mean", mean}}, meta);
  for (const char *set : kSets) {
    ArchiveReader emb(Path(std::string("emb/") + set + ".emb"));
    ArchiveWriter out(Path(std::string("emb/") + set + ".lda"));
    for (const auto &utt : emb.Ids())
      out.Write(utt, LdaApply(lda, emb.Read(utt).row(0)).transpose());
    out.Close();
  }
}

void Pipeline::StageNorm() {
  for (const char *set : kSets) {
    ArchiveReader in(Path(std::string("emb/") + set + ".lda"));
    ArchiveWriter out(Path(std::string("emb/") + set + ".bk"));
    for (const auto &utt : in.Ids())
      out.Write(utt, LengthNorm(in.Read(utt).row(0)).transpose());
    out.Close();
  }
}

void Pipeline::StagePlda() {
  ArchiveReader in(Path("emb/train.bk"));
  auto spk = ReadSpkFile(Path("data/train.spk"));
  std::vector<std::string> ids = in.Ids();
  Matrix vectors(ids.size(), in.Read(ids[0]).cols());
  std::vector<int> labels;
  for (size_t i = 0; i < ids.size(); i++) {
    vectors.row(i) = in.Read(ids[i]).row(0);
    labels.push_back(spk.at(ids[i]));
  }
  std::vector<double> loglikes;
  PldaModel plda =
      PldaFit(vectors, labels, cfg_.GetInt("backend.plda_iters", 10), &loglikes);
  Matrix mean(plda.mean.size(), 1);
  mean.col(0) = plda.mean;
  std::ostringstream ll;
  ll.precision(17);
  for (double v : loglikes)
    ll << v << "\n";
  WriteTensorModel(Path("backend/plda.svkt"),
                   {{"mean", mean}, {"between", plda.between},
                    {"within", plda.within}},
                   {{"loglikes", ll.str()}});
}

void Pipeline::StageAdapt() {
  PldaModel plda = ReadPldaFile(Path("backend/plda.svkt"));
  PldaModel out = plda;
  if (cfg_.GetBool("backend.adapt", true)) {
    ArchiveReader in(Path("emb/cohort.bk"));
    std::vector<std::string> ids = in.Ids();
    Matrix vectors(ids.size(), plda.mean.size());
    for (size_t i = 0; i < ids.size(); i++)
      vectors.row(i) = in.Read(ids[i]).row(0);
    AdaptConfig ac;
    ac.within_scale = cfg_.GetDouble("backend.adapt_within", 0.75);
    ac.between_scale = cfg_.GetDouble("backend.adapt_between", 0.25);
    out = PldaAdapt(plda, vectors, ac);
  }
  Matrix mean(out.mean.size(), 1);
  mean.col(0) = out.mean;
  WriteTensorModel(Path("backend/plda_adapt.svkt"),
                   {{"mean", mean}, {"between", out.between},
                    {"within", out.within}},
                   {});
}

void Pipeline::StageScore() {
  fs::create_directories(Path("scores"));
  PldaScorer scorer(ReadPldaFile(Path("backend/plda_adapt.svkt")));
  ArchiveReader emb(Path("emb/eval.bk"));
  std::vector<Trial> trials = ReadKeyFile(Path("data/trials.key"));
  std::map<std::string, Vector> cache;
  auto get = [&](const std::string &utt) -> const Vector & {
    auto it = cache.find(utt);
    if (it == cache.end())
      it = cache.emplace(utt, Vector(emb.Read(utt).row(0))).first;
    return it->second;
  };
  for (auto &t : trials)
    t.score = scorer.Score(get(t.enroll), get(t.test));
  WriteScoreFile(Path("scores/raw.txt"), trials);
}

void Pipeline::StageAsnorm() {
  PldaScorer scorer(ReadPldaFile(Path("backend/plda_adapt.svkt")));
  ArchiveReader emb(Path("emb/eval.bk"));
  ArchiveReader coh(Path("emb/cohort.bk"));
  std::vector<Vector> cohort;
  for (const auto &utt : coh.Ids())
    cohort.push_back(coh.Read(utt).row(0));
  int k = cfg_.GetInt("asnorm.k", kDefaultAsNormK);
  std::vector<Trial> trials = ReadScoreFile(Path("scores/raw.txt"));
  std::map<std::string, std::vector<double>> side;
  auto get_side = [&](const std::string &utt) -> const std::vector<double> & {
    auto it = side.find(utt);
    if (it == side.end()) {
      Vector v = emb.Read(utt).row(0);
      std::vector<double> scores;
      scores.reserve(cohort.size());
      for (const auto &c : cohort)
        scores.push_back(scorer.Score(v, c));
      it = side.emplace(utt, std::move(scores)).first;
    }
    return it->second;
  };
  for (auto &t : trials)
    t.score = AsNorm(t.score, get_side(t.enroll), get_side(t.test), k);
  WriteScoreFile(Path("scores/asnorm.txt"), trials);
}

void Pipeline::StageCalibrate() {
  std::vector<Trial> trials = ReadScoreFile(Path("scores/asnorm.txt"));
  std::vector<Trial> key = ReadKeyFile(Path("data/trials.key"));
  std::map<std::pair<std::string, std::string>, int> labels;
  for (const auto &t : key)
    labels[{t.enroll, t.test}] = t.label;
  std::vector<double> scores;
  std::vector<bool> is_target;
  for (const auto &t : trials) {
    auto it = labels.find({t.enroll, t.test});
    if (it == labels.end() || it->second < 0)
      continue;
    scores.push_back(t.score);
    is_target.push_back(it->second == 1);
  }
  CalibrationMap map = PavFit(scores, is_target);
  AtomicWriteText(Path("backend/calib.txt"), SerializeCalibrationMap(map));
  for (auto &t : trials)
    t.score = PavApply(map, t.score);
  WriteScoreFile(Path("scores/calibrated.txt"), trials);
}

void Pipeline::StageFuse() {
  std::string inputs = cfg_.Get("fusion.inputs", "");
  if (inputs.empty())
    return;  // single-subsystem run; nothing to fuse
  std::vector<std::string> paths = {Path("scores/calibrated.txt")};
  std::istringstream is(inputs);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = Trim(item);
    if (!item.empty())
      paths.push_back(item);
  }
  if (paths.size() < 2)
    throw ConfigError("fusion needs at least 2 subsystems");

  std::vector<Trial> base = ReadScoreFile(paths[0]);
  Matrix scores(base.size(), paths.size());
  for (size_t j = 0; j < paths.size(); j++) {
    std::vector<Trial> sys = ReadScoreFile(paths[j]);
    std::map<std::pair<std::string, std::string>, double> lut;
    for (const auto &t : sys)
      lut[{t.enroll, t.test}] = t.score;
    for (size_t i = 0; i < base.size(); i++) {
      auto it = lut.find({base[i].enroll, base[i].test});
      if (it == lut.end())
        throw DataError("subsystem " + paths[j] + " is missing trial " +
                        base[i].enroll + " " + base[i].test);
      scores(i, j) = it->second;
    }
  }
  std::vector<Trial> key = ReadKeyFile(Path("data/trials.key"));
  std::map<std::pair<std::string, std::string>, int> labels;
  for (const auto &t : key)
    labels[{t.enroll, t.test}] = t.label;
  std::vector<bool> is_target;
  std::vector<long> rows;
  for (size_t i = 0; i < base.size(); i++) {
    auto it = labels.find({base[i].enroll, base[i].test});
    if (it == labels.end() || it->second < 0)
      continue;
    rows.push_back(static_cast<long>(i));
    is_target.push_back(it->second == 1);
  }
  Matrix labeled(rows.size(), scores.cols());
  for (size_t i = 0; i < rows.size(); i++)
    labeled.row(i) = scores.row(rows[i]);
  FusionConfig fc;
  fc.effective_prior = cfg_.GetDouble("fusion.prior", 0.5);
  FusionModel fm = FusionFit(labeled, is_target, fc);
  AtomicWriteText(Path("backend/fusion.txt"), SerializeFusionModel(fm));
  std::vector<double> fused = FusionApplyRows(fm, scores);
  std::vector<Trial> out = base;
  for (size_t i = 0; i < out.size(); i++)
    out[i].score = fused[i];
  WriteScoreFile(Path("scores/fused.txt"), out);
}

void Pipeline::StageEvaluate() {
  // Report workdir-relative paths so identical configs yield identical bytes.
  std::string score_rel = fs::exists(Path("scores/fused.txt"))
                              ? "scores/fused.txt"
                              : "scores/calibrated.txt";
  std::string score_path = Path(score_rel);
  std::vector<Trial> trials = ReadScoreFile(score_path);
  std::vector<Trial> key = ReadKeyFile(Path("data/trials.key"));
  std::map<std::pair<std::string, std::string>, int> labels;
  for (const auto &t : key)
    labels[{t.enroll, t.test}] = t.label;
  std::vector<double> tgt, non;
  std::vector<std::string> excluded;
  for (const auto &t : trials) {
    auto it = labels.find({t.enroll, t.test});
    if (it == labels.end() || it->second < 0) {
      excluded.push_back(t.enroll + " " + t.test);
      continue;
    }
    (it->second == 1 ? tgt : non).push_back(t.score);
  }
  DcfConfig dc;
  dc.p_targets = cfg_.GetDoubleList("dcf.p_targets", {0.01, 0.005});
  dc.c_miss = cfg_.GetDouble("dcf.c_miss", 1.0);
  dc.c_fa = cfg_.GetDouble("dcf.c_fa", 1.0);
  MetricReport r = Evaluate(tgt, non, dc);
  std::ostringstream os;
  os << "scores: " << score_rel << "\n";
  os << "trials: " << tgt.size() + non.size() << " (" << tgt.size()
     << " target, " << non.size() << " nontarget)\n";
  if (!excluded.empty()) {
    os << "warning: " << excluded.size()
       << " scored trials missing from the key were excluded:\n";
    for (const auto &e : excluded)
      os << "  " << e << "\n";
  }
  os << r.Format(dc);
  AtomicWriteText(Path("report.txt"), os.str());
}

}  // namespace svkit
