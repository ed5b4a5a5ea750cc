// tools/svkit_main.cpp
//
// Command-line front end.  Most subcommands drive one or more stages of the
// work-directory pipeline; validate-spec and grad-check operate standalone.

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

#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "svkit/backend.hpp"
#include "svkit/embedder.hpp"
#include "svkit/features.hpp"
#include "svkit/io.hpp"
#include "svkit/metrics.hpp"
#include "svkit/netspec.hpp"
#include "svkit/pipeline.hpp"

namespace {

using namespace svkit;

struct GlobalOpts {
  std::string config_path;
  int seed = -1;
  int workers = 1;
};

Pipeline MakePipeline(const GlobalOpts &g, const std::string &workdir) {
  PipelineConfig cfg;
  if (!g.config_path.empty())
    cfg = LoadPipelineConfig(g.config_path);
  if (g.seed >= 0)
    cfg.Set("seed", std::to_string(g.seed));
  return Pipeline(workdir, cfg);
}

int RunStages(const GlobalOpts &g, const std::string &workdir,
              const std::vector<std::string> &stages, bool force) {
  Pipeline p = MakePipeline(g, workdir);
  for (const auto &s : stages)
    p.RunStage(s, force);
  return 0;
}

int FeaturesFromWavs(const std::string &wav_scp, const std::string &out_path,
                     bool fbank, int cmn_window, bool vad, double vad_offset,
                     int vad_context) {
  std::ifstream in(wav_scp);
  if (!in)
    throw DataError("cannot open " + wav_scp);
  FeatureConfig fc;
  fc.kind = fbank ? FeatureKind::kFbank : FeatureKind::kMfcc;
  fc.cmn_window = cmn_window;
  ArchiveWriter out(out_path);
  std::string utt, path;
  int count = 0;
  while (in >> utt >> path) {
    FeatureMatrix f = ComputeFeatures(ReadWav(path), fc);
    if (vad)
      f = ApplyMask(f, EnergyVad(f, vad_offset, vad_context));
    out.Write(utt, f.values);
    count++;
  }
  if (count == 0)
    throw DataError("empty wav list: " + wav_scp);
  out.Close();
  std::cout << "wrote " << count << " utterances to " << out_path << "\n";
  return 0;
}

int ValidateSpec(const std::string &arch, const std::string &file) {
  NetSpec spec;
  if (!arch.empty()) {
    spec = Builtin(arch);
  } else if (!file.empty()) {
    spec = ParseNetSpec(ReadTextFile(file));
  } else {
    throw ConfigError("validate-spec needs --arch or --file");
  }
  ValidationReport report = Validate(spec);
  if (report.ok()) {
    std::cout << spec.name << ": ok\n";
    return 0;
  }
  for (const auto &v : report.violations)
    std::cout << spec.name << ": " << v << "\n";
  throw ConfigError("spec validation failed with " +
                    std::to_string(report.violations.size()) + " violations");
}

int RunGradCheck(const std::string &arch, int divisor, const std::string &loss,
                 double tol, std::uint64_t seed, double step) {
  NetSpec spec = Builtin(arch);
  if (divisor > 1)
    spec = ScaleWidth(spec, divisor);
  for (auto &[branch, classes] : spec.output_classes)
    classes = 5;
  LossConfig cfg;
  if (loss == "softmax")
    cfg.kind = LossKind::kSoftmax;
  else if (loss == "amsoftmax")
    cfg.kind = LossKind::kAmSoftmax;
  else if (loss == "asoftmax")
    cfg.kind = LossKind::kASoftmax;
  else
    throw ConfigError("unknown loss: " + loss);
  if (!spec.output_classes.empty())
    cfg.multitask_weight = 0.3;
  Network net(spec, 10, 3);
  GradCheckReport r = GradCheck(net, cfg, seed, 4, step);
  std::cout << arch << " " << loss << ": max relative error " << r.max_rel_error
            << " (worst tensor " << r.worst_tensor << ")\n";
  if (r.max_rel_error > tol)
    throw NumericalError("gradient check failed: " +
                         std::to_string(r.max_rel_error) + " > tolerance");
  return 0;
}

int EvaluateFiles(const std::string &scores_path, const std::string &key_path,
                  const std::vector<double> &p_targets) {
  std::vector<Trial> trials = ReadScoreFile(scores_path);
  std::vector<Trial> key = ReadKeyFile(key_path);
  std::map<std::pair<std::string, std::string>, int> labels;
  for (const auto &t : key)
    labels[{t.enroll, t.test}] = t.label;
  std::vector<double> tgt, non;
  int excluded = 0;
  for (const auto &t : trials) {
    auto it = labels.find({t.enroll, t.test});
    if (it == labels.end() || it->second < 0) {
      excluded++;
      continue;
    }
    (it->second == 1 ? tgt : non).push_back(t.score);
  }
  if (excluded > 0)
    std::cerr << "warning: excluded " << excluded
              << " scored trials missing from the key\n";
  DcfConfig dc;
  if (!p_targets.empty())
    dc.p_targets = p_targets;
  std::cout << Evaluate(tgt, non, dc).Format(dc);
  return 0;
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"speaker-verification toolkit"};
  app.require_subcommand(1);

  GlobalOpts g;
  app.add_option("--config", g.config_path, "pipeline config file");
  app.add_option("--seed", g.seed, "override the config seed");
  app.add_option("--workers", g.workers, "worker threads (reserved)");

  std::string workdir = "work";
  bool force = false;
  for (const char *name : {"gen-toy", "features", "train", "extract",
                           "backend-fit", "score", "asnorm", "calibrate",
                           "fuse", "evaluate"}) {
    CLI::App *sub = app.add_subcommand(name);
    sub->add_option("--workdir", workdir, "pipeline working directory");
    sub->add_flag("--force", force, "rerun even when up to date");
  }

  CLI::App *feat = app.get_subcommand("features");
  std::string wav_scp, feat_out;
  bool fbank = false, feat_vad = false;
  int cmn_window = 0, vad_context = 2;
  double vad_offset = 0.0;
  feat->add_option("--wav-scp", wav_scp,
                   "utt-to-wav map; standalone mode, bypasses the workdir");
  feat->add_option("--out", feat_out, "output archive (standalone mode)");
  feat->add_flag("--fbank", fbank, "log mel-filterbank instead of MFCC");
  feat->add_option("--cmn-window", cmn_window, "sliding CMN window frames");
  feat->add_flag("--vad", feat_vad, "apply energy VAD");
  feat->add_option("--vad-offset", vad_offset, "VAD energy threshold offset");
  feat->add_option("--vad-context", vad_context, "VAD smoothing context");

  CLI::App *eval = app.get_subcommand("evaluate");
  std::string eval_scores, eval_key;
  std::vector<double> eval_p;
  eval->add_option("--scores", eval_scores,
                   "score file; standalone mode with --key");
  eval->add_option("--key", eval_key, "trial key file (standalone mode)");
  eval->add_option("--p-target", eval_p, "DCF operating points");

  CLI::App *vspec = app.add_subcommand("validate-spec");
  std::string vs_arch, vs_file;
  vspec->add_option("--arch", vs_arch, "builtin architecture name");
  vspec->add_option("--file", vs_file, "architecture description file");

  CLI::App *gc = app.add_subcommand("grad-check");
  std::string gc_arch = "etdnn", gc_loss = "softmax";
  int gc_divisor = 64;
  double gc_tol = 1e-4;
  std::uint64_t gc_seed = 1;
  gc->add_option("--arch", gc_arch, "builtin architecture name");
  gc->add_option("--divisor", gc_divisor, "width divisor");
  gc->add_option("--loss", gc_loss, "softmax | amsoftmax | asoftmax");
  gc->add_option("--tol", gc_tol, "max relative error tolerance");
  gc->add_option("--check-seed", gc_seed, "probe seed");
  double gc_step = 1e-5;
  gc->add_option("--step", gc_step, "finite-difference step");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 1;  // usage error
  }

  try {
    if (app.got_subcommand("gen-toy"))
      return RunStages(g, workdir, {"gen"}, force);
    if (app.got_subcommand("features")) {
      if (!wav_scp.empty() || !feat_out.empty()) {
        if (wav_scp.empty() || feat_out.empty())
          throw ConfigError("standalone features mode needs --wav-scp and --out");
        return FeaturesFromWavs(wav_scp, feat_out, fbank, cmn_window, feat_vad,
                                vad_offset, vad_context);
      }
      return RunStages(g, workdir, {"features", "vad"}, force);
    }
    if (app.got_subcommand("train"))
      return RunStages(g, workdir, {"train"}, force);
    if (app.got_subcommand("extract"))
      return RunStages(g, workdir, {"extract"}, force);
    if (app.got_subcommand("backend-fit"))
      return RunStages(g, workdir, {"lda", "norm", "plda", "adapt"}, force);
    if (app.got_subcommand("score"))
      return RunStages(g, workdir, {"score"}, force);
    if (app.got_subcommand("asnorm"))
      return RunStages(g, workdir, {"asnorm"}, force);
    if (app.got_subcommand("calibrate"))
      return RunStages(g, workdir, {"calibrate"}, force);
    if (app.got_subcommand("fuse"))
      return RunStages(g, workdir, {"fuse"}, force);
    if (app.got_subcommand("evaluate")) {
      if (!eval_scores.empty() || !eval_key.empty()) {
        if (eval_scores.empty() || eval_key.empty())
          throw ConfigError("standalone evaluate mode needs --scores and --key");
        return EvaluateFiles(eval_scores, eval_key, eval_p);
      }
      int rc = RunStages(g, workdir, {"evaluate"}, force);
      Pipeline p = MakePipeline(g, workdir);
      std::cout << ReadTextFile(p.Path("report.txt"));
      return rc;
    }
    if (app.got_subcommand("validate-spec"))
      return ValidateSpec(vs_arch, vs_file);
    if (app.got_subcommand("grad-check"))
      return RunGradCheck(gc_arch, gc_divisor, gc_loss, gc_tol, gc_seed, gc_step);
  } catch (const ConfigError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const DataError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const NumericalError &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 3;
  } catch (const std::exception &e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 1;
}
