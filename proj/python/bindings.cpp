// python/bindings.cpp
//
// pybind11 module exposing the front end, network specs, back end, score
// normalization, calibration, fusion, metrics and the staged pipeline.

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

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "svkit/backend.hpp"
#include "svkit/calibration.hpp"
#include "svkit/embedder.hpp"
#include "svkit/features.hpp"
#include "svkit/fusion.hpp"
#include "svkit/io.hpp"
#include "svkit/metrics.hpp"
#include "svkit/netspec.hpp"
#include "svkit/pipeline.hpp"
#include "svkit/scorenorm.hpp"
#include "svkit/toydata.hpp"

namespace py = pybind11;
using namespace svkit;

namespace {

FeatureConfig MakeFeatureConfig(const std::string &kind, int num_coeffs,
                                double low_freq, double high_freq,
                                int cmn_window) {
  FeatureConfig cfg;
  if (kind == "mfcc")
    cfg.kind = FeatureKind::kMfcc;
  else if (kind == "fbank")
    cfg.kind = FeatureKind::kFbank;
  else
    throw ConfigError("unknown feature kind: " + kind);
  cfg.num_coeffs = num_coeffs;
  cfg.num_mel_bins = num_coeffs;
  cfg.low_freq = low_freq;
  cfg.high_freq = high_freq;
  cfg.cmn_window = cmn_window;
  return cfg;
}

Matrix PyComputeFeatures(const std::vector<double> &samples, int sample_rate,
                         const std::string &kind, int num_coeffs,
                         double low_freq, double high_freq, int cmn_window) {
  Waveform w;
  w.samples = samples;
  w.sample_rate = sample_rate;
  return ComputeFeatures(
             w, MakeFeatureConfig(kind, num_coeffs, low_freq, high_freq,
                                  cmn_window))
      .values;
}

std::vector<bool> PyEnergyVad(const Matrix &feats, double threshold_offset,
                              int context) {
  FeatureMatrix f;
  f.values = feats;
  return EnergyVad(f, threshold_offset, context).keep;
}

double PyGradCheck(const std::string &arch, const std::string &loss,
                   int divisor, std::uint64_t seed) {
  NetSpec spec = ScaleWidth(Builtin(arch), divisor);
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
  return GradCheck(net, cfg, seed).max_rel_error;
}

Pipeline MakePyPipeline(const std::string &workdir,
                        const std::map<std::string, std::string> &config) {
  PipelineConfig cfg;
  for (const auto &[k, v] : config)
    cfg.Set(k, v);
  return Pipeline(workdir, cfg);
}

}  // namespace

PYBIND11_MODULE(svkit_py, m) {
  m.doc() = "speaker-verification toolkit";

  py::register_exception<ConfigError>(m, "ConfigError");
  py::register_exception<DataError>(m, "DataError");
  py::register_exception<NumericalError>(m, "NumericalError");

  // ------------------------------------------------------------- features
  m.def("compute_features", &PyComputeFeatures, py::arg("samples"),
        py::arg("sample_rate"), py::arg("kind") = "mfcc",
        py::arg("num_coeffs") = 23, py::arg("low_freq") = 20.0,
        py::arg("high_freq") = 3700.0, py::arg("cmn_window") = 0,
        "MFCC or log mel-filterbank matrix (frames x coeffs) of a waveform");
  m.def("energy_vad", &PyEnergyVad, py::arg("feats"),
        py::arg("threshold_offset") = 0.0, py::arg("context") = 2,
        "per-frame keep decisions from the C0 energy column");

  // -------------------------------------------------------------- netspec
  m.def(
      "builtin_spec",
      [](const std::string &arch) { return RenderNetSpec(Builtin(arch)); },
      py::arg("arch"), "DSL text of a builtin architecture");
  m.def(
      "validate_spec",
      [](const std::string &text) {
        return Validate(ParseNetSpec(text)).violations;
      },
      py::arg("text"), "list of rule violations; empty means valid");

  // ------------------------------------------------------------- embedder
  m.def("grad_check", &PyGradCheck, py::arg("arch"),
        py::arg("loss") = "softmax", py::arg("divisor") = 64,
        py::arg("seed") = 1,
        "max relative analytic-vs-numeric gradient error on a reduced net");

  // -------------------------------------------------------------- backend
  py::class_<LdaModel>(m, "LdaModel")
      .def_readonly("projection", &LdaModel::projection)
      .def_readonly("mean", &LdaModel::mean)
      .def("apply", &LdaApply)
      .def("apply_rows", &LdaApplyRows);
  m.def(
      "lda_fit",
      [](const Matrix &vectors, const std::vector<int> &labels, int out_dim) {
        return LdaFit(vectors, labels, out_dim);
      },
      py::arg("vectors"), py::arg("labels"), py::arg("out_dim"));
  m.def("length_norm", &LengthNorm, py::arg("v"));

  py::class_<PldaModel>(m, "PldaModel")
      .def(py::init<>())
      .def_readwrite("mean", &PldaModel::mean)
      .def_readwrite("between", &PldaModel::between)
      .def_readwrite("within", &PldaModel::within)
      .def("score", &PldaScore, py::arg("enroll"), py::arg("test"));
  m.def(
      "plda_fit",
      [](const Matrix &vectors, const std::vector<int> &labels, int iters) {
        std::vector<double> ll;
        PldaModel model = PldaFit(vectors, labels, iters, &ll);
        return py::make_tuple(model, ll);
      },
      py::arg("vectors"), py::arg("labels"), py::arg("iters") = 10,
      "(model, per-iteration log-likelihoods)");
  m.def(
      "plda_adapt",
      [](const PldaModel &model, const Matrix &indomain, double within_scale,
         double between_scale) {
        return PldaAdapt(model, indomain, {within_scale, between_scale});
      },
      py::arg("model"), py::arg("indomain"), py::arg("within_scale") = 0.75,
      py::arg("between_scale") = 0.25);

  // ------------------------------------------------------------ scorenorm
  m.def("as_norm", &AsNorm, py::arg("raw"), py::arg("enroll_cohort"),
        py::arg("test_cohort"), py::arg("k") = kDefaultAsNormK,
        "adaptive symmetric score normalization against top-K cohort stats");

  // ---------------------------------------------------------- calibration
  py::class_<CalibrationMap>(m, "CalibrationMap")
      .def_readonly("breakpoints", &CalibrationMap::breakpoints)
      .def_readonly("llrs", &CalibrationMap::llrs)
      .def("apply", &PavApply, py::arg("score"));
  m.def(
      "pav_fit",
      [](const std::vector<double> &scores, const std::vector<bool> &labels) {
        return PavFit(scores, labels);
      },
      py::arg("scores"), py::arg("labels"));
  m.def("isotonic_fit", &IsotonicFit, py::arg("x"), py::arg("y"),
        py::arg("weights"));

  // --------------------------------------------------------------- fusion
  py::class_<FusionModel>(m, "FusionModel")
      .def_readonly("weights", &FusionModel::weights)
      .def_readonly("offset", &FusionModel::offset)
      .def("apply", &FusionApply, py::arg("scores"))
      .def("apply_rows", &FusionApplyRows, py::arg("scores"));
  m.def(
      "fusion_fit",
      [](const Matrix &scores, const std::vector<bool> &labels,
         double effective_prior) {
        FusionConfig cfg;
        cfg.effective_prior = effective_prior;
        return FusionFit(scores, labels, cfg);
      },
      py::arg("scores"), py::arg("labels"), py::arg("effective_prior") = 0.5);

  // -------------------------------------------------------------- metrics
  m.def("eer", &Eer, py::arg("target_scores"), py::arg("nontarget_scores"),
        "equal error rate in percent");
  m.def("min_dcf", &MinDcfAt, py::arg("target_scores"),
        py::arg("nontarget_scores"), py::arg("p_target") = 0.01,
        py::arg("c_miss") = 1.0, py::arg("c_fa") = 1.0);
  m.def(
      "act_dcf",
      [](const std::vector<double> &tgt, const std::vector<double> &non,
         double p_target, double c_miss, double c_fa) {
        DcfConfig cfg;
        cfg.p_targets = {p_target};
        cfg.c_miss = c_miss;
        cfg.c_fa = c_fa;
        return ActDcf(tgt, non, cfg);
      },
      py::arg("target_scores"), py::arg("nontarget_scores"),
      py::arg("p_target") = 0.01, py::arg("c_miss") = 1.0,
      py::arg("c_fa") = 1.0);

  // -------------------------------------------------------------- toydata
  m.def(
      "gen_toy_embeddings",
      [](const PldaModel &plda, int speakers, int per_speaker,
         std::uint64_t seed) {
        ToyEmbeddingSet set = GenToyEmbeddings(plda, speakers, per_speaker, seed);
        return py::make_tuple(set.vectors, set.labels);
      },
      py::arg("plda"), py::arg("speakers"), py::arg("per_speaker"),
      py::arg("seed") = 0, "(vectors, labels) from the PLDA generative model");

  // ------------------------------------------------------------- pipeline
  py::class_<Pipeline>(m, "Pipeline")
      .def(py::init(&MakePyPipeline), py::arg("workdir"),
           py::arg("config") = std::map<std::string, std::string>{})
      .def_static("stages", &Pipeline::Stages)
      .def("stage_done", &Pipeline::StageDone, py::arg("stage"))
      .def("run_stage", &Pipeline::RunStage, py::arg("stage"),
           py::arg("force") = false)
      .def("run_all", &Pipeline::RunAll)
      .def("workdir", &Pipeline::Workdir)
      .def("path", &Pipeline::Path, py::arg("relative"));
}
