// src/metrics.cpp

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

#include "svkit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

namespace svkit {

namespace {

struct RocPoint {
  double miss, fa;
};

void CheckBothClasses(const std::vector<double> &tgt,
                      const std::vector<double> &non) {
  if (tgt.empty() || non.empty())
    throw DataError("metrics need both target and nontarget scores");
  for (double s : tgt)
    if (!std::isfinite(s))
      throw NumericalError("non-finite target score");
  for (double s : non)
    if (!std::isfinite(s))
      throw NumericalError("non-finite nontarget score");
}

// Operating points achievable by thresholding, one per distinct score plus
// the accept-all and reject-all extremes.  Ordered by decreasing threshold:
// miss descends from 1, fa ascends to 1.
std::vector<RocPoint> RocPoints(const std::vector<double> &tgt,
                                const std::vector<double> &non) {
  std::vector<std::pair<double, int>> all;  // (score, is_target)
  all.reserve(tgt.size() + non.size());
  for (double s : tgt)
    all.push_back({s, 1});
  for (double s : non)
    all.push_back({s, 0});
  std::sort(all.begin(), all.end(),
            [](const auto &a, const auto &b) { return a.first > b.first; });
  const double nt = static_cast<double>(tgt.size());
  const double nn = static_cast<double>(non.size());
  std::vector<RocPoint> pts;
  pts.push_back({1.0, 0.0});
  double acc_t = 0, acc_n = 0;
  for (size_t i = 0; i < all.size(); i++) {
    acc_t += all[i].second;
    acc_n += 1 - all[i].second;
    bool boundary = (i + 1 == all.size()) || (all[i + 1].first != all[i].first);
    if (boundary)
      pts.push_back({1.0 - acc_t / nt, acc_n / nn});
  }
  return pts;
}

double DcfNorm(double p, double c_miss, double c_fa) {
  if (p <= 0.0 || p >= 1.0)
    throw ConfigError("p_target must lie in (0, 1)");
  return std::min(c_miss * p, c_fa * (1.0 - p));
}

}  // namespace

double Eer(const std::vector<double> &target_scores,
           const std::vector<double> &nontarget_scores) {
  CheckBothClasses(target_scores, nontarget_scores);
  auto pts = RocPoints(target_scores, nontarget_scores);
  for (size_t i = 0; i + 1 < pts.size(); i++) {
    double d0 = pts[i].miss - pts[i].fa;
    double d1 = pts[i + 1].miss - pts[i + 1].fa;
    if (d0 >= 0.0 && d1 < 0.0) {
      double alpha = d0 / (d0 - d1);
      double eer = pts[i].miss + alpha * (pts[i + 1].miss - pts[i].miss);
      return 100.0 * eer;
    }
  }
  // miss - fa starts at +1 and ends at -1; equality on the last point.
  return 100.0 * pts.back().miss;
}

double MinDcfAt(const std::vector<double> &target_scores,
                const std::vector<double> &nontarget_scores, double p_target,
                double c_miss, double c_fa) {
  CheckBothClasses(target_scores, nontarget_scores);
  double norm = DcfNorm(p_target, c_miss, c_fa);
  auto pts = RocPoints(target_scores, nontarget_scores);
  double best = std::numeric_limits<double>::infinity();
  for (const RocPoint &p : pts) {
    double cost = c_miss * p_target * p.miss + c_fa * (1.0 - p_target) * p.fa;
    best = std::min(best, cost);
  }
  return best / norm;
}

double MinDcf(const std::vector<double> &target_scores,
              const std::vector<double> &nontarget_scores,
              const DcfConfig &cfg) {
  if (cfg.p_targets.empty())
    throw ConfigError("empty p_target list");
  double sum = 0.0;
  for (double p : cfg.p_targets)
    sum += MinDcfAt(target_scores, nontarget_scores, p, cfg.c_miss, cfg.c_fa);
  return sum / cfg.p_targets.size();
}

double ActDcf(const std::vector<double> &target_scores,
              const std::vector<double> &nontarget_scores,
              const DcfConfig &cfg) {
  CheckBothClasses(target_scores, nontarget_scores);
  if (cfg.p_targets.empty())
    throw ConfigError("empty p_target list");
  double sum = 0.0;
  for (double p : cfg.p_targets) {
    double norm = DcfNorm(p, cfg.c_miss, cfg.c_fa);
    double theta = std::log(cfg.c_fa * (1.0 - p) / (cfg.c_miss * p));
    double miss = 0, fa = 0;
    for (double s : target_scores)
      miss += (s < theta) ? 1.0 : 0.0;
    for (double s : nontarget_scores)
      fa += (s >= theta) ? 1.0 : 0.0;
    miss /= target_scores.size();
    fa /= nontarget_scores.size();
    sum += (cfg.c_miss * p * miss + cfg.c_fa * (1.0 - p) * fa) / norm;
  }
  return sum / cfg.p_targets.size();
}

MetricReport Evaluate(const std::vector<double> &target_scores,
                      const std::vector<double> &nontarget_scores,
                      const DcfConfig &cfg) {
  MetricReport r;
  r.eer_percent = Eer(target_scores, nontarget_scores);
  for (double p : cfg.p_targets)
    r.min_dcf_per_point.push_back(
        MinDcfAt(target_scores, nontarget_scores, p, cfg.c_miss, cfg.c_fa));
  double sum = 0.0;
  for (double v : r.min_dcf_per_point)
    sum += v;
  r.min_dcf = sum / r.min_dcf_per_point.size();
  r.act_dcf = ActDcf(target_scores, nontarget_scores, cfg);
  return r;
}

std::string MetricReport::Format(const DcfConfig &cfg) const {
  std::ostringstream os;
  os.precision(6);
  os << std::fixed;
  os << "EER(%): " << eer_percent << "\n";
  for (size_t i = 0; i < min_dcf_per_point.size(); i++)
    os << "min-DCF(p=" << cfg.p_targets[i] << "): " << min_dcf_per_point[i]
       << "\n";
  os << "min-DCF: " << min_dcf << "\n";
  os << "act-DCF: " << act_dcf << "\n";
  return os.str();
}

}  // namespace svkit
