// svkit/metrics.hpp
//
// Detection metrics over trial scores: EER, minimum and actual normalized
// detection cost (averaged across a list of operating points).

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

#ifndef SVKIT_METRICS_HPP
#define SVKIT_METRICS_HPP

#include <string>
#include <vector>

#include "svkit/common.hpp"

namespace svkit {

struct DcfConfig {
  std::vector<double> p_targets = {0.01, 0.005};
  double c_miss = 1.0;
  double c_fa = 1.0;
};

// Equal error rate in percent, via linear interpolation on the ROC between
// the adjacent operating points where miss rate crosses false-alarm rate.
double Eer(const std::vector<double> &target_scores,
           const std::vector<double> &nontarget_scores);

// Normalized minimum DCF at one operating point.
double MinDcfAt(const std::vector<double> &target_scores,
                const std::vector<double> &nontarget_scores, double p_target,
                double c_miss, double c_fa);

// Mean of the normalized minimum DCF over cfg.p_targets.
double MinDcf(const std::vector<double> &target_scores,
              const std::vector<double> &nontarget_scores,
              const DcfConfig &cfg);

// Normalized DCF at the Bayes threshold log(c_fa (1-p) / (c_miss p)) for each
// operating point, averaged.  Scores must be calibrated LLRs.
double ActDcf(const std::vector<double> &target_scores,
              const std::vector<double> &nontarget_scores,
              const DcfConfig &cfg);

struct MetricReport {
  double eer_percent = 0.0;
  std::vector<double> min_dcf_per_point;
  double min_dcf = 0.0;
  double act_dcf = 0.0;
  std::string Format(const DcfConfig &cfg) const;
};

MetricReport Evaluate(const std::vector<double> &target_scores,
                      const std::vector<double> &nontarget_scores,
                      const DcfConfig &cfg);

}  // namespace svkit

#endif  // SVKIT_METRICS_HPP
