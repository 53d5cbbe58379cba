#pragma once

#include <map>
#include <string>

#include "metarev/training.hpp"

namespace metarev {

struct GradCheckOptions {
  double step = 1e-5;
  /// Denominator floor: error = |analytic − numeric| / max(|analytic|, |numeric|, floor).
  double floor = 1e-6;
};

struct GradCheckResult {
  std::map<std::string, double> max_rel_error;  // by parameter group
  std::map<std::string, std::size_t> checked;   // entries compared per group
  double worst = 0.0;
};

/// Central finite differences of the eval-mode multi-task loss of one sample
/// against the analytic gradient, for every parameter entry.
GradCheckResult gradient_check(const ModelParams& params, const PreparedSample& sample,
                               const TrainConfig& config, const GradCheckOptions& options = {});

}  // namespace metarev
