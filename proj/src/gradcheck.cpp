#include "metarev/gradcheck.hpp"

#include <algorithm>
#include <cmath>

namespace metarev {

GradCheckResult gradient_check(const ModelParams& params, const PreparedSample& sample,
                               const TrainConfig& config, const GradCheckOptions& options) {
  ad::Graph g;
  SampleLoss loss = sample_loss(g, params, sample, config, ForwardOptions{});
  g.backward(loss.total);
  const auto analytic = g.parameter_gradients();

  auto eval = [&](const ModelParams& p) {
    ad::Graph probe(false);
    return sample_loss(probe, p, sample, config, ForwardOptions{}).breakdown.total;
  };

  GradCheckResult res;
  ModelParams work = params;
  for (auto& [name, tensor] : work.tensors) {
    const std::string group = parameter_group(name);
    auto it = analytic.find(name);
    double& worst = res.max_rel_error[group];
    for (std::size_t i = 0; i < tensor.size(); ++i) {
      const double orig = tensor[i];
      tensor[i] = orig + options.step;
      const double up = eval(work);
      tensor[i] = orig - options.step;
      const double down = eval(work);
      tensor[i] = orig;
      const double numeric = (up - down) / (2.0 * options.step);
      const double a = it == analytic.end() ? 0.0 : it->second[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), options.floor});
      worst = std::max(worst, std::abs(a - numeric) / denom);
      ++res.checked[group];
    }
    res.worst = std::max(res.worst, worst);
  }
  return res;
}

}  // namespace metarev
