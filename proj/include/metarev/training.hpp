#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "metarev/assembly.hpp"
#include "metarev/conversation.hpp"
#include "metarev/heads.hpp"
#include "metarev/model.hpp"

namespace metarev {

enum class Schedule { Constant, LinearDecay };

struct TrainConfig {
  std::uint64_t seed = 13;
  double learning_rate = 5e-5;
  std::size_t warmup_steps = 200;
  Schedule schedule = Schedule::LinearDecay;
  std::size_t micro_batch = 4;
  std::size_t grad_accumulation_steps = 1;
  std::size_t max_steps = 1000;
  double label_smoothing = 0.1;
  LossWeights weights;
  /// false drops the auxiliary heads from the graph entirely (generation-only build).
  bool multitask = true;
  ModelConfig model;
  std::size_t vocab_limit = 2000;
  std::size_t beam_size = 5;
  double length_penalty = 1.0;

  std::size_t batch_size() const noexcept { return micro_batch * grad_accumulation_steps; }
  void validate() const;
};

/// Reads a JSON config; absent keys keep their defaults. Model keys may sit
/// at top level or under "model"; "max_in"/"max_out" set the budgets.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
TrainConfig load_train_config(const std::string& path);
std::uint64_t config_hash(const TrainConfig& c);

/// Learning rate for 1-based step: linear warmup, then constant or linear decay to zero
/// at max_steps.
double learning_rate_at(const TrainConfig& c, std::size_t step);

/// One sample turned into model inputs and targets. Pinned in memory while a
/// graph built from it is alive (the attention nodes keep pointers into it).
struct PreparedSample {
  EncoderInput encoder;
  std::vector<TokenId> target;  // <bos> … <eos>
  AuxTargets aux;
  std::string paper_id;

  PreparedSample(const Sample& s, const Vocab& vocab, std::size_t max_in, std::size_t max_out);
  PreparedSample(const PreparedSample&) = delete;
  PreparedSample& operator=(const PreparedSample&) = delete;
};

struct LossBreakdown {
  LossComponents components;
  double total = 0.0;
};

struct SampleLoss {
  ad::Var total;
  LossBreakdown breakdown;
};

/// Builds the weighted multi-task objective for one sample on `g`.
SampleLoss sample_loss(ad::Graph& g, const ModelParams& params, const PreparedSample& sample,
                       const TrainConfig& config, const ForwardOptions& opt);

struct AdamState {
  std::size_t t = 0;
  std::map<std::string, Matrix> m;
  std::map<std::string, Matrix> v;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Bias-corrected Adam update of every tensor that has a gradient.
void adam_update(ModelParams& params, AdamState& state,
                 const std::map<std::string, Matrix>& grads, double lr);

struct TrainState {
  ModelParams params;
  AdamState optimizer;
  std::mt19937_64 rng;
  std::size_t step = 0;
};

TrainState init_train_state(const TrainConfig& config);

/// Splits `batch` into grad_accumulation_steps equal micro-batches, averages
/// the per-sample gradients (mean over samples, then over micro-batches) and
/// applies one optimizer update. Throws NonFiniteLoss.
LossBreakdown train_step(const std::vector<const PreparedSample*>& batch, TrainState& state,
                         const TrainConfig& config);

/// Mean-loss gradient of a batch without updating anything (eval-mode forward).
std::map<std::string, Matrix> batch_gradients(const std::vector<const PreparedSample*>& batch,
                                              const ModelParams& params,
                                              const TrainConfig& config);

struct OverfitReport {
  double initial_generation_loss = 0.0;
  double final_generation_loss = 0.0;
  std::size_t steps = 0;
  std::size_t threshold_step = 0;  // first step with L_g < 0.1 × initial, 0 if never
  bool converged = false;          // final L_g below the threshold; false means DidNotConverge
  std::size_t exact_matches = 0;
  std::size_t n_samples = 0;
  std::vector<double> generation_loss_history;
  std::vector<std::vector<TokenId>> generations;
};

/// Trains full-batch on `samples` for max_steps, then generates every sample
/// and counts exact matches.
OverfitReport overfit_probe(const std::vector<Sample>& samples, const Vocab& vocab,
                            const TrainConfig& config);

struct Checkpoint {
  std::size_t step = 0;
  TrainConfig config;
  Vocab vocab;
  ModelParams params;
  AdamState optimizer;
  std::uint64_t config_hash = 0;
  nlohmann::json metrics = nlohmann::json::object();
};

/// Builds the vocabulary from `train`, then runs max_steps updates over
/// batches drawn in a seeded per-epoch shuffle. Writes one CSV line per step
/// (step,L_g,L_c,L_r,L_o,L_a,total) to `metrics` when given.
Checkpoint run_training(const std::vector<Sample>& train, const TrainConfig& config,
                        std::ostream* metrics = nullptr);

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
/// Throws CorruptCheckpoint on unreadable/inconsistent files and ConfigMismatch
/// when `expected` is given and differs from the stored model config.
Checkpoint load_checkpoint(const std::string& path,
                           const std::optional<ModelConfig>& expected = std::nullopt);

}  // namespace metarev
