#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "json.hpp"
#include "metarev/assembly.hpp"
#include "metarev/attention.hpp"
#include "metarev/autograd.hpp"
#include "metarev/relations.hpp"

namespace metarev {

struct ModelConfig {
  std::size_t d_model = 32;
  std::size_t d_k = 16;
  std::size_t n_heads = 2;
  std::size_t n_enc_layers = 1;
  std::size_t n_dec_layers = 1;
  std::size_t ffn_dim = 64;
  std::size_t vocab_size = 0;
  std::size_t max_in = 256;
  std::size_t max_out = 64;
  double dropout_rate = 0.1;

  /// Throws InvalidArgument unless d_model = n_heads × d_k and all dims ≥ 1.
  void validate() const;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

nlohmann::json to_json(const ModelConfig& c);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// Named trainable tensors. Iteration order (by name) is the canonical order
/// for optimizers, hashing and serialization.
struct ModelParams {
  ModelConfig config;
  std::map<std::string, Matrix> tensors;

  const Matrix& at(const std::string& name) const;
  std::size_t n_values() const;
  /// FNV-1a over names and the bit patterns of every value.
  std::uint64_t hash() const;
};

/// Uniform Xavier-style weights, zero biases, unit layer-norm gains, and
/// relation weights drawn from U[0.1, 0.3] for every encoder layer and head.
ModelParams init_params(const ModelConfig& config, std::uint64_t seed);

/// Coarse grouping of parameter names used by gradient checks and logs:
/// embeddings, attention, feed_forward, layer_norm, beta, heads, output.
std::string parameter_group(const std::string& name);

/// Everything the encoder needs about one sample's structure.
struct EncoderInput {
  AssembledInput input;
  RelationSet relations;
  BlockLayout layout;

  EncoderInput(AssembledInput in, RelationSet rel);
};

enum class AttentionPath { BlockSparse, DenseMasked };

struct ForwardOptions {
  double dropout_rate = 0.0;
  std::mt19937_64* rng = nullptr;  // dropout only when set
  AttentionPath path = AttentionPath::BlockSparse;
  BlockAttentionStats* stats = nullptr;
};

/// Stack of {multi-head RSAttn → residual+norm → feed-forward → residual+norm}.
ad::Var encode(ad::Graph& g, const ModelParams& params, const EncoderInput& enc,
               const ForwardOptions& opt = {});

struct DecoderVars {
  ad::Var hidden;  // H_d
  ad::Var logits;  // per prefix position, vocab_size wide
};

/// Vanilla decoder: causal self-attention, full cross-attention over `memory`.
DecoderVars decode(ad::Graph& g, const ModelParams& params, const std::vector<TokenId>& prefix,
                   ad::Var memory, const ForwardOptions& opt = {});

struct EncoderOutput {
  Matrix hidden;  // H_e, n_tokens × d_model
};

struct DecoderOutput {
  Matrix hidden;  // H_d
  Matrix logits;  // out_len × vocab_size
};

/// Evaluation-mode wrappers (no dropout, no recording).
EncoderOutput encoder_forward(const EncoderInput& enc, const ModelParams& params,
                              AttentionPath path = AttentionPath::BlockSparse);
DecoderOutput decoder_forward(const std::vector<TokenId>& prefix, const EncoderOutput& memory,
                              const ModelParams& params);

/// Log-probabilities of the next token given a prefix.
using NextTokenScorer = std::function<std::vector<double>(const std::vector<TokenId>& prefix)>;

/// Beam search returning the best finished hypothesis (starting with bos) under
/// score = Σ log p / (generated length)^length_penalty. Hypotheses reaching
/// max_out ids are finished as they stand. Candidates are ranked by
/// cumulative log-prob, ties broken by smaller token id, then earlier beam.
std::vector<TokenId> beam_search(const NextTokenScorer& scorer, TokenId bos, TokenId eos,
                                 std::size_t beam_size, double length_penalty,
                                 std::size_t max_out);

double beam_score(double log_prob, std::size_t generated, double length_penalty);

std::vector<TokenId> beam_generate(const EncoderInput& enc, const ModelParams& params,
                                   std::size_t beam_size, double length_penalty,
                                   std::size_t max_out);

}  // namespace metarev
