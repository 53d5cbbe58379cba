#pragma once

#include <array>
#include <cstddef>
#include <utility>
#include <vector>

#include "json.hpp"
#include "metarev/autograd.hpp"
#include "metarev/conversation.hpp"
#include "metarev/model.hpp"

namespace metarev {

struct LossWeights {
  double generation = 2.0;
  double confidence = 2.0;
  double rating = 1.0;
  double doc_type = 1.0;
  double acceptance = 2.0;

  void validate() const;  // finite and non-negative
  friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Reads alpha_g / alpha_c / alpha_r / alpha_o / alpha_a, keeping defaults for absent keys.
LossWeights loss_weights_from_json(const nlohmann::json& j);
nlohmann::json to_json(const LossWeights& w);

struct AuxTargets {
  std::vector<double> confidence;  // per official review, in [0, 1]
  std::vector<double> rating;      // per official review, in [0, 1]
  Matrix doc_type;                 // n_docs × 7 one-hot
  Matrix acceptance;               // 1 × 2 one-hot (reject, accept)
};

/// (rating − 1)/9 and (confidence − 1)/4. Throws OutOfRange.
std::pair<double, double> normalize_metadata(int rating, int confidence);

AuxTargets build_aux_targets(const Sample& sample);

// --- graph versions, used in training -------------------------------------

/// One-hidden-layer ReLU MLP named prefix.{w1,b1,w2,b2} applied to rows of x.
ad::Var head_mlp(ad::Graph& g, const ModelParams& p, const std::string& prefix, ad::Var x);

struct ConfidenceRatingVars {
  ad::Var confidence;  // n_reviews × 1, after sigmoid
  ad::Var rating;
};

/// Throws PositionOutOfBounds for a position beyond H_e.
ConfidenceRatingVars predict_confidence_rating(ad::Graph& g, const ModelParams& p,
                                               ad::Var encoder_hidden,
                                               const std::vector<std::size_t>& positions);
/// Logits (pre-softmax), one row per delimiter.
ad::Var doc_type_logits(ad::Graph& g, const ModelParams& p, ad::Var encoder_hidden,
                        const std::vector<std::size_t>& delimiter_indices);
/// Logits over (reject, accept) from the mean of decoder outputs.
ad::Var acceptance_logits(ad::Graph& g, const ModelParams& p, ad::Var decoder_hidden);

/// Label-smoothed targets: (1 − ε)·onehot + ε/V, zero rows at pad positions.
Matrix smoothed_targets(const std::vector<TokenId>& gold, std::size_t vocab_size,
                        double smoothing, TokenId pad = Vocab::kPad);

// --- plain-value versions ---------------------------------------------------

struct ConfidenceRating {
  std::vector<double> confidence;
  std::vector<double> rating;
};

ConfidenceRating predict_confidence_rating(const Matrix& encoder_hidden,
                                           const std::vector<std::size_t>& positions,
                                           const ModelParams& p);
/// Rows sum to one.
Matrix predict_doc_types(const Matrix& encoder_hidden,
                         const std::vector<std::size_t>& delimiter_indices, const ModelParams& p);
/// (p_reject, p_accept). Throws EmptyDecoderOutput.
std::array<double, 2> predict_acceptance(const Matrix& decoder_hidden, const ModelParams& p);

/// Mean squared errors (L_c, L_r); empty inputs give zero. Throws LengthMismatch.
std::pair<double, double> confidence_rating_loss(const std::vector<double>& c_hat,
                                                 const std::vector<double>& c,
                                                 const std::vector<double>& r_hat,
                                                 const std::vector<double>& r);
/// Mean over documents of −Σ O log max(Ô, 1e-9). Throws ShapeMismatch.
double doc_type_loss(const Matrix& predicted, const Matrix& one_hot);
double acceptance_loss(const std::array<double, 2>& predicted, Acceptance gold);
/// Label-smoothed cross-entropy averaged over non-pad positions.
double generation_loss(const Matrix& logits, const std::vector<TokenId>& target,
                       double smoothing = 0.1, TokenId pad = Vocab::kPad);

struct LossComponents {
  double generation = 0.0;
  double confidence = 0.0;
  double rating = 0.0;
  double doc_type = 0.0;
  double acceptance = 0.0;
};

/// α-weighted sum. Throws NonFiniteLoss if any component is not finite.
double combined_loss(const LossComponents& c, const LossWeights& w);

}  // namespace metarev
