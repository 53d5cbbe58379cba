#include "metarev/heads.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "metarev/error.hpp"

namespace metarev {

using nlohmann::json;

namespace {

constexpr double kProbFloor = 1e-9;

ad::Var param(ad::Graph& g, const ModelParams& p, const std::string& name) {
  return g.parameter(name, p.at(name));
}

void check_positions(const Matrix& h, const std::vector<std::size_t>& positions) {
  for (std::size_t pos : positions)
    if (pos >= h.rows())
      throw Error(Errc::PositionOutOfBounds,
                  "position " + std::to_string(pos) + " beyond " + std::to_string(h.rows()));
}

Matrix softmax_row_values(const Matrix& z) {
  Matrix p = z;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    const double mx = *std::max_element(row.begin(), row.end());
    double sum = 0.0;
    for (double& x : row) sum += (x = std::exp(x - mx));
    for (double& x : row) x /= sum;
  }
  return p;
}

}  // namespace

void LossWeights::validate() const {
  for (double a : {generation, confidence, rating, doc_type, acceptance})
    if (!std::isfinite(a) || a < 0.0)
      throw Error(Errc::InvalidArgument, "loss weights must be finite and non-negative");
}

LossWeights loss_weights_from_json(const json& j) {
  LossWeights w;
  w.generation = j.value("alpha_g", w.generation);
  w.confidence = j.value("alpha_c", w.confidence);
  w.rating = j.value("alpha_r", w.rating);
  w.doc_type = j.value("alpha_o", w.doc_type);
  w.acceptance = j.value("alpha_a", w.acceptance);
  w.validate();
  return w;
}

json to_json(const LossWeights& w) {
  return {{"alpha_g", w.generation}, {"alpha_c", w.confidence}, {"alpha_r", w.rating},
          {"alpha_o", w.doc_type},   {"alpha_a", w.acceptance}};
}

std::pair<double, double> normalize_metadata(int rating, int confidence) {
  if (rating < 1 || rating > 10 || confidence < 1 || confidence > 5)
    throw Error(Errc::OutOfRange, "rating must be in [1,10] and confidence in [1,5]");
  return {(rating - 1) / 9.0, (confidence - 1) / 4.0};
}

AuxTargets build_aux_targets(const Sample& sample) {
  AuxTargets t;
  t.doc_type = Matrix(sample.documents.size(), kNumDocTypes);
  for (std::size_t i = 0; i < sample.documents.size(); ++i) {
    const Document& d = sample.documents[i];
    t.doc_type(i, static_cast<std::size_t>(d.doc_type)) = 1.0;
    if (d.doc_type == DocType::OfficialReview) {
      auto [r, c] = normalize_metadata(*d.rating, *d.confidence);
      t.rating.push_back(r);
      t.confidence.push_back(c);
    }
  }
  t.acceptance = Matrix(1, 2);
  t.acceptance[static_cast<std::size_t>(sample.acceptance)] = 1.0;
  return t;
}

ad::Var head_mlp(ad::Graph& g, const ModelParams& p, const std::string& prefix, ad::Var x) {
  ad::Var h = ad::relu(
      ad::add_row(ad::matmul(x, param(g, p, prefix + ".w1")), param(g, p, prefix + ".b1")));
  return ad::add_row(ad::matmul(h, param(g, p, prefix + ".w2")), param(g, p, prefix + ".b2"));
}

ConfidenceRatingVars predict_confidence_rating(ad::Graph& g, const ModelParams& p,
                                               ad::Var encoder_hidden,
                                               const std::vector<std::size_t>& positions) {
  check_positions(encoder_hidden.value(), positions);
  ad::Var rows = ad::gather_rows(encoder_hidden, positions);
  return {ad::sigmoid(head_mlp(g, p, "head.confidence", rows)),
          ad::sigmoid(head_mlp(g, p, "head.rating", rows))};
}

ad::Var doc_type_logits(ad::Graph& g, const ModelParams& p, ad::Var encoder_hidden,
                        const std::vector<std::size_t>& delimiter_indices) {
  check_positions(encoder_hidden.value(), delimiter_indices);
  return head_mlp(g, p, "head.doc_type", ad::gather_rows(encoder_hidden, delimiter_indices));
}

ad::Var acceptance_logits(ad::Graph& g, const ModelParams& p, ad::Var decoder_hidden) {
  if (decoder_hidden.value().rows() == 0)
    throw Error(Errc::EmptyDecoderOutput, "acceptance head needs decoder outputs");
  return head_mlp(g, p, "head.acceptance", ad::mean_rows(decoder_hidden));
}

Matrix smoothed_targets(const std::vector<TokenId>& gold, std::size_t vocab_size,
                        double smoothing, TokenId pad) {
  Matrix t(gold.size(), vocab_size);
  const double off = smoothing / static_cast<double>(vocab_size);
  for (std::size_t i = 0; i < gold.size(); ++i) {
    if (gold[i] == pad) continue;
    if (gold[i] < 0 || static_cast<std::size_t>(gold[i]) >= vocab_size)
      throw Error(Errc::ShapeMismatch, "target id outside the vocabulary");
    for (double& v : t.row(i)) v = off;
    t(i, static_cast<std::size_t>(gold[i])) += 1.0 - smoothing;
  }
  return t;
}

ConfidenceRating predict_confidence_rating(const Matrix& encoder_hidden,
                                           const std::vector<std::size_t>& positions,
                                           const ModelParams& p) {
  ad::Graph g(false);
  auto v = predict_confidence_rating(g, p, g.constant(encoder_hidden), positions);
  const auto& c = v.confidence.value();
  const auto& r = v.rating.value();
  return {{c.values().begin(), c.values().end()}, {r.values().begin(), r.values().end()}};
}

Matrix predict_doc_types(const Matrix& encoder_hidden,
                         const std::vector<std::size_t>& delimiter_indices, const ModelParams& p) {
  ad::Graph g(false);
  return softmax_row_values(
      doc_type_logits(g, p, g.constant(encoder_hidden), delimiter_indices).value());
}

std::array<double, 2> predict_acceptance(const Matrix& decoder_hidden, const ModelParams& p) {
  ad::Graph g(false);
  const Matrix probs =
      softmax_row_values(acceptance_logits(g, p, g.constant(decoder_hidden)).value());
  return {probs[0], probs[1]};
}

std::pair<double, double> confidence_rating_loss(const std::vector<double>& c_hat,
                                                 const std::vector<double>& c,
                                                 const std::vector<double>& r_hat,
                                                 const std::vector<double>& r) {
  if (c_hat.size() != c.size() || r_hat.size() != r.size())
    throw Error(Errc::LengthMismatch, "prediction and target lengths differ");
  auto mse = [](const std::vector<double>& a, const std::vector<double>& b) {
    if (a.empty()) return 0.0;
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / static_cast<double>(a.size());
  };
  return {mse(c_hat, c), mse(r_hat, r)};
}

double doc_type_loss(const Matrix& predicted, const Matrix& one_hot) {
  if (!predicted.same_shape(one_hot) || predicted.rows() == 0)
    throw Error(Errc::ShapeMismatch, "doc-type prediction and target shapes differ");
  double total = 0.0;
  for (std::size_t r = 0; r < predicted.rows(); ++r)
    for (std::size_t c = 0; c < predicted.cols(); ++c)
      if (one_hot(r, c) != 0.0)
        total -= one_hot(r, c) * std::log(std::max(predicted(r, c), kProbFloor));
  return total / static_cast<double>(predicted.rows());
}

double acceptance_loss(const std::array<double, 2>& predicted, Acceptance gold) {
  return -std::log(std::max(predicted[static_cast<std::size_t>(gold)], kProbFloor));
}

double generation_loss(const Matrix& logits, const std::vector<TokenId>& target,
                       double smoothing, TokenId pad) {
  if (logits.rows() != target.size())
    throw Error(Errc::ShapeMismatch, "one logit row per target position expected");
  ad::Graph g(false);
  return ad::softmax_cross_entropy(g.constant(logits),
                                   smoothed_targets(target, logits.cols(), smoothing, pad))
      .value()[0];
}

double combined_loss(const LossComponents& c, const LossWeights& w) {
  for (double v : {c.generation, c.confidence, c.rating, c.doc_type, c.acceptance})
    if (!std::isfinite(v)) throw Error(Errc::NonFiniteLoss, "loss component is not finite");
  return w.generation * c.generation + w.confidence * c.confidence + w.rating * c.rating +
         w.doc_type * c.doc_type + w.acceptance * c.acceptance;
}

}  // namespace metarev
