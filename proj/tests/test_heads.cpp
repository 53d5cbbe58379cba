#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "metarev/error.hpp"
#include "metarev/heads.hpp"
#include "metarev/relations.hpp"
#include "metarev/synthetic.hpp"

using namespace metarev;
using metarev::testing::random_matrix;

namespace {

ModelParams zero_params(std::size_t d_model = 4) {
  ModelConfig c;
  c.d_model = d_model;
  c.d_k = d_model / 2;
  c.n_heads = 2;
  c.ffn_dim = 4;
  c.vocab_size = 10;
  c.max_in = 16;
  c.max_out = 8;
  ModelParams p = init_params(c, 1);
  for (auto& [name, m] : p.tensors)
    if (name.rfind("head.", 0) == 0)
      for (double& x : m.values()) x = 0.0;
  return p;
}

void set_head(ModelParams& p, const std::string& head, const Matrix& w1, const Matrix& b1,
              const Matrix& w2, const Matrix& b2) {
  p.tensors["head." + head + ".w1"] = w1;
  p.tensors["head." + head + ".b1"] = b1;
  p.tensors["head." + head + ".w2"] = w2;
  p.tensors["head." + head + ".b2"] = b2;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST(Metadata, Normalization) {
  EXPECT_EQ(normalize_metadata(1, 1).first, 0.0);
  EXPECT_EQ(normalize_metadata(10, 5).first, 1.0);
  EXPECT_EQ(normalize_metadata(5, 3).second, 0.5);
  EXPECT_DOUBLE_EQ(normalize_metadata(6, 1).first, 5.0 / 9.0);
  EXPECT_THROW(normalize_metadata(0, 3), Error);
  EXPECT_THROW(normalize_metadata(5, 6), Error);
}

TEST(Heads, ZeroWeightsGiveNeutralOutputs) {
  const ModelParams p = zero_params();
  std::mt19937_64 rng(1);
  const Matrix h = random_matrix(rng, 6, 4);
  const ConfidenceRating cr = predict_confidence_rating(h, {1, 4}, p);
  for (double x : cr.confidence) EXPECT_EQ(x, 0.5);
  for (double x : cr.rating) EXPECT_EQ(x, 0.5);
  const Matrix o = predict_doc_types(h, {0, 2, 5}, p);
  for (double x : o.values()) EXPECT_NEAR(x, 1.0 / 7.0, 1e-15);
  const auto a = predict_acceptance(h, p);
  EXPECT_EQ(a[0], 0.5);
  EXPECT_NEAR(acceptance_loss(a, Acceptance::Accept), std::log(2.0), 1e-15);
  EXPECT_THROW(predict_confidence_rating(h, {6}, p), Error);
  EXPECT_THROW(predict_acceptance(Matrix(0, 4), p), Error);
  const ConfidenceRating none = predict_confidence_rating(h, {}, p);
  EXPECT_TRUE(none.confidence.empty());
  EXPECT_EQ(confidence_rating_loss({}, {}, {}, {}), std::make_pair(0.0, 0.0));
}

TEST(Heads, HandComputedMlp) {
  ModelParams p = zero_params(2);
  // Hidden = relu(x·W1 + b1), output = hidden·W2 + b2.
  const Matrix w1 = Matrix::from_rows({{1.0, -1.0}, {0.5, 2.0}});
  const Matrix b1 = Matrix::from_rows({{0.0, 0.1}});
  set_head(p, "rating", w1, b1, Matrix::from_rows({{1.0}, {-0.5}}), Matrix::from_rows({{0.2}}));
  set_head(p, "confidence", w1, b1, Matrix::from_rows({{0.3}, {0.3}}), Matrix::from_rows({{0.0}}));
  const Matrix h = Matrix::from_rows({{1.0, 2.0}, {-1.0, 0.5}});
  // Row 0: pre = [1+1, -1+4+0.1] = [2, 3.1]; rating = 2 - 1.55 + 0.2 = 0.65.
  // Row 1: pre = [-1+0.25, 1+1+0.1] = [-0.75, 2.1] → [0, 2.1]; rating = -1.05 + 0.2 = -0.85.
  const ConfidenceRating cr = predict_confidence_rating(h, {0, 1}, p);
  EXPECT_NEAR(cr.rating[0], sigmoid(0.65), 1e-14);
  EXPECT_NEAR(cr.rating[1], sigmoid(-0.85), 1e-14);
  EXPECT_NEAR(cr.confidence[0], sigmoid(0.3 * 5.1), 1e-14);
  EXPECT_NEAR(cr.confidence[1], sigmoid(0.3 * 2.1), 1e-14);

  // Doc types: W2 maps hidden unit 0 to class 0 and unit 1 to class 6.
  Matrix w2(2, 7);
  w2(0, 0) = 1.0;
  w2(1, 6) = 1.0;
  set_head(p, "doc_type", w1, b1, w2, Matrix(1, 7));
  const Matrix o = predict_doc_types(h, {0, 1}, p);
  const double denom0 = std::exp(2.0) + 5.0 + std::exp(3.1);
  EXPECT_NEAR(o(0, 0), std::exp(2.0) / denom0, 1e-14);
  EXPECT_NEAR(o(0, 6), std::exp(3.1) / denom0, 1e-14);
  EXPECT_NEAR(o(0, 3), 1.0 / denom0, 1e-14);
  const double denom1 = 1.0 + 5.0 + std::exp(2.1);
  EXPECT_NEAR(o(1, 6), std::exp(2.1) / denom1, 1e-14);

  // Acceptance: mean of the three rows is [0, 1], pre = [0.5, 2.1].
  Matrix w2a(2, 2);
  w2a(0, 0) = 1.0;
  w2a(1, 1) = 1.0;
  set_head(p, "acceptance", w1, b1, w2a, Matrix(1, 2));
  const Matrix hd = Matrix::from_rows({{1.0, 0.0}, {-1.0, 1.0}, {0.0, 2.0}});
  const auto a = predict_acceptance(hd, p);
  EXPECT_NEAR(a[1], std::exp(2.1) / (std::exp(0.5) + std::exp(2.1)), 1e-14);
  EXPECT_NEAR(a[0] + a[1], 1.0, 1e-15);
  // Mean pooling of identical rows equals the row.
  const Matrix same = Matrix::from_rows({{0.3, -0.2}, {0.3, -0.2}});
  const auto b = predict_acceptance(same, p);
  const auto c = predict_acceptance(Matrix::from_rows({{0.3, -0.2}}), p);
  EXPECT_NEAR(b[0], c[0], 1e-15);
}

TEST(Heads, RandomOutputsInCodomain) {
  std::mt19937_64 rng(8);
  ModelConfig cfg;
  cfg.vocab_size = 30;
  for (int it = 0; it < 20; ++it) {
    ModelParams p = init_params(cfg, it);
    for (auto& [n, m] : p.tensors)
      if (n.rfind("head.", 0) == 0)
        for (double& x : m.values()) x = std::normal_distribution<double>(0, 0.3)(rng);
    const Matrix h = random_matrix(rng, 9, cfg.d_model, 1.0);
    const auto cr = predict_confidence_rating(h, {0, 3, 8}, p);
    for (double x : cr.confidence) EXPECT_TRUE(x > 0.0 && x < 1.0);
    for (double x : cr.rating) EXPECT_TRUE(x > 0.0 && x < 1.0);
    const Matrix o = predict_doc_types(h, {0, 1, 2, 3}, p);
    for (std::size_t r = 0; r < o.rows(); ++r) {
      double s = 0.0;
      for (double x : o.row(r)) s += x;
      EXPECT_NEAR(s, 1.0, 1e-12);
    }
    const auto a = predict_acceptance(h, p);
    EXPECT_NEAR(a[0] + a[1], 1.0, 1e-12);
  }
}

TEST(Losses, ConfidenceRating) {
  EXPECT_EQ(confidence_rating_loss({0.4}, {0.4}, {}, {}).first, 0.0);
  EXPECT_DOUBLE_EQ(confidence_rating_loss({0.5}, {1.0}, {}, {}).first, 0.25);
  EXPECT_NEAR(confidence_rating_loss({}, {}, {0.2, 0.8}, {0.0, 1.0}).second, 0.04, 1e-15);
  EXPECT_THROW(confidence_rating_loss({0.5}, {}, {}, {}), Error);
}

TEST(Losses, DocType) {
  Matrix uniform(3, 7), onehot(3, 7);
  for (double& x : uniform.values()) x = 1.0 / 7.0;
  onehot(0, 1) = onehot(1, 6) = onehot(2, 0) = 1.0;
  EXPECT_NEAR(doc_type_loss(uniform, onehot), std::log(7.0), 1e-12);
  EXPECT_LE(doc_type_loss(onehot, onehot), 1e-6);
  Matrix half(2, 7), target(2, 7);
  half(0, 2) = half(0, 3) = 0.5;
  half(1, 4) = half(1, 5) = 0.5;
  target(0, 2) = target(1, 5) = 1.0;
  EXPECT_NEAR(doc_type_loss(half, target), std::log(2.0), 1e-12);
  EXPECT_THROW(doc_type_loss(half, onehot), Error);
}

TEST(Losses, Generation) {
  // Strongly peaked logits on the target with no smoothing → ~0.
  Matrix peaked(2, 4);
  peaked(0, 1) = 50.0;
  peaked(1, 3) = 50.0;
  EXPECT_LE(generation_loss(peaked, {1, 3}, 0.0), 1e-15);
  // Uniform logits give ln V for any smoothing.
  const Matrix flat(3, 5);
  for (double eps : {0.0, 0.1, 0.5}) EXPECT_NEAR(generation_loss(flat, {1, 2, 4}, eps), std::log(5.0), 1e-12);
  // V = 3, target 2, smoothing 0.1: −Σ (0.9·[c=2] + 0.1/3)·log p_c.
  const Matrix z = Matrix::from_rows({{1.0, 2.0, 0.5}});
  const double lse = std::log(std::exp(1.0) + std::exp(2.0) + std::exp(0.5));
  const double want = -((0.1 / 3) * (1.0 - lse) + (0.1 / 3) * (2.0 - lse) + (0.9 + 0.1 / 3) * (0.5 - lse));
  EXPECT_NEAR(generation_loss(z, {2}, 0.1), want, 1e-12);
  // Pad positions are ignored in the average.
  const Matrix two = Matrix::from_rows({{1.0, 2.0, 0.5}, {9.0, -3.0, 0.0}});
  EXPECT_NEAR(generation_loss(two, {2, Vocab::kPad}, 0.1), want, 1e-12);
  EXPECT_THROW(generation_loss(z, {2, 1}, 0.1), Error);
}

TEST(Losses, Combined) {
  const LossComponents ones{1, 1, 1, 1, 1};
  EXPECT_EQ(combined_loss(ones, LossWeights{}), 8.0);
  EXPECT_EQ(combined_loss({3.5, 9, 9, 9, 9}, LossWeights{1, 0, 0, 0, 0}), 3.5);
  EXPECT_EQ(combined_loss({}, LossWeights{}), 0.0);
  EXPECT_THROW(combined_loss({std::nan(""), 0, 0, 0, 0}, LossWeights{}), Error);
  const LossWeights w = loss_weights_from_json({{"alpha_g", 1.5}, {"alpha_a", 0}});
  EXPECT_EQ(w.generation, 1.5);
  EXPECT_EQ(w.acceptance, 0.0);
  EXPECT_EQ(w.confidence, 2.0);
  EXPECT_THROW(loss_weights_from_json({{"alpha_r", -1}}), Error);
}

TEST(Targets, AuxAndSmoothed) {
  const Sample s = synthetic::toy_samples(1, 4)[0];
  const AuxTargets t = build_aux_targets(s);
  EXPECT_EQ(t.doc_type.rows(), s.documents.size());
  std::size_t reviews = 0;
  for (const auto& d : s.documents) reviews += d.doc_type == DocType::OfficialReview;
  EXPECT_EQ(t.rating.size(), reviews);
  EXPECT_EQ(t.acceptance(0, static_cast<int>(s.acceptance)), 1.0);
  const Matrix st = smoothed_targets({2, Vocab::kPad}, 4, 0.2);
  EXPECT_DOUBLE_EQ(st(0, 2), 0.85);
  EXPECT_DOUBLE_EQ(st(0, 0), 0.05);
  for (double x : st.row(1)) EXPECT_EQ(x, 0.0);
}
