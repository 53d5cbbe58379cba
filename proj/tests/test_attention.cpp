#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "helpers.hpp"
#include "metarev/assembly.hpp"
#include "metarev/attention.hpp"
#include "metarev/error.hpp"
#include "metarev/relations.hpp"

using namespace metarev;
using metarev::testing::random_matrix;

namespace {

struct Instance {
  std::vector<std::size_t> doc_of_token;
  RelationSet rel;
  Matrix q, k, v;
  RelationWeights beta{};
};

Instance random_instance(std::mt19937_64& rng, std::size_t max_docs, std::size_t max_tokens,
                         std::size_t dk = 4) {
  Instance in;
  const std::size_t n = 1 + rng() % max_docs;
  in.rel = build_all_relations(metarev::testing::shuffled_forest(rng, n));
  std::vector<std::size_t> len(n, 1);
  std::size_t total = n;
  const std::size_t target = n + rng() % (max_tokens - n + 1);
  while (total < target) {
    ++len[rng() % n];
    ++total;
  }
  for (std::size_t d = 0; d < n; ++d) in.doc_of_token.insert(in.doc_of_token.end(), len[d], d);
  in.q = random_matrix(rng, total, dk);
  in.k = random_matrix(rng, total, dk);
  in.v = random_matrix(rng, total, 3);
  std::uniform_real_distribution<double> b(-0.5, 1.0);
  for (double& x : in.beta) x = b(rng);
  return in;
}

std::vector<TokenMask> masks_of(const Instance& in) {
  return extend_relations({in.rel.begin(), in.rel.end()}, in.doc_of_token);
}

Matrix identity(std::size_t n) {
  Matrix m(n, n);
  for (std::size_t i = 0; i < n; ++i) m(i, i) = 1.0;
  return m;
}

RelationSet only(const RelationSet& full, std::vector<RelationKind> keep) {
  RelationSet r;
  for (std::size_t j = 0; j < kNumRelations; ++j) {
    r[j] = RelationMatrix(kAllRelations[j], full[0].size());
    for (RelationKind k : keep)
      if (k == kAllRelations[j]) r[j] = full[j];
  }
  return r;
}

RelationWeights unit_beta(std::vector<RelationKind> on) {
  RelationWeights b{};
  for (RelationKind k : on) b[static_cast<int>(k)] = 1.0;
  return b;
}

}  // namespace

TEST(RsAttn, SingleDocumentSelfIsFullAttention) {
  std::mt19937_64 rng(1);
  const Matrix q = random_matrix(rng, 5, 4), k = random_matrix(rng, 5, 4), v = random_matrix(rng, 5, 2);
  const RelationSet rel = build_all_relations(metarev::testing::ParentVec{std::nullopt});
  const std::vector<std::size_t> docs(5, 0);
  const Matrix got = rsattn_head(q, k, v, extend_relations({rel.begin(), rel.end()}, docs),
                                 unit_beta({RelationKind::DocumentSelf}));
  const Matrix want = scaled_dot_attention(q, k, v, false).output;
  EXPECT_LE(max_abs_diff(got, want), 1e-12);
  // SameThread also covers the single document, so it is switched off for the block path too.
  const RelationSet self_only = only(rel, {RelationKind::DocumentSelf});
  const auto block = block_sparse_attention(q, k, v, make_block_layout(docs, self_only), self_only,
                                            unit_beta({RelationKind::DocumentSelf}));
  EXPECT_LE(max_abs_diff(block.output, want), 1e-12);
}

TEST(RsAttn, HandCases) {
  const Matrix q = Matrix::from_rows({{1.0}, {1.0}});
  const Matrix v = Matrix::from_rows({{1.0}, {3.0}});
  const std::vector<std::size_t> docs{0, 1};
  const RelationSet full = build_all_relations(
      metarev::testing::ParentVec{std::nullopt, std::nullopt});
  const RelationSet self = only(full, {RelationKind::DocumentSelf});
  const Matrix out1 = rsattn_head(q, q, v, extend_relations({self.begin(), self.end()}, docs),
                                  unit_beta({RelationKind::DocumentSelf}));
  EXPECT_EQ(out1, v);
  const RelationSet both = only(full, {RelationKind::DocumentSelf, RelationKind::Siblings});
  const RelationWeights b = unit_beta({RelationKind::DocumentSelf, RelationKind::Siblings});
  const Matrix out2 = rsattn_head(q, q, v, extend_relations({both.begin(), both.end()}, docs), b);
  EXPECT_NEAR(out2(0, 0), 2.0, 1e-12);
  const auto block = block_sparse_attention(q, q, v, make_block_layout(docs, both), both, b);
  EXPECT_NEAR(block.output(0, 0), 2.0, 1e-12);
}

TEST(RsAttn, ZeroLogitPositionsStillMasked) {
  // Allowed pairs with β summing to zero get logit 0, disallowed pairs get nothing.
  const Matrix q = Matrix::from_rows({{1.0}, {1.0}, {1.0}});
  const Matrix v = identity(3);
  const std::vector<std::size_t> docs{0, 1, 2};
  const RelationSet rel = only(build_all_relations(metarev::testing::ParentVec{
                                   std::nullopt, 0, std::nullopt}),
                               {RelationKind::DocumentSelf, RelationKind::Ancestor1});
  const Matrix p = rsattn_head(q, q, v, extend_relations({rel.begin(), rel.end()}, docs),
                               RelationWeights{});
  EXPECT_NEAR(p(1, 0), 0.5, 1e-12);
  EXPECT_NEAR(p(1, 1), 0.5, 1e-12);
  EXPECT_EQ(p(1, 2), 0.0);
  EXPECT_EQ(p(0, 0), 1.0);
}

TEST(RsAttn, EmptyRowThrows) {
  const Matrix q = Matrix::from_rows({{1.0}, {1.0}});
  RelationSet none;
  for (std::size_t j = 0; j < kNumRelations; ++j) none[j] = RelationMatrix(kAllRelations[j], 2);
  const std::vector<std::size_t> docs{0, 1};
  EXPECT_THROW(rsattn_head(q, q, q, extend_relations({none.begin(), none.end()}, docs), {}), Error);
  EXPECT_THROW(block_sparse_attention(q, q, q, make_block_layout(docs, none), none, {}), Error);
}

TEST(RsAttn, ShapeMismatch) {
  std::mt19937_64 rng(3);
  Instance in = random_instance(rng, 3, 8);
  const Matrix bad = random_matrix(rng, in.q.rows(), in.q.cols() + 1);
  EXPECT_THROW(rsattn_head(in.q, bad, in.v, masks_of(in), in.beta), Error);
  EXPECT_THROW(block_sparse_attention(in.q, bad, in.v, make_block_layout(in.doc_of_token, in.rel),
                                      in.rel, in.beta),
               Error);
}

TEST(BlockSparse, MatchesDenseOracle) {
  std::mt19937_64 rng(77);
  for (int it = 0; it < 100; ++it) {
    const Instance in = random_instance(rng, 6, 48);
    const BlockLayout layout = make_block_layout(in.doc_of_token, in.rel);
    const auto block = block_sparse_attention(in.q, in.k, in.v, layout, in.rel, in.beta);
    const Matrix dense = rsattn_head(in.q, in.k, in.v, masks_of(in), in.beta);
    EXPECT_LE(max_abs_diff(block.output, dense), 1e-10);
    for (const Matrix& p : block.probs)
      for (std::size_t r = 0; r < p.rows(); ++r) {
        double s = 0.0;
        for (double x : p.row(r)) s += x;
        EXPECT_NEAR(s, 1.0, 1e-9);
      }
  }
}

TEST(BlockSparse, T0SelfOnlyTouchesDiagonalBlocks) {
  const metarev::testing::ParentVec t0{std::nullopt, std::nullopt, 1, 2, std::nullopt};
  const RelationSet rel = only(build_all_relations(t0), {RelationKind::DocumentSelf});
  const std::vector<std::size_t> len{3, 4, 2, 5, 1};
  std::vector<std::size_t> docs;
  std::size_t want_pairs = 0;
  for (std::size_t d = 0; d < 5; ++d) {
    docs.insert(docs.end(), len[d], d);
    want_pairs += len[d] * len[d];
  }
  std::mt19937_64 rng(5);
  const Matrix q = random_matrix(rng, docs.size(), 4);
  const BlockLayout layout = make_block_layout(docs, rel);
  const auto res = block_sparse_attention(q, q, q, layout, rel, unit_beta({RelationKind::DocumentSelf}));
  EXPECT_EQ(res.stats.blocks_computed, 5u);
  EXPECT_EQ(res.stats.attended_pairs, want_pairs);
  EXPECT_EQ(layout.attended_pairs(), want_pairs);
}

TEST(BlockSparse, PathGraphBlocksEqualUnion) {
  const std::size_t n = 6;
  metarev::testing::ParentVec path(n);
  for (std::size_t i = 1; i < n; ++i) path[i] = i - 1;
  const RelationSet rel = build_all_relations(path);
  std::vector<std::size_t> docs;
  for (std::size_t d = 0; d < n; ++d) docs.insert(docs.end(), 2, d);
  const BlockLayout layout = make_block_layout(docs, rel);
  for (std::size_t p = 0; p < n; ++p)
    for (std::size_t q = 0; q < n; ++q) {
      bool any = false;
      for (const auto& m : rel) any = any || m.at(p, q);
      const auto& keys = layout.key_docs[p];
      EXPECT_EQ(std::find(keys.begin(), keys.end(), q) != keys.end(), any);
    }
}

TEST(BlockSparse, WorkspaceScalesWithAllowedBlocks) {
  // Two long threads: most document pairs are unrelated.
  metarev::testing::ParentVec forest(12);
  for (std::size_t i = 1; i < 6; ++i) forest[i] = i - 1;
  for (std::size_t i = 7; i < 12; ++i) forest[i] = i - 1;
  RelationSet rel = build_all_relations(forest);
  rel = only(rel, {RelationKind::DocumentSelf, RelationKind::Ancestor1, RelationKind::Descendant1});
  std::vector<std::size_t> docs;
  for (std::size_t d = 0; d < 12; ++d) docs.insert(docs.end(), 4, d);
  std::mt19937_64 rng(9);
  const Matrix q = random_matrix(rng, docs.size(), 4);
  const BlockLayout layout = make_block_layout(docs, rel);
  const auto res = block_sparse_attention(q, q, q, layout, rel, unit_beta({RelationKind::DocumentSelf}));
  // 12 self blocks + 10 parent and 10 child blocks of 4×4.
  EXPECT_EQ(res.stats.blocks_computed, 32u);
  EXPECT_EQ(res.stats.workspace_doubles, 32u * 16u);
  EXPECT_LT(res.stats.workspace_doubles, docs.size() * docs.size() / 4);
}

TEST(BlockSparse, BetaScalingKeepsAllowedPattern) {
  std::mt19937_64 rng(31);
  for (int it = 0; it < 50; ++it) {
    Instance in = random_instance(rng, 5, 16, 2);
    for (double& x : in.beta) x = 0.1 + 0.2 * std::uniform_real_distribution<double>()(rng);
    const std::size_t T = in.doc_of_token.size();
    const Matrix eye = identity(T);
    const auto masks = masks_of(in);
    const Matrix p1 = rsattn_head(in.q, in.k, eye, masks, in.beta);
    for (double c : {0.01, 0.5, 3.0, 40.0}) {
      RelationWeights scaled = in.beta;
      for (double& x : scaled) x *= c;
      const Matrix p2 = rsattn_head(in.q, in.k, eye, masks, scaled);
      for (std::size_t s = 0; s < T; ++s)
        for (std::size_t t = 0; t < T; ++t) EXPECT_EQ(p1(s, t) > 0.0, p2(s, t) > 0.0);
      const auto b1 = block_sparse_attention(in.q, in.k, in.v, make_block_layout(in.doc_of_token, in.rel), in.rel, in.beta);
      const auto b2 = block_sparse_attention(in.q, in.k, in.v, make_block_layout(in.doc_of_token, in.rel), in.rel, scaled);
      EXPECT_EQ(b1.stats.attended_pairs, b2.stats.attended_pairs);
    }
    // The allowed set is exactly the OR of the seven token masks.
    for (std::size_t s = 0; s < T; ++s)
      for (std::size_t t = 0; t < T; ++t) {
        bool any = false;
        for (const auto& m : masks) any = any || m.at(s, t);
        EXPECT_EQ(p1(s, t) > 0.0, any);
      }
  }
}

TEST(BlockSparse, BackwardMatchesFiniteDifferences) {
  std::mt19937_64 rng(41);
  for (int it = 0; it < 10; ++it) {
    Instance in = random_instance(rng, 4, 10, 3);
    const BlockLayout layout = make_block_layout(in.doc_of_token, in.rel);
    const Matrix w = random_matrix(rng, in.q.rows(), in.v.cols());
    auto objective = [&](const Matrix& q, const Matrix& k, const Matrix& v, const RelationWeights& b) {
      const Matrix o = block_sparse_attention(q, k, v, layout, in.rel, b).output;
      double s = 0.0;
      for (std::size_t i = 0; i < o.values().size(); ++i) s += o.values()[i] * w.values()[i];
      return s;
    };
    const auto fwd = block_sparse_attention(in.q, in.k, in.v, layout, in.rel, in.beta);
    const auto g = block_sparse_attention_backward(in.q, in.k, in.v, layout, in.rel, in.beta, fwd, w);
    const double h = 1e-6;
    auto check = [&](Matrix& m, const Matrix& analytic) {
      for (std::size_t i = 0; i < m.values().size(); ++i) {
        const double keep = m.values()[i];
        m.values()[i] = keep + h;
        const double up = objective(in.q, in.k, in.v, in.beta);
        m.values()[i] = keep - h;
        const double dn = objective(in.q, in.k, in.v, in.beta);
        m.values()[i] = keep;
        EXPECT_NEAR(analytic.values()[i], (up - dn) / (2 * h), 1e-6);
      }
    };
    check(in.q, g.dq);
    check(in.k, g.dk);
    check(in.v, g.dv);
    for (std::size_t j = 0; j < kNumRelations; ++j) {
      RelationWeights up = in.beta, dn = in.beta;
      up[j] += h;
      dn[j] -= h;
      const double num = (objective(in.q, in.k, in.v, up) - objective(in.q, in.k, in.v, dn)) / (2 * h);
      EXPECT_NEAR(g.dbeta[j], num, 1e-6);
      if (in.rel[j].count() == 0) EXPECT_EQ(g.dbeta[j], 0.0);
    }
  }
}

TEST(DenseAttention, CausalMaskAndBackward) {
  std::mt19937_64 rng(2);
  Matrix q = random_matrix(rng, 4, 3), k = random_matrix(rng, 4, 3), v = random_matrix(rng, 4, 2);
  const auto r = scaled_dot_attention(q, k, v, true);
  for (std::size_t i = 0; i < 4; ++i)
    for (std::size_t j = i + 1; j < 4; ++j) EXPECT_EQ(r.probs(i, j), 0.0);
  EXPECT_LE(max_abs_diff(Matrix::from_rows({{v(0, 0), v(0, 1)}}),
                         Matrix::from_rows({{r.output(0, 0), r.output(0, 1)}})),
            1e-12);
  const Matrix w = random_matrix(rng, 4, 2);
  const auto g = scaled_dot_attention_backward(q, k, v, r, w);
  auto obj = [&] {
    const Matrix o = scaled_dot_attention(q, k, v, true).output;
    double s = 0.0;
    for (std::size_t i = 0; i < o.values().size(); ++i) s += o.values()[i] * w.values()[i];
    return s;
  };
  const double h = 1e-6;
  for (auto [m, a] : {std::pair{&q, &g.dq}, std::pair{&k, &g.dk}, std::pair{&v, &g.dv}})
    for (std::size_t i = 0; i < m->values().size(); ++i) {
      const double keep = m->values()[i];
      m->values()[i] = keep + h;
      const double up = obj();
      m->values()[i] = keep - h;
      const double dn = obj();
      m->values()[i] = keep;
      EXPECT_NEAR(a->values()[i], (up - dn) / (2 * h), 1e-6);
    }
}
