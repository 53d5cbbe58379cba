#include "metarev/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "metarev/error.hpp"

namespace metarev {

namespace {

void check_qkv(const Matrix& q, const Matrix& k, const Matrix& v) {
  if (q.cols() != k.cols() || k.rows() != v.rows() || q.cols() == 0)
    throw Error(Errc::ShapeMismatch, "attention Q/K/V shapes are inconsistent");
}

double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

double relation_weight(const RelationSet& rel, const RelationWeights& beta, std::size_t p,
                       std::size_t q) {
  double w = 0.0;
  for (std::size_t j = 0; j < kNumRelations; ++j)
    if (rel[j].at(p, q)) w += beta[j];
  return w;
}

// In-place softmax over a row of logits; returns nothing, row becomes probabilities.
void softmax_inplace(std::span<double> row) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : row) mx = std::max(mx, x);
  double sum = 0.0;
  for (double& x : row) {
    x = std::exp(x - mx);
    sum += x;
  }
  for (double& x : row) x /= sum;
}

}  // namespace

Matrix rsattn_head(const Matrix& q, const Matrix& k, const Matrix& v,
                   const std::vector<TokenMask>& masks, const RelationWeights& beta) {
  check_qkv(q, k, v);
  if (masks.size() != kNumRelations || q.rows() != k.rows())
    throw Error(Errc::ShapeMismatch, "rsattn_head expects 7 masks over a square pattern");
  const std::size_t n = q.rows();
  for (const auto& m : masks)
    if (m.n_tokens() != n) throw Error(Errc::ShapeMismatch, "mask size differs from Q");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  Matrix out(n, v.cols());
  std::vector<double> logits(n);
  std::vector<char> allowed(n);
  for (std::size_t s = 0; s < n; ++s) {
    bool any = false;
    double mx = -std::numeric_limits<double>::infinity();
    for (std::size_t t = 0; t < n; ++t) {
      double w = 0.0;
      allowed[t] = 0;
      for (std::size_t j = 0; j < kNumRelations; ++j) {
        if (masks[j].at(s, t)) {
          allowed[t] = 1;
          w += beta[j];
        }
      }
      if (!allowed[t]) continue;
      any = true;
      logits[t] = dot(q.row(s), k.row(t)) * w * scale;
      mx = std::max(mx, logits[t]);
    }
    if (!any) throw Error(Errc::EmptyAttentionRow, "token " + std::to_string(s));
    double sum = 0.0;
    for (std::size_t t = 0; t < n; ++t)
      if (allowed[t]) sum += (logits[t] = std::exp(logits[t] - mx));
    auto o = out.row(s);
    for (std::size_t t = 0; t < n; ++t) {
      if (!allowed[t]) continue;
      const double p = logits[t] / sum;
      auto vr = v.row(t);
      for (std::size_t c = 0; c < v.cols(); ++c) o[c] += p * vr[c];
    }
  }
  return out;
}

std::size_t BlockLayout::n_blocks() const noexcept {
  std::size_t n = 0;
  for (const auto& k : key_docs) n += k.size();
  return n;
}

std::size_t BlockLayout::attended_pairs() const noexcept {
  std::size_t n = 0;
  for (std::size_t p = 0; p < key_docs.size(); ++p)
    for (std::size_t q : key_docs[p]) n += tokens_of_doc[p].size() * tokens_of_doc[q].size();
  return n;
}

BlockLayout make_block_layout(const std::vector<std::size_t>& doc_of_token,
                              const RelationSet& relations) {
  const std::size_t n_docs = relations[0].size();
  for (const auto& r : relations)
    if (r.size() != n_docs) throw Error(Errc::ShapeMismatch, "relation matrices differ in size");
  BlockLayout layout;
  layout.tokens_of_doc.resize(n_docs);
  for (std::size_t t = 0; t < doc_of_token.size(); ++t) {
    if (doc_of_token[t] >= n_docs)
      throw Error(Errc::ShapeMismatch, "token maps to a document outside the relations");
    layout.tokens_of_doc[doc_of_token[t]].push_back(t);
  }
  layout.key_docs.resize(n_docs);
  for (std::size_t p = 0; p < n_docs; ++p)
    for (std::size_t q = 0; q < n_docs; ++q) {
      bool any = false;
      for (const auto& r : relations) any = any || r.at(p, q);
      if (any && !layout.tokens_of_doc[q].empty()) layout.key_docs[p].push_back(q);
    }
  return layout;
}

BlockAttentionResult block_sparse_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                            const BlockLayout& layout,
                                            const RelationSet& relations,
                                            const RelationWeights& beta) {
  check_qkv(q, k, v);
  std::size_t n_tokens = 0;
  for (const auto& toks : layout.tokens_of_doc) n_tokens += toks.size();
  if (q.rows() != n_tokens || k.rows() != n_tokens)
    throw Error(Errc::ShapeMismatch, "Q/K rows differ from the layout token count");

  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  BlockAttentionResult res;
  res.output = Matrix(q.rows(), v.cols());
  res.probs.resize(layout.n_docs());
  for (std::size_t p = 0; p < layout.n_docs(); ++p) {
    const auto& queries = layout.tokens_of_doc[p];
    if (queries.empty()) continue;
    const auto& kdocs = layout.key_docs[p];
    std::size_t width = 0;
    for (std::size_t qd : kdocs) width += layout.tokens_of_doc[qd].size();
    if (width == 0) throw Error(Errc::EmptyAttentionRow, "document " + std::to_string(p));
    Matrix probs(queries.size(), width);
    for (std::size_t i = 0; i < queries.size(); ++i) {
      auto row = probs.row(i);
      const auto qrow = q.row(queries[i]);
      std::size_t col = 0;
      for (std::size_t qd : kdocs) {
        const double w = relation_weight(relations, beta, p, qd) * scale;
        for (std::size_t t : layout.tokens_of_doc[qd]) row[col++] = dot(qrow, k.row(t)) * w;
      }
      softmax_inplace(row);
      auto o = res.output.row(queries[i]);
      col = 0;
      for (std::size_t qd : kdocs)
        for (std::size_t t : layout.tokens_of_doc[qd]) {
          const double pr = row[col++];
          auto vr = v.row(t);
          for (std::size_t c = 0; c < v.cols(); ++c) o[c] += pr * vr[c];
        }
    }
    res.stats.blocks_computed += kdocs.size();
    res.stats.attended_pairs += probs.size();
    res.stats.workspace_doubles += probs.size();
    res.probs[p] = std::move(probs);
  }
  return res;
}

BlockAttentionGrads block_sparse_attention_backward(const Matrix& q, const Matrix& k,
                                                    const Matrix& v, const BlockLayout& layout,
                                                    const RelationSet& relations,
                                                    const RelationWeights& beta,
                                                    const BlockAttentionResult& forward,
                                                    const Matrix& d_output) {
  check_qkv(q, k, v);
  if (!d_output.same_shape(forward.output))
    throw Error(Errc::ShapeMismatch, "output gradient shape");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  BlockAttentionGrads g{Matrix(q.rows(), q.cols()), Matrix(k.rows(), k.cols()),
                        Matrix(v.rows(), v.cols()), {}};
  std::vector<double> d_prob;
  for (std::size_t p = 0; p < layout.n_docs(); ++p) {
    const auto& queries = layout.tokens_of_doc[p];
    if (queries.empty()) continue;
    const auto& kdocs = layout.key_docs[p];
    const Matrix& probs = forward.probs[p];
    d_prob.assign(probs.cols(), 0.0);
    // Σ over the block of dlogit · (q·k)/√d_k, per key document.
    std::vector<double> block_dw(kdocs.size(), 0.0);
    for (std::size_t i = 0; i < queries.size(); ++i) {
      const std::size_t s = queries[i];
      const auto prow = probs.row(i);
      const auto dout = d_output.row(s);
      double weighted = 0.0;
      std::size_t col = 0;
      for (std::size_t qd : kdocs)
        for (std::size_t t : layout.tokens_of_doc[qd]) {
          d_prob[col] = dot(dout, v.row(t));
          weighted += prow[col] * d_prob[col];
          auto dv = g.dv.row(t);
          for (std::size_t c = 0; c < v.cols(); ++c) dv[c] += prow[col] * dout[c];
          ++col;
        }
      col = 0;
      auto dq = g.dq.row(s);
      const auto qrow = q.row(s);
      for (std::size_t b = 0; b < kdocs.size(); ++b) {
        const std::size_t qd = kdocs[b];
        const double w = relation_weight(relations, beta, p, qd);
        for (std::size_t t : layout.tokens_of_doc[qd]) {
          const double dlogit = prow[col] * (d_prob[col] - weighted);
          ++col;
          const auto krow = k.row(t);
          block_dw[b] += dlogit * dot(qrow, krow) * scale;
          const double dqk = dlogit * w * scale;
          if (dqk == 0.0) continue;
          auto dk = g.dk.row(t);
          for (std::size_t c = 0; c < q.cols(); ++c) {
            dq[c] += dqk * krow[c];
            dk[c] += dqk * qrow[c];
          }
        }
      }
    }
    for (std::size_t b = 0; b < kdocs.size(); ++b)
      for (std::size_t j = 0; j < kNumRelations; ++j)
        if (relations[j].at(p, kdocs[b])) g.dbeta[j] += block_dw[b];
  }
  return g;
}

DenseAttentionResult scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                          bool causal) {
  check_qkv(q, k, v);
  if (causal && q.rows() > k.rows())
    throw Error(Errc::ShapeMismatch, "causal attention needs at least as many keys as queries");
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  DenseAttentionResult res{Matrix(q.rows(), v.cols()), matmul_nt(q, k)};
  for (std::size_t i = 0; i < q.rows(); ++i) {
    auto row = res.probs.row(i);
    const std::size_t visible = causal ? i + 1 : k.rows();
    for (std::size_t j = 0; j < visible; ++j) row[j] *= scale;
    softmax_inplace(row.subspan(0, visible));
    for (std::size_t j = visible; j < k.rows(); ++j) row[j] = 0.0;
  }
  res.output = matmul(res.probs, v);
  return res;
}

DenseAttentionGrads scaled_dot_attention_backward(const Matrix& q, const Matrix& k,
                                                  const Matrix& v,
                                                  const DenseAttentionResult& forward,
                                                  const Matrix& d_output) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(q.cols()));
  DenseAttentionGrads g;
  g.dv = matmul_tn(forward.probs, d_output);
  Matrix d_logits = matmul_nt(d_output, v);  // dP
  for (std::size_t i = 0; i < d_logits.rows(); ++i) {
    auto dp = d_logits.row(i);
    const auto p = forward.probs.row(i);
    double weighted = 0.0;
    for (std::size_t j = 0; j < dp.size(); ++j) weighted += p[j] * dp[j];
    for (std::size_t j = 0; j < dp.size(); ++j) dp[j] = p[j] * (dp[j] - weighted) * scale;
  }
  g.dq = matmul(d_logits, k);
  g.dk = matmul_tn(d_logits, q);
  return g;
}

}  // namespace metarev
