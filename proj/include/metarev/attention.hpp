#pragma once

#include <array>
#include <cstddef>
#include <vector>

#include "metarev/assembly.hpp"
#include "metarev/matrix.hpp"
#include "metarev/relations.hpp"

namespace metarev {

using RelationWeights = std::array<double, kNumRelations>;

/// Dense reference for relationship-aware attention. Materializes the full
/// token×token pattern: a pair is allowed when any mask is set, its logit is
/// (q·k) · Σ β_j mask_j / √d_k, disallowed pairs get no probability mass.
/// Used as the oracle for the block path.
Matrix rsattn_head(const Matrix& q, const Matrix& k, const Matrix& v,
                   const std::vector<TokenMask>& masks, const RelationWeights& beta);

/// Which (query doc, key doc) blocks are attended, and the tokens of each doc.
struct BlockLayout {
  std::vector<std::vector<std::size_t>> tokens_of_doc;
  std::vector<std::vector<std::size_t>> key_docs;  // allowed key docs per query doc, ascending

  std::size_t n_docs() const noexcept { return tokens_of_doc.size(); }
  std::size_t n_blocks() const noexcept;
  /// Σ over allowed blocks of |doc p| × |doc q|.
  std::size_t attended_pairs() const noexcept;
};

/// Throws ShapeMismatch if a document index is outside the relation matrices.
BlockLayout make_block_layout(const std::vector<std::size_t>& doc_of_token,
                              const RelationSet& relations);

struct BlockAttentionStats {
  std::size_t blocks_computed = 0;
  std::size_t attended_pairs = 0;
  /// Doubles held for the backward pass (attention probabilities).
  std::size_t workspace_doubles = 0;
};

struct BlockAttentionResult {
  Matrix output;
  /// probs[p] is |doc p| × (Σ_{q ∈ key_docs[p]} |doc q|), keys in key_docs order.
  std::vector<Matrix> probs;
  BlockAttentionStats stats;
};

/// Relationship-aware sparse attention evaluated block by block: only document
/// pairs with at least one relation are touched and no n_tokens² buffer exists.
BlockAttentionResult block_sparse_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                            const BlockLayout& layout,
                                            const RelationSet& relations,
                                            const RelationWeights& beta);

struct BlockAttentionGrads {
  Matrix dq, dk, dv;
  RelationWeights dbeta{};
};

BlockAttentionGrads block_sparse_attention_backward(const Matrix& q, const Matrix& k,
                                                    const Matrix& v, const BlockLayout& layout,
                                                    const RelationSet& relations,
                                                    const RelationWeights& beta,
                                                    const BlockAttentionResult& forward,
                                                    const Matrix& d_output);

/// Standard scaled dot-product attention; `causal` restricts query i to keys ≤ i.
struct DenseAttentionResult {
  Matrix output;
  Matrix probs;
};

DenseAttentionResult scaled_dot_attention(const Matrix& q, const Matrix& k, const Matrix& v,
                                          bool causal);

struct DenseAttentionGrads {
  Matrix dq, dk, dv;
};

DenseAttentionGrads scaled_dot_attention_backward(const Matrix& q, const Matrix& k,
                                                  const Matrix& v,
                                                  const DenseAttentionResult& forward,
                                                  const Matrix& d_output);

}  // namespace metarev
