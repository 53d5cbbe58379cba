#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "metarev/conversation.hpp"
#include "metarev/relations.hpp"

namespace metarev {

using TokenId = std::int32_t;

class Vocab {
 public:
  static constexpr TokenId kPad = 0;
  static constexpr TokenId kBos = 1;
  static constexpr TokenId kEos = 2;
  static constexpr TokenId kUnk = 3;
  static constexpr TokenId kDocSep = 4;
  static constexpr std::size_t kReserved = 5;

  Vocab();

  /// Appends a token if absent; returns its id.
  TokenId add(const std::string& token);

  TokenId id(std::string_view token) const;  // kUnk if absent
  const std::string& token(TokenId id) const;
  bool contains(std::string_view token) const;
  std::size_t size() const noexcept { return tokens_.size(); }

  std::vector<TokenId> encode(std::string_view text) const;
  /// Drops reserved ids and joins with spaces.
  std::string decode(const std::vector<TokenId>& ids) const;

  /// "id<TAB>token" per line, sorted by id.
  void save(const std::string& path) const;
  static Vocab load(const std::string& path);
  std::string to_text() const;
  static Vocab from_text(std::string_view text);

  friend bool operator==(const Vocab& a, const Vocab& b) { return a.tokens_ == b.tokens_; }

 private:
  std::vector<std::string> tokens_;
  std::unordered_map<std::string, TokenId> ids_;
};

/// Keeps the most frequent tokens of all document texts and meta-reviews;
/// ties go to the lexicographically smaller token. Throws EmptyCorpus.
Vocab build_vocab(const std::vector<Sample>& corpus, std::size_t max_size);
Vocab build_vocab(const std::vector<std::string>& texts, std::size_t max_size);

struct AssembledInput {
  std::vector<TokenId> token_ids;
  /// Document index of every token; a delimiter belongs to the document it opens.
  std::vector<std::size_t> doc_of_token;
  /// Position of each document's <doc-sep>, in document order.
  std::vector<std::size_t> delimiter_indices;
  /// Delimiter positions of official reviews only, in document order.
  std::vector<std::size_t> official_review_positions;
  std::size_t budget = 0;
  std::size_t n_docs = 0;

  std::size_t size() const noexcept { return token_ids.size(); }
};

/// Per-document cap = floor(budget / n_docs), delimiter included. Throws
/// BudgetTooSmall when budget < 2 × n_docs.
AssembledInput assemble_input(const Sample& sample, const Vocab& vocab, std::size_t budget);

/// Token-level view of a document relation; never materialized densely.
class TokenMask {
 public:
  TokenMask(RelationMatrix relation, std::vector<std::size_t> doc_of_token)
      : relation_(std::move(relation)), doc_of_token_(std::move(doc_of_token)) {}

  RelationKind kind() const noexcept { return relation_.kind(); }
  std::size_t n_tokens() const noexcept { return doc_of_token_.size(); }
  bool at(std::size_t s, std::size_t t) const noexcept {
    return relation_.at(doc_of_token_[s], doc_of_token_[t]);
  }
  const RelationMatrix& relation() const noexcept { return relation_; }
  const std::vector<std::size_t>& doc_of_token() const noexcept { return doc_of_token_; }

 private:
  RelationMatrix relation_;
  std::vector<std::size_t> doc_of_token_;
};

std::vector<TokenMask> extend_relations(const std::vector<RelationMatrix>& matrices,
                                        const std::vector<std::size_t>& doc_of_token);

/// <bos> tokens… <eos>, at most max_out ids; a truncated target still ends in <eos>.
std::vector<TokenId> build_decoder_target(std::string_view meta_review, const Vocab& vocab,
                                          std::size_t max_out);

}  // namespace metarev
