#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "metarev/conversation.hpp"

namespace metarev {

/// Document-level relations, in the fixed order used for the β weights.
enum class RelationKind : int {
  Ancestor1 = 0,
  AncestorAll = 1,
  Descendant1 = 2,
  DescendantAll = 3,
  Siblings = 4,
  DocumentSelf = 5,
  SameThread = 6,
};

inline constexpr std::size_t kNumRelations = 7;
inline constexpr std::array<RelationKind, kNumRelations> kAllRelations = {
    RelationKind::Ancestor1, RelationKind::AncestorAll, RelationKind::Descendant1,
    RelationKind::DescendantAll, RelationKind::Siblings, RelationKind::DocumentSelf,
    RelationKind::SameThread,
};

std::string_view relation_name(RelationKind kind) noexcept;
std::optional<RelationKind> relation_from_name(std::string_view name) noexcept;

/// n×n boolean matrix. at(i, j) == true means tokens of document i may attend
/// to tokens of document j.
class RelationMatrix {
 public:
  RelationMatrix() = default;
  RelationMatrix(RelationKind kind, std::size_t n) : kind_(kind), n_(n), bits_(n * n, 0) {}

  RelationKind kind() const noexcept { return kind_; }
  std::size_t size() const noexcept { return n_; }
  bool at(std::size_t i, std::size_t j) const noexcept { return bits_[i * n_ + j] != 0; }
  void set(std::size_t i, std::size_t j, bool v = true) noexcept { bits_[i * n_ + j] = v; }

  std::size_t count() const noexcept;
  RelationMatrix transposed(RelationKind kind) const;
  /// Rows of 0/1 separated by spaces.
  std::string to_grid() const;

  friend bool operator==(const RelationMatrix&, const RelationMatrix&) = default;

 private:
  RelationKind kind_ = RelationKind::DocumentSelf;
  std::size_t n_ = 0;
  std::vector<std::uint8_t> bits_;
};

using RelationSet = std::array<RelationMatrix, kNumRelations>;

RelationMatrix build_relation(const Sample& sample, RelationKind kind);
RelationSet build_all_relations(const Sample& sample);

/// Same relations from a bare parent vector; the sample overloads forward here.
RelationMatrix build_relation(const std::vector<std::optional<std::size_t>>& parent,
                              RelationKind kind);
RelationSet build_all_relations(const std::vector<std::optional<std::size_t>>& parent);

}  // namespace metarev
