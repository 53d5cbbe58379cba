#include "metarev/relations.hpp"

#include <sstream>

namespace metarev {

namespace {

constexpr std::array<std::string_view, kNumRelations> kNames = {
    "ancestor1", "ancestor_all", "descendant1", "descendant_all",
    "siblings",  "document_self", "same_thread",
};

std::size_t root_of(const std::vector<std::optional<std::size_t>>& parent, std::size_t i) {
  while (parent[i]) i = *parent[i];
  return i;
}

RelationMatrix ancestors(const std::vector<std::optional<std::size_t>>& parent, bool all,
                         RelationKind kind) {
  RelationMatrix m(kind, parent.size());
  for (std::size_t i = 0; i < parent.size(); ++i) {
    for (auto p = parent[i]; p; p = all ? parent[*p] : std::nullopt) m.set(i, *p);
  }
  return m;
}

}  // namespace

std::string_view relation_name(RelationKind kind) noexcept {
  return kNames[static_cast<std::size_t>(kind)];
}

std::optional<RelationKind> relation_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kNames.size(); ++i)
    if (kNames[i] == name) return static_cast<RelationKind>(i);
  return std::nullopt;
}

std::size_t RelationMatrix::count() const noexcept {
  std::size_t c = 0;
  for (auto b : bits_) c += b;
  return c;
}

RelationMatrix RelationMatrix::transposed(RelationKind kind) const {
  RelationMatrix t(kind, n_);
  for (std::size_t i = 0; i < n_; ++i)
    for (std::size_t j = 0; j < n_; ++j) t.set(j, i, at(i, j));
  return t;
}

std::string RelationMatrix::to_grid() const {
  std::ostringstream os;
  for (std::size_t i = 0; i < n_; ++i) {
    for (std::size_t j = 0; j < n_; ++j) os << (j ? " " : "") << (at(i, j) ? '1' : '0');
    os << '\n';
  }
  return os.str();
}

RelationMatrix build_relation(const std::vector<std::optional<std::size_t>>& parent,
                              RelationKind kind) {
  const std::size_t n = parent.size();
  switch (kind) {
    case RelationKind::Ancestor1: return ancestors(parent, false, kind);
    case RelationKind::AncestorAll: return ancestors(parent, true, kind);
    case RelationKind::Descendant1:
      return ancestors(parent, false, kind).transposed(kind);
    case RelationKind::DescendantAll:
      return ancestors(parent, true, kind).transposed(kind);
    case RelationKind::Siblings: {
      // Roots count as children of one implicit root.
      RelationMatrix m(kind, n);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (i != j && parent[i] == parent[j]) m.set(i, j);
      return m;
    }
    case RelationKind::DocumentSelf: {
      RelationMatrix m(kind, n);
      for (std::size_t i = 0; i < n; ++i) m.set(i, i);
      return m;
    }
    case RelationKind::SameThread: {
      RelationMatrix m(kind, n);
      std::vector<std::size_t> root(n);
      for (std::size_t i = 0; i < n; ++i) root[i] = root_of(parent, i);
      for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j)
          if (root[i] == root[j]) m.set(i, j);
      return m;
    }
  }
  return RelationMatrix(kind, n);
}

RelationSet build_all_relations(const std::vector<std::optional<std::size_t>>& parent) {
  RelationSet set;
  for (RelationKind k : kAllRelations) set[static_cast<std::size_t>(k)] = build_relation(parent, k);
  return set;
}

RelationMatrix build_relation(const Sample& sample, RelationKind kind) {
  return build_relation(parent_indices(sample), kind);
}

RelationSet build_all_relations(const Sample& sample) {
  return build_all_relations(parent_indices(sample));
}

}  // namespace metarev
