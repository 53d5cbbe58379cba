#pragma once

#include <optional>
#include <random>
#include <string>
#include <vector>

#include "metarev/conversation.hpp"
#include "metarev/matrix.hpp"

namespace metarev::testing {

using ParentVec = std::vector<std::optional<std::size_t>>;

// Random forest over n nodes where every parent index precedes its child.
inline ParentVec random_forest(std::mt19937_64& rng, std::size_t n, double root_prob = 0.3) {
  ParentVec parent(n);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (std::size_t i = 1; i < n; ++i)
    if (u(rng) >= root_prob) parent[i] = std::uniform_int_distribution<std::size_t>(0, i - 1)(rng);
  return parent;
}

// Same forest with the node order shuffled, so parents may come after children.
inline ParentVec shuffled_forest(std::mt19937_64& rng, std::size_t n) {
  const ParentVec base = random_forest(rng, n);
  std::vector<std::size_t> perm(n);
  for (std::size_t i = 0; i < n; ++i) perm[i] = i;
  std::shuffle(perm.begin(), perm.end(), rng);
  ParentVec out(n);
  for (std::size_t i = 0; i < n; ++i)
    if (base[i]) out[perm[i]] = perm[*base[i]];
  return out;
}

inline Matrix random_matrix(std::mt19937_64& rng, std::size_t r, std::size_t c,
                            double scale = 1.0) {
  std::normal_distribution<double> d(0.0, scale);
  Matrix m(r, c);
  for (auto& x : m.values()) x = d(rng);
  return m;
}

// A valid sample whose document forest is `parent`: document 0 is the
// abstract when it is a root, others alternate reviews and responses.
inline Sample sample_from_forest(const ParentVec& parent, std::mt19937_64& rng) {
  Sample s;
  s.paper_id = "p";
  s.meta_review = "the paper is fine .";
  std::uniform_int_distribution<int> rating(1, 10), conf(1, 5);
  bool have_abstract = false;
  for (std::size_t i = 0; i < parent.size(); ++i) {
    Document d;
    d.doc_id = "d" + std::to_string(i);
    if (parent[i]) d.parent_id = "d" + std::to_string(*parent[i]);
    d.text = "text of document " + std::to_string(i) + " .";
    if (!parent[i] && !have_abstract) {
      d.doc_type = DocType::PaperAbstract;
      have_abstract = true;
    } else if (!parent[i]) {
      d.doc_type = DocType::OfficialReview;
      d.rating = rating(rng);
      d.confidence = conf(rng);
    } else {
      d.doc_type = i % 2 ? DocType::AuthorResponse : DocType::OfficialResponse;
    }
    s.documents.push_back(std::move(d));
  }
  return s;
}

}  // namespace metarev::testing
