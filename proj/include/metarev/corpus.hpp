#pragma once

#include <array>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <tuple>
#include <vector>

#include "json.hpp"
#include "metarev/conversation.hpp"

namespace metarev {

inline constexpr int kConflictThreshold = 4;

struct ConflictLabel {
  bool is_cf = false;
  int max_pair_diff = 0;
  std::size_t n_official_reviews = 0;
};

/// Conflict when two official reviews differ in rating by at least 4.
/// Fewer than two reviews is labelled non-conflict with max_pair_diff 0.
ConflictLabel detect_conflict(const Sample& sample);
ConflictLabel detect_conflict(const std::vector<int>& ratings);

struct CorpusStats {
  std::size_t n_samples = 0;
  double docs_per_sample = 0.0;
  double sentences_per_doc = 0.0;
  double tokens_per_doc = 0.0;
  double sentences_per_summary = 0.0;
  double tokens_per_summary = 0.0;
  double tree_height = 0.0;
  double tree_width = 0.0;
  /// Population variance of official-review ratings, averaged over samples
  /// that have at least one official review.
  double rating_variance = 0.0;
  double cf_fraction = 0.0;
};

/// Throws EmptyCorpus.
CorpusStats corpus_stats(const std::vector<Sample>& corpus);
nlohmann::json to_json(const CorpusStats& s);

/// Token normalizer applied after lowercasing (identity by default; plug a
/// stemmer or lemmatizer here).
using Normalizer = std::function<std::string(const std::string&)>;

/// Percentage of distinct summary n-grams (after stop-word removal) that do
/// not occur in any source document. nullopt when the summary has no n-gram
/// left after preprocessing. Throws InvalidArgument unless n ∈ {1,2,3}.
std::optional<double> novel_ngram_pct(const std::string& summary,
                                      const std::vector<std::string>& sources, int n,
                                      const Normalizer& normalize = {});

/// Corpus average of novel_ngram_pct for n = 1, 2, 3; undefined samples skipped.
std::array<double, 3> corpus_novel_ngrams(const std::vector<Sample>& corpus,
                                          const Normalizer& normalize = {});

struct DatasetSplit {
  std::vector<Sample> train, validation, test;
};

/// Seeded shuffle, then floor(n·ratio) for validation and test with the
/// remainder going to train. Throws InvalidArgument unless ratios sum to 1.
DatasetSplit split_dataset(const std::vector<Sample>& corpus,
                           const std::array<double, 3>& ratios, std::uint64_t seed);

}  // namespace metarev
