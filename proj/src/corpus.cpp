#include "metarev/corpus.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

#include "metarev/error.hpp"
#include "metarev/text.hpp"

namespace metarev {

using nlohmann::json;

ConflictLabel detect_conflict(const std::vector<int>& ratings) {
  ConflictLabel label;
  label.n_official_reviews = ratings.size();
  if (ratings.size() >= 2) {
    const auto [lo, hi] = std::minmax_element(ratings.begin(), ratings.end());
    label.max_pair_diff = *hi - *lo;
  }
  label.is_cf = label.n_official_reviews >= 2 && label.max_pair_diff >= kConflictThreshold;
  return label;
}

ConflictLabel detect_conflict(const Sample& sample) {
  std::vector<int> ratings;
  for (const Document& d : sample.documents)
    if (d.doc_type == DocType::OfficialReview && d.rating) ratings.push_back(*d.rating);
  return detect_conflict(ratings);
}

CorpusStats corpus_stats(const std::vector<Sample>& corpus) {
  if (corpus.empty()) throw Error(Errc::EmptyCorpus, "corpus statistics need samples");
  CorpusStats st;
  st.n_samples = corpus.size();
  std::size_t n_docs = 0, doc_sentences = 0, doc_tokens = 0;
  std::size_t summary_sentences = 0, summary_tokens = 0;
  std::size_t height = 0, width = 0, cf = 0, rated = 0;
  double variance_sum = 0.0;
  for (const Sample& s : corpus) {
    for (const Document& d : s.documents) {
      ++n_docs;
      doc_sentences += text::split_sentences(d.text).size();
      doc_tokens += text::tokenize(d.text).size();
    }
    summary_sentences += text::split_sentences(s.meta_review).size();
    summary_tokens += text::tokenize(s.meta_review).size();
    const TreeStats ts = tree_stats(s);
    height += ts.height;
    width += ts.width;
    if (detect_conflict(s).is_cf) ++cf;
    std::vector<double> ratings;
    for (const Document& d : s.documents)
      if (d.doc_type == DocType::OfficialReview && d.rating) ratings.push_back(*d.rating);
    if (!ratings.empty()) {
      double mean = 0.0;
      for (double r : ratings) mean += r;
      mean /= static_cast<double>(ratings.size());
      double var = 0.0;
      for (double r : ratings) var += (r - mean) * (r - mean);
      variance_sum += var / static_cast<double>(ratings.size());
      ++rated;
    }
  }
  const double ns = static_cast<double>(corpus.size());
  const auto ratio = [](std::size_t a, std::size_t b) {
    return b == 0 ? 0.0 : static_cast<double>(a) / static_cast<double>(b);
  };
  st.docs_per_sample = static_cast<double>(n_docs) / ns;
  st.sentences_per_doc = ratio(doc_sentences, n_docs);
  st.tokens_per_doc = ratio(doc_tokens, n_docs);
  st.sentences_per_summary = static_cast<double>(summary_sentences) / ns;
  st.tokens_per_summary = static_cast<double>(summary_tokens) / ns;
  st.tree_height = static_cast<double>(height) / ns;
  st.tree_width = static_cast<double>(width) / ns;
  st.rating_variance = rated == 0 ? 0.0 : variance_sum / static_cast<double>(rated);
  st.cf_fraction = static_cast<double>(cf) / ns;
  return st;
}

json to_json(const CorpusStats& s) {
  return {{"n_samples", s.n_samples},
          {"docs_per_sample", s.docs_per_sample},
          {"sentences_per_doc", s.sentences_per_doc},
          {"tokens_per_doc", s.tokens_per_doc},
          {"sentences_per_summary", s.sentences_per_summary},
          {"tokens_per_summary", s.tokens_per_summary},
          {"tree_height", s.tree_height},
          {"tree_width", s.tree_width},
          {"rating_variance", s.rating_variance},
          {"cf_fraction", s.cf_fraction}};
}

namespace {

std::vector<std::string> content_words(const std::string& s, const Normalizer& normalize) {
  std::vector<std::string> out;
  const auto& stop = text::stop_words();
  for (auto& w : text::word_tokens(s)) {
    if (stop.count(w)) continue;
    out.push_back(normalize ? normalize(w) : std::move(w));
  }
  return out;
}

std::set<std::vector<std::string>> ngram_set(const std::vector<std::string>& words,
                                             std::size_t n) {
  std::set<std::vector<std::string>> out;
  for (std::size_t i = 0; i + n <= words.size(); ++i)
    out.emplace(words.begin() + static_cast<std::ptrdiff_t>(i),
                words.begin() + static_cast<std::ptrdiff_t>(i + n));
  return out;
}

}  // namespace

std::optional<double> novel_ngram_pct(const std::string& summary,
                                      const std::vector<std::string>& sources, int n,
                                      const Normalizer& normalize) {
  if (n < 1 || n > 3) throw Error(Errc::InvalidArgument, "n must be 1, 2 or 3");
  const auto un = static_cast<std::size_t>(n);
  const auto target = ngram_set(content_words(summary, normalize), un);
  if (target.empty()) return std::nullopt;
  std::set<std::vector<std::string>> seen;
  for (const auto& src : sources) seen.merge(ngram_set(content_words(src, normalize), un));
  std::size_t novel = 0;
  for (const auto& g : target) novel += seen.count(g) == 0;
  return 100.0 * static_cast<double>(novel) / static_cast<double>(target.size());
}

std::array<double, 3> corpus_novel_ngrams(const std::vector<Sample>& corpus,
                                          const Normalizer& normalize) {
  std::array<double, 3> out{};
  for (int n = 1; n <= 3; ++n) {
    double sum = 0.0;
    std::size_t count = 0;
    for (const Sample& s : corpus) {
      std::vector<std::string> sources;
      for (const Document& d : s.documents) sources.push_back(d.text);
      if (auto pct = novel_ngram_pct(s.meta_review, sources, n, normalize)) {
        sum += *pct;
        ++count;
      }
    }
    out[static_cast<std::size_t>(n - 1)] = count == 0 ? 0.0 : sum / static_cast<double>(count);
  }
  return out;
}

DatasetSplit split_dataset(const std::vector<Sample>& corpus,
                           const std::array<double, 3>& ratios, std::uint64_t seed) {
  const double total = ratios[0] + ratios[1] + ratios[2];
  if (std::abs(total - 1.0) > 1e-9 || *std::min_element(ratios.begin(), ratios.end()) < 0.0)
    throw Error(Errc::InvalidArgument, "split ratios must be non-negative and sum to 1");
  std::vector<std::size_t> order(corpus.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::mt19937_64 rng(seed);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n = static_cast<double>(corpus.size());
  const auto n_val = static_cast<std::size_t>(std::floor(n * ratios[1] + 1e-9));
  const auto n_test = static_cast<std::size_t>(std::floor(n * ratios[2] + 1e-9));
  const std::size_t n_train = corpus.size() - n_val - n_test;
  DatasetSplit out;
  for (std::size_t i = 0; i < order.size(); ++i) {
    const Sample& s = corpus[order[i]];
    if (i < n_train)
      out.train.push_back(s);
    else if (i < n_train + n_val)
      out.validation.push_back(s);
    else
      out.test.push_back(s);
  }
  return out;
}

}  // namespace metarev
