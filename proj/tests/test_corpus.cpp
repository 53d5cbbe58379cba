#include <gtest/gtest.h>

#include <random>

#include "helpers.hpp"
#include "metarev/corpus.hpp"
#include "metarev/error.hpp"

using namespace metarev;

namespace {

ConflictLabel pairwise_oracle(const std::vector<int>& r) {
  ConflictLabel l;
  l.n_official_reviews = r.size();
  for (std::size_t i = 0; i < r.size(); ++i)
    for (std::size_t j = 0; j < r.size(); ++j)
      if (i != j) l.max_pair_diff = std::max(l.max_pair_diff, std::abs(r[i] - r[j]));
  l.is_cf = l.max_pair_diff >= 4;
  return l;
}

Document review(const std::string& id, int rating, const std::string& text = "ok .") {
  Document d;
  d.doc_id = id;
  d.doc_type = DocType::OfficialReview;
  d.text = text;
  d.rating = rating;
  d.confidence = 3;
  return d;
}

Document plain(const std::string& id, std::optional<std::string> parent, DocType t,
               const std::string& text) {
  Document d;
  d.doc_id = id;
  d.parent_id = std::move(parent);
  d.doc_type = t;
  d.text = text;
  return d;
}

}  // namespace

TEST(Conflict, Examples) {
  EXPECT_TRUE(detect_conflict(std::vector<int>{8, 3}).is_cf);
  EXPECT_FALSE(detect_conflict(std::vector<int>{5, 5, 6}).is_cf);
  const ConflictLabel l = detect_conflict(std::vector<int>{1, 10, 5});
  EXPECT_TRUE(l.is_cf);
  EXPECT_EQ(l.max_pair_diff, 9);
  EXPECT_FALSE(detect_conflict(std::vector<int>{3, 6}).is_cf);
  EXPECT_TRUE(detect_conflict(std::vector<int>{3, 7}).is_cf);
  const ConflictLabel single = detect_conflict(std::vector<int>{9});
  EXPECT_FALSE(single.is_cf);
  EXPECT_EQ(single.n_official_reviews, 1u);
  EXPECT_FALSE(detect_conflict(std::vector<int>{}).is_cf);
}

TEST(Conflict, MatchesPairwiseOracle) {
  std::mt19937_64 rng(6);
  for (int it = 0; it < 1000; ++it) {
    std::vector<int> r(rng() % 7);
    for (int& x : r) x = 1 + static_cast<int>(rng() % 10);
    const ConflictLabel got = detect_conflict(r), want = pairwise_oracle(r);
    EXPECT_EQ(got.is_cf, want.is_cf);
    EXPECT_EQ(got.max_pair_diff, want.max_pair_diff);
  }
}

TEST(Conflict, SampleIgnoresNonReviews) {
  Sample s;
  s.documents = {review("a", 2), plain("b", "a", DocType::AuthorResponse, "hi ."), review("c", 6)};
  EXPECT_TRUE(detect_conflict(s).is_cf);
  EXPECT_EQ(detect_conflict(s).n_official_reviews, 2u);
}

TEST(Stats, HandCorpus) {
  Sample a;
  a.documents = {plain("x", std::nullopt, DocType::PaperAbstract, "one two three"),
                 plain("y", "x", DocType::AuthorComment, "one two three four five")};
  a.meta_review = "fine. good.";
  Sample b;
  b.documents = {review("r1", 4, "bad idea. weak"), review("r2", 8, "great"),
                 plain("c", "r1", DocType::AuthorResponse, "we disagree")};
  b.meta_review = "mixed";
  const CorpusStats one = corpus_stats({a});
  EXPECT_DOUBLE_EQ(one.tokens_per_doc, 4.0);
  const CorpusStats st = corpus_stats({a, b});
  EXPECT_EQ(st.n_samples, 2u);
  EXPECT_DOUBLE_EQ(st.docs_per_sample, 2.5);
  // Tokens: 3, 5, 4 ("bad idea . weak"), 1, 2. Sentences 1, 1, 2, 1, 1.
  EXPECT_DOUBLE_EQ(st.tokens_per_doc, (3 + 5 + 4 + 1 + 2) / 5.0);
  EXPECT_DOUBLE_EQ(st.sentences_per_doc, 6.0 / 5.0);
  EXPECT_DOUBLE_EQ(st.sentences_per_summary, 1.5);
  EXPECT_DOUBLE_EQ(st.tokens_per_summary, (4 + 1) / 2.0);
  EXPECT_DOUBLE_EQ(st.tree_height, 2.0);
  EXPECT_DOUBLE_EQ(st.tree_width, 1.5);
  // Only b has reviews: ratings [4, 8] → population variance 4.
  EXPECT_DOUBLE_EQ(st.rating_variance, 4.0);
  EXPECT_DOUBLE_EQ(st.cf_fraction, 0.5);
  EXPECT_THROW(corpus_stats({}), Error);
  EXPECT_EQ(to_json(st)["n_samples"], 2);
}

TEST(Stats, CfFractionIsMeanIndicator) {
  std::mt19937_64 rng(10);
  std::vector<Sample> corpus;
  double cf = 0.0;
  for (int i = 0; i < 40; ++i) {
    Sample s;
    const std::size_t n = rng() % 4;
    for (std::size_t j = 0; j < n; ++j)
      s.documents.push_back(review("r" + std::to_string(j), 1 + static_cast<int>(rng() % 10)));
    if (s.documents.empty()) s.documents.push_back(plain("a", std::nullopt, DocType::PaperAbstract, "x"));
    cf += detect_conflict(s).is_cf;
    corpus.push_back(s);
  }
  EXPECT_DOUBLE_EQ(corpus_stats(corpus).cf_fraction, cf / 40.0);
}

TEST(Novelty, Examples) {
  EXPECT_EQ(*novel_ngram_pct("the model works well on graphs", {"the model works well on graphs"}, 1), 0.0);
  for (int n = 1; n <= 3; ++n) {
    EXPECT_EQ(*novel_ngram_pct("strong results demonstrate clear gains", {"the method is novel", "clear"}, 1) > 0, true);
    EXPECT_EQ(*novel_ngram_pct("alpha beta gamma delta", {"epsilon zeta"}, n), 100.0);
    EXPECT_EQ(*novel_ngram_pct("alpha beta gamma delta", {"alpha beta gamma delta"}, n), 0.0);
  }
  EXPECT_NEAR(*novel_ngram_pct("novel idea good", {"good idea"}, 1), 100.0 / 3.0, 0.01);
  EXPECT_FALSE(novel_ngram_pct("the and of", {"x"}, 1).has_value());
  EXPECT_FALSE(novel_ngram_pct("single", {"x"}, 2).has_value());
  EXPECT_THROW(novel_ngram_pct("a", {}, 4), Error);
}

TEST(Novelty, PluggableNormalizer) {
  const Normalizer strip_s = [](const std::string& w) {
    return w.size() > 3 && w.back() == 's' ? w.substr(0, w.size() - 1) : w;
  };
  EXPECT_EQ(*novel_ngram_pct("results", {"result"}, 1), 100.0);
  EXPECT_EQ(*novel_ngram_pct("results", {"result"}, 1, strip_s), 0.0);
}

TEST(Novelty, MonotoneInSources) {
  std::mt19937_64 rng(12);
  const std::vector<std::string> words{"alpha", "beta", "gamma", "delta", "model", "graph", "the", "and"};
  auto text = [&](std::size_t len) {
    std::string s;
    for (std::size_t i = 0; i < len; ++i) s += words[rng() % words.size()] + " ";
    return s;
  };
  for (int it = 0; it < 200; ++it) {
    const std::string summary = text(2 + rng() % 8);
    std::vector<std::string> sources{text(rng() % 8)};
    for (int n = 1; n <= 3; ++n) {
      const auto before = novel_ngram_pct(summary, sources, n);
      auto more = sources;
      more[0] += " " + text(1 + rng() % 6);
      more.push_back(text(rng() % 5));
      const auto after = novel_ngram_pct(summary, more, n);
      ASSERT_EQ(before.has_value(), after.has_value());
      if (before) EXPECT_LE(*after, *before);
    }
  }
}

TEST(Split, SizesAndDeterminism) {
  std::vector<Sample> corpus(15);
  for (std::size_t i = 0; i < corpus.size(); ++i) corpus[i].paper_id = "p" + std::to_string(i);
  const DatasetSplit s15 = split_dataset(corpus, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(s15.train.size(), 13u);
  EXPECT_EQ(s15.validation.size(), 1u);
  EXPECT_EQ(s15.test.size(), 1u);
  const std::vector<Sample> ten(corpus.begin(), corpus.begin() + 10);
  const DatasetSplit s10 = split_dataset(ten, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(s10.train.size(), 8u);
  EXPECT_EQ(s10.validation.size(), 1u);
  EXPECT_EQ(s10.test.size(), 1u);
  const DatasetSplit again = split_dataset(corpus, {0.8, 0.1, 0.1}, 1);
  EXPECT_EQ(again.train, s15.train);
  EXPECT_EQ(again.test, s15.test);
  std::set<std::string> ids;
  for (const auto* part : {&s15.train, &s15.validation, &s15.test})
    for (const Sample& s : *part) ids.insert(s.paper_id);
  EXPECT_EQ(ids.size(), 15u);
  EXPECT_THROW(split_dataset(corpus, {0.5, 0.1, 0.1}, 1), Error);
}
