#include <gtest/gtest.h>

#include <algorithm>
#include <filesystem>
#include <random>

#include "metarev/error.hpp"
#include "metarev/evaluation.hpp"
#include "metarev/synthetic.hpp"
#include "metarev/text.hpp"

using namespace metarev;

namespace {

// Plain dynamic-programming LCS, independent of the library routine.
std::size_t lcs_oracle(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 0; i < a.size(); ++i) {
    for (std::size_t j = 0; j < b.size(); ++j)
      cur[j + 1] = a[i] == b[j] ? prev[j] + 1 : std::max(prev[j + 1], cur[j]);
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

std::string random_sentence(std::mt19937_64& rng, std::size_t max_len) {
  static const std::vector<std::string> words{"the", "cat", "sat", "on", "mat", "a", "dog", "ran"};
  std::string s;
  const std::size_t len = 1 + rng() % max_len;
  for (std::size_t i = 0; i < len; ++i) s += (i ? " " : "") + words[rng() % words.size()];
  return s;
}

Sample sample_with(const std::string& id, std::vector<int> ratings, const std::string& meta,
                   Acceptance acc) {
  Sample s;
  s.paper_id = id;
  s.meta_review = meta;
  s.acceptance = acc;
  for (std::size_t i = 0; i < ratings.size(); ++i) {
    Document d;
    d.doc_id = "r" + std::to_string(i);
    d.doc_type = DocType::OfficialReview;
    d.text = "review .";
    d.rating = ratings[i];
    d.confidence = 3;
    s.documents.push_back(d);
  }
  return s;
}

AccClassifier cue_classifier() {
  return train_acc_classifier({"clear accept here", "clear reject here", "strong accept", "weak reject"},
                              {Acceptance::Accept, Acceptance::Reject, Acceptance::Accept,
                               Acceptance::Reject});
}

}  // namespace

TEST(Overlap, Examples) {
  const OverlapScore same = lcs_f1_sum("the cat sat. it was happy.", "the cat sat. it was happy.");
  EXPECT_DOUBLE_EQ(same.f1, 100.0);
  EXPECT_DOUBLE_EQ(same.precision, 100.0);
  EXPECT_EQ(lcs_f1_sum("the cat sat", "dogs run fast").f1, 0.0);
  const OverlapScore hand = lcs_f1_sum("the cat sat", "the cat");
  EXPECT_NEAR(hand.precision, 100.0, 0.01);
  EXPECT_NEAR(hand.recall, 66.67, 0.01);
  EXPECT_NEAR(hand.f1, 80.0, 0.01);
  EXPECT_THROW(lcs_f1_sum("", "x"), Error);
  EXPECT_THROW(lcs_f1_sum("x", " . "), Error);
}

TEST(Overlap, SummaryLevelUnion) {
  // Reference sentence "a b c d" matches "a b" in one hypothesis sentence and "c d" in another.
  const OverlapScore s = lcs_f1_sum("a b c d.", "a b x. y c d.");
  EXPECT_NEAR(s.recall, 100.0, 1e-9);
  EXPECT_NEAR(s.precision, 400.0 / 6.0, 1e-9);
  // Repeated hypothesis tokens are credited at most as often as they occur.
  const OverlapScore rep = lcs_f1_sum("a a. a a.", "a.");
  EXPECT_NEAR(rep.recall, 25.0, 1e-9);
  EXPECT_NEAR(rep.precision, 100.0, 1e-9);
}

TEST(Overlap, SingleSentenceReducesToLcs) {
  std::mt19937_64 rng(3);
  for (int it = 0; it < 300; ++it) {
    const std::string a = random_sentence(rng, 10), b = random_sentence(rng, 10);
    const auto ta = text::word_tokens(a), tb = text::word_tokens(b);
    const double l = static_cast<double>(lcs_oracle(ta, tb));
    EXPECT_EQ(lcs_length(ta, tb), lcs_oracle(ta, tb));
    const OverlapScore s = lcs_f1_sum(a, b);
    EXPECT_NEAR(s.recall, 100.0 * l / ta.size(), 1e-9);
    EXPECT_NEAR(s.precision, 100.0 * l / tb.size(), 1e-9);
    const OverlapScore swapped = lcs_f1_sum(b, a);
    EXPECT_NEAR(swapped.precision, s.recall, 1e-9);
    EXPECT_NEAR(swapped.recall, s.precision, 1e-9);
    EXPECT_LE(s.f1, 100.0);
  }
}

TEST(Overlap, BoundedOnMultiSentenceTexts) {
  std::mt19937_64 rng(4);
  for (int it = 0; it < 300; ++it) {
    std::string a, b;
    for (std::size_t i = 0, n = 1 + rng() % 3; i < n; ++i) a += random_sentence(rng, 6) + ". ";
    for (std::size_t i = 0, n = 1 + rng() % 3; i < n; ++i) b += random_sentence(rng, 6) + ". ";
    const OverlapScore s = lcs_f1_sum(a, b);
    EXPECT_GE(s.f1, 0.0);
    EXPECT_LE(s.precision, 100.0);
    EXPECT_LE(s.recall, 100.0);
  }
}

TEST(Acc, SeparableCorpus) {
  const auto [texts, labels] = synthetic::separable_meta_reviews(200, 5);
  const AccClassifier c = train_acc_classifier(texts, labels);
  EXPECT_GE(c.metadata()["train_accuracy"].get<double>(), 0.95);
  EXPECT_GE(acc_metric(c, texts, labels), 0.95);
  const AccClassifier again = train_acc_classifier(texts, labels);
  EXPECT_EQ(again.weights(), c.weights());
  EXPECT_EQ(again.bias(), c.bias());
}

TEST(Acc, Errors) {
  EXPECT_THROW(train_acc_classifier({"a", "b"}, {Acceptance::Accept, Acceptance::Accept}), Error);
  EXPECT_THROW(train_acc_classifier({"a"}, {Acceptance::Accept, Acceptance::Reject}), Error);
  const AccClassifier c = cue_classifier();
  EXPECT_THROW(acc_metric(c, {"a"}, {}), Error);
}

TEST(Acc, MetricArithmeticAndOrder) {
  const AccClassifier c = cue_classifier();
  EXPECT_EQ(c.predict("accept"), Acceptance::Accept);
  EXPECT_EQ(c.predict("reject"), Acceptance::Reject);
  std::vector<std::string> gen{"accept", "accept", "reject", "accept"};
  std::vector<Acceptance> gold{Acceptance::Accept, Acceptance::Accept, Acceptance::Reject,
                               Acceptance::Reject};
  EXPECT_DOUBLE_EQ(acc_metric(c, gen, gold), 0.75);
  std::vector<std::size_t> perm{3, 1, 0, 2};
  std::vector<std::string> g2;
  std::vector<Acceptance> l2;
  for (auto i : perm) g2.push_back(gen[i]), l2.push_back(gold[i]);
  EXPECT_DOUBLE_EQ(acc_metric(c, g2, l2), 0.75);
  // A constant "accept" predictor on balanced gold scores 0.5.
  EXPECT_DOUBLE_EQ(acc_metric(c, {"accept", "accept"}, {Acceptance::Accept, Acceptance::Reject}), 0.5);
}

TEST(Acc, SaveLoadRoundTrip) {
  const AccClassifier c = cue_classifier();
  const auto path = std::filesystem::temp_directory_path() / "metarev_cls_test.json";
  c.save(path.string());
  const AccClassifier back = AccClassifier::load(path.string());
  EXPECT_EQ(back.features(), c.features());
  EXPECT_EQ(back.weights(), c.weights());
  EXPECT_EQ(back.probability_accept("clear accept"), c.probability_accept("clear accept"));
  std::filesystem::remove(path);
  EXPECT_THROW(AccClassifier::from_json({{"features", {"b", "a"}}, {"weights", {1, 2}}, {"bias", 0}}), Error);
}

TEST(Reports, EchoModelAndPartitions) {
  const AccClassifier c = cue_classifier();
  const std::vector<Sample> test{
      sample_with("cf", {2, 8}, "clear reject here .", Acceptance::Reject),
      sample_with("calm", {6, 7}, "strong accept .", Acceptance::Accept)};
  const std::vector<std::string> echo{test[0].meta_review, test[1].meta_review};
  const auto reports = evaluate_generations(test, echo, c, true);
  ASSERT_EQ(reports.size(), 3u);
  EXPECT_EQ(reports[0].partition, Partition::Conflict);
  EXPECT_EQ(reports[0].samples.size(), 1u);
  EXPECT_EQ(reports[0].samples[0].paper_id, "cf");
  EXPECT_EQ(reports[1].partition, Partition::NonConflict);
  EXPECT_EQ(reports[2].partition, Partition::All);
  EXPECT_EQ(reports[2].samples.size(), 2u);
  EXPECT_DOUBLE_EQ(reports[2].mean.f1, 100.0);
  EXPECT_DOUBLE_EQ(reports[2].acc, 1.0);
  EXPECT_EQ(evaluate_generations(test, echo, c, false).size(), 1u);
  EXPECT_THROW(evaluate_generations({}, {}, c, true), Error);
  EXPECT_THROW(evaluate_generations(test, {"x"}, c, true), Error);
}

TEST(Reports, AggregatesMatchHandMeans) {
  const AccClassifier c = cue_classifier();
  const std::vector<Sample> test{
      sample_with("p1", {5}, "the cat sat", Acceptance::Accept),
      sample_with("p2", {5}, "the cat sat", Acceptance::Reject),
      sample_with("p3", {5}, "the cat sat", Acceptance::Reject)};
  const std::vector<std::string> gens{"the cat sat", "dogs run", "the cat"};
  const auto reports = evaluate_generations(test, gens, c, false);
  ASSERT_EQ(reports.size(), 1u);
  const EvalReport& r = reports[0];
  EXPECT_NEAR(r.mean.precision, (100.0 + 0.0 + 100.0) / 3.0, 1e-9);
  EXPECT_NEAR(r.mean.recall, (100.0 + 0.0 + 200.0 / 3.0) / 3.0, 1e-9);
  EXPECT_NEAR(r.mean.f1, (100.0 + 0.0 + 80.0) / 3.0, 1e-9);
  const std::string csv = report_csv(reports);
  EXPECT_NE(csv.find("aggregate,all,,3,66.6667,55.5556,60.0000"), std::string::npos) << csv;
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "scope,partition,paper_id,n,rougeLsum_p,rougeLsum_r,rougeLsum_f1,acc_pred,acc_gold,acc,bertscore,unieval");
  const auto j = report_json(reports);
  EXPECT_EQ(j[0]["n"], 3);
  EXPECT_TRUE(j[0]["bertscore"].is_null());
  // Empty generations score zero overlap instead of failing.
  const auto empty = evaluate_generations(test, {"", "", ""}, c, false);
  EXPECT_EQ(empty[0].mean.f1, 0.0);
}
