#include "metarev/synthetic.hpp"

#include <algorithm>
#include <array>
#include <random>

namespace metarev::synthetic {

using nlohmann::json;

namespace {

constexpr std::array<const char*, 20> kTopics = {
    "graph networks",      "policy gradients",    "contrastive learning", "sparse attention",
    "federated training",  "neural compression",  "meta learning",        "causal discovery",
    "speech synthesis",    "protein folding",     "object detection",     "program synthesis",
    "knowledge distillation", "adversarial robustness", "image segmentation", "topic models",
    "continual learning",  "bayesian optimization", "question answering", "neural rendering",
};

constexpr std::array<const char*, 6> kMethods = {
    "a hierarchical model", "a simple regularizer", "a new objective",
    "an efficient sampler", "a modular architecture", "a theoretical framework",
};

constexpr std::array<const char*, 5> kDatasets = {"imagenet", "cifar", "squad", "wmt", "mujoco"};

template <std::size_t N>
const char* pick(const std::array<const char*, N>& xs, std::mt19937_64& rng) {
  return xs[std::uniform_int_distribution<std::size_t>(0, N - 1)(rng)];
}

std::string review_text(int rating, const std::string& topic, std::mt19937_64& rng) {
  static constexpr std::array<const char*, 4> kPositive = {
      "the method is novel and the experiments are convincing.",
      "the paper is clearly written and the results are strong.",
      "i appreciate the thorough ablations.",
      "the contribution is significant for the community.",
  };
  static constexpr std::array<const char*, 4> kNegative = {
      "the novelty is limited and the baselines are weak.",
      "the experiments are small and not convincing.",
      "several claims are not supported by evidence.",
      "the writing is unclear in the method section.",
  };
  std::string s = "this paper studies " + topic + ". ";
  if (rating >= 6) {
    s += pick(kPositive, rng);
    s += " ";
    s += pick(kPositive, rng);
  } else {
    s += pick(kNegative, rng);
    s += " ";
    s += pick(kNegative, rng);
  }
  return s;
}

}  // namespace

json openreview_dump(std::size_t n_forums, std::uint64_t seed, bool orphan_forum) {
  std::mt19937_64 rng(seed);
  json notes = json::array();
  const std::size_t total = n_forums + (orphan_forum ? 1 : 0);
  for (std::size_t f = 0; f < total; ++f) {
    const std::string forum = "paper" + std::to_string(f);
    const std::string venue = f % 2 ? "ICLR.cc/2022/Conference" : "NeurIPS.cc/2021/Conference";
    const std::string topic = kTopics[f % kTopics.size()];
    notes.push_back({{"id", forum},
                     {"forum", forum},
                     {"replyto", nullptr},
                     {"invitation", venue + "/-/Blind_Submission"},
                     {"signatures", {venue}},
                     {"content",
                      {{"title", "on " + topic},
                       {"abstract", std::string("we propose ") + pick(kMethods, rng) + " for " +
                                        topic + " and report gains on " + pick(kDatasets, rng) +
                                        "."}}}});
    const int n_reviews = std::uniform_int_distribution<int>(2, 4)(rng);
    int rating_sum = 0;
    std::vector<int> ratings;
    for (int r = 0; r < n_reviews; ++r) {
      const int rating = std::uniform_int_distribution<int>(1, 10)(rng);
      const int confidence = std::uniform_int_distribution<int>(1, 5)(rng);
      ratings.push_back(rating);
      rating_sum += rating;
      const std::string rid = forum + "_r" + std::to_string(r);
      notes.push_back({{"id", rid},
                       {"forum", forum},
                       {"replyto", forum},
                       {"invitation", venue + "/-/Official_Review"},
                       {"signatures", {venue + "/AnonReviewer" + std::to_string(r)}},
                       {"content",
                        {{"review", review_text(rating, topic, rng)},
                         {"rating", std::to_string(rating) + ": score"},
                         {"confidence", std::to_string(confidence) + ": level"}}}});
      if (std::uniform_int_distribution<int>(0, 1)(rng)) {
        const std::string aid = rid + "_a";
        notes.push_back({{"id", aid},
                         {"forum", forum},
                         {"replyto", rid},
                         {"invitation", venue + "/-/Official_Comment"},
                         {"signatures", {venue + "/Paper" + std::to_string(f) + "/Authors"}},
                         {"content", {{"comment", "we thank the reviewer and added experiments on " +
                                                      topic + "."}}}});
        if (std::uniform_int_distribution<int>(0, 1)(rng))
          notes.push_back({{"id", aid + "_f"},
                           {"forum", forum},
                           {"replyto", aid},
                           {"invitation", venue + "/-/Official_Comment"},
                           {"signatures", {venue + "/AnonReviewer" + std::to_string(r)}},
                           {"content", {{"comment", "thanks, the response addresses my concerns."}}}});
      }
    }
    if (f % 5 == 4)
      notes.push_back({{"id", forum + "_pub"},
                       {"forum", forum},
                       {"replyto", forum},
                       {"invitation", venue + "/-/Public_Comment"},
                       {"signatures", {"~Some_Reader1"}},
                       {"content", {{"comment", "how does this relate to prior work on " + topic + "?"}}}});
    if (f >= n_forums) continue;  // the orphan forum gets no decision
    const bool accept = rating_sum >= 6 * n_reviews;
    const int spread = *std::max_element(ratings.begin(), ratings.end()) -
                       *std::min_element(ratings.begin(), ratings.end());
    std::string meta = "this paper proposes a method for " + topic + ". ";
    meta += spread >= 4 ? "the reviewers disagree about the contribution. "
                        : "the reviewers largely agree in their assessment. ";
    meta += accept ? "the results are convincing and i recommend acceptance."
                   : "the concerns remain and i recommend rejection.";
    notes.push_back({{"id", forum + "_decision"},
                     {"forum", forum},
                     {"replyto", forum},
                     {"invitation", venue + "/-/Decision"},
                     {"signatures", {venue + "/Program_Chairs"}},
                     {"content",
                      {{"decision", accept ? "Accept (Poster)" : "Reject"}, {"comment", meta}}}});
  }
  return {{"notes", notes}};
}

std::vector<Sample> toy_samples(std::size_t n, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::vector<Sample> out;
  for (std::size_t i = 0; i < n; ++i) {
    const std::string topic = kTopics[i % kTopics.size()];
    Sample s;
    s.paper_id = "toy" + std::to_string(i);
    s.venue = "toy";
    const int rating = std::uniform_int_distribution<int>(1, 10)(rng);
    const int confidence = std::uniform_int_distribution<int>(1, 5)(rng);
    const bool accept = rating >= 6;
    s.acceptance = accept ? Acceptance::Accept : Acceptance::Reject;
    s.documents.push_back({"abs", std::nullopt, DocType::PaperAbstract,
                           "we study " + topic + " with " + pick(kMethods, rng) + ".",
                           std::nullopt, std::nullopt});
    s.documents.push_back({"rev", std::nullopt, DocType::OfficialReview,
                           std::string("the work on ") + topic +
                               (accept ? " is strong and clear." : " is weak and unclear."),
                           rating, confidence});
    s.documents.push_back({"resp", std::string("rev"), DocType::AuthorResponse,
                           "we clarify the " + topic + " results.", std::nullopt, std::nullopt});
    s.meta_review = "a paper on " + topic + (accept ? " ; accept ." : " ; reject .");
    out.push_back(std::move(s));
  }
  return out;
}

std::pair<std::vector<std::string>, std::vector<Acceptance>> separable_meta_reviews(
    std::size_t n, std::uint64_t seed) {
  static constexpr std::array<const char*, 4> kAcceptCues = {
      "recommend acceptance", "strong contribution", "convincing results", "clear accept"};
  static constexpr std::array<const char*, 4> kRejectCues = {
      "recommend rejection", "limited novelty", "unconvincing results", "clear reject"};
  static constexpr std::array<const char*, 6> kFiller = {
      "the reviewers discussed the paper", "the authors responded in detail",
      "the rebuttal was considered", "the area chair read the paper",
      "several points were raised", "the discussion was active"};
  std::mt19937_64 rng(seed);
  std::pair<std::vector<std::string>, std::vector<Acceptance>> out;
  for (std::size_t i = 0; i < n; ++i) {
    const bool accept = i % 2 == 0;
    std::string t = std::string(pick(kFiller, rng)) + ". " + pick(kFiller, rng) + ". ";
    t += accept ? pick(kAcceptCues, rng) : pick(kRejectCues, rng);
    t += " for this work on ";
    t += kTopics[std::uniform_int_distribution<std::size_t>(0, kTopics.size() - 1)(rng)];
    t += ".";
    out.first.push_back(std::move(t));
    out.second.push_back(accept ? Acceptance::Accept : Acceptance::Reject);
  }
  return out;
}

}  // namespace metarev::synthetic
