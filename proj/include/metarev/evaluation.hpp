#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metarev/conversation.hpp"
#include "metarev/training.hpp"

namespace metarev {

struct OverlapScore {
  double precision = 0.0;  // percentages in [0, 100]
  double recall = 0.0;
  double f1 = 0.0;
};

/// Summary-level LCS overlap: per reference sentence, the union of its LCS
/// matches against every hypothesis sentence, with each token credited at
/// most as often as it occurs in both texts. Throws EmptyText.
OverlapScore lcs_f1_sum(const std::string& reference, const std::string& hypothesis);

/// Length of the longest common subsequence of two token lists.
std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b);

/// Logistic regression over unigram and bigram presence features.
class AccClassifier {
 public:
  double probability_accept(const std::string& text) const;
  Acceptance predict(const std::string& text) const;

  nlohmann::json to_json() const;
  static AccClassifier from_json(const nlohmann::json& j);
  void save(const std::string& path) const;
  static AccClassifier load(const std::string& path);

  const std::vector<std::string>& features() const noexcept { return features_; }
  const std::vector<double>& weights() const noexcept { return weights_; }
  double bias() const noexcept { return bias_; }
  const nlohmann::json& metadata() const noexcept { return metadata_; }

  friend struct AccTrainer;

 private:
  std::vector<std::size_t> active_features(const std::string& text) const;

  std::vector<std::string> features_;  // sorted
  std::vector<double> weights_;
  double bias_ = 0.0;
  nlohmann::json metadata_ = nlohmann::json::object();
};

/// "u:<word>" and "b:<w1> <w2>" presence features of a text.
std::vector<std::string> ngram_features(const std::string& text);

struct AccTrainOptions {
  std::uint64_t seed = 7;
  std::size_t epochs = 100;
  double learning_rate = 0.1;
  double l2 = 1e-4;
};

/// SGD on the logistic loss for a fixed number of epochs. Throws
/// SingleClassCorpus when only one label is present.
AccClassifier train_acc_classifier(const std::vector<std::string>& meta_reviews,
                                   const std::vector<Acceptance>& labels,
                                   const AccTrainOptions& options = {});

/// Fraction of texts whose predicted label equals gold. Throws LengthMismatch.
double acc_metric(const AccClassifier& classifier, const std::vector<std::string>& generated,
                  const std::vector<Acceptance>& gold);

enum class Partition { All, Conflict, NonConflict };
std::string_view partition_name(Partition p) noexcept;

struct SampleEval {
  std::string paper_id;
  OverlapScore overlap;
  Acceptance predicted = Acceptance::Reject;
  Acceptance gold = Acceptance::Reject;
};

struct EvalReport {
  Partition partition = Partition::All;
  std::vector<SampleEval> samples;
  OverlapScore mean;
  double acc = 0.0;
};

/// Scores generations against gold meta-reviews. With partition_by_conflict,
/// returns non-empty CF and Non-CF reports followed by the union; otherwise
/// only the union. Throws EmptyCorpus / LengthMismatch.
std::vector<EvalReport> evaluate_generations(const std::vector<Sample>& test,
                                             const std::vector<std::string>& generations,
                                             const AccClassifier& classifier,
                                             bool partition_by_conflict);

/// Generates every test sample with the checkpoint's beam settings.
std::vector<std::string> generate_all(const Checkpoint& ckpt, const std::vector<Sample>& test);

std::vector<EvalReport> evaluate_run(const Checkpoint& ckpt, const std::vector<Sample>& test,
                                     const AccClassifier& classifier, bool partition_by_conflict);

/// One row per sample and one aggregate row per report. The bertscore and
/// unieval columns are left empty for externally computed scores.
std::string report_csv(const std::vector<EvalReport>& reports);
nlohmann::json report_json(const std::vector<EvalReport>& reports);

}  // namespace metarev
