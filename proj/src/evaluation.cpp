#include "metarev/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include "metarev/corpus.hpp"
#include "metarev/error.hpp"
#include "metarev/text.hpp"

namespace metarev {

using nlohmann::json;

namespace {

std::vector<std::vector<std::string>> sentence_tokens(const std::string& s) {
  std::vector<std::vector<std::string>> out;
  for (const auto& sent : text::split_sentences(s)) {
    auto toks = text::word_tokens(sent);
    if (!toks.empty()) out.push_back(std::move(toks));
  }
  return out;
}

// Indices into `a` that take part in one LCS of (a, b).
std::vector<std::size_t> lcs_indices(const std::vector<std::string>& a,
                                     const std::vector<std::string>& b) {
  const std::size_t n = a.size(), m = b.size();
  std::vector<std::vector<std::size_t>> t(n + 1, std::vector<std::size_t>(m + 1, 0));
  for (std::size_t i = 1; i <= n; ++i)
    for (std::size_t j = 1; j <= m; ++j)
      t[i][j] = a[i - 1] == b[j - 1] ? t[i - 1][j - 1] + 1 : std::max(t[i - 1][j], t[i][j - 1]);
  std::vector<std::size_t> idx;
  std::size_t i = n, j = m;
  while (i > 0 && j > 0) {
    if (a[i - 1] == b[j - 1]) {
      idx.push_back(i - 1);
      --i;
      --j;
    } else if (t[i - 1][j] >= t[i][j - 1]) {
      --i;
    } else {
      --j;
    }
  }
  std::reverse(idx.begin(), idx.end());
  return idx;
}

double harmonic(double p, double r) { return p + r == 0.0 ? 0.0 : 2.0 * p * r / (p + r); }

}  // namespace

std::size_t lcs_length(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  return lcs_indices(a, b).size();
}

OverlapScore lcs_f1_sum(const std::string& reference, const std::string& hypothesis) {
  const auto ref = sentence_tokens(reference);
  const auto hyp = sentence_tokens(hypothesis);
  if (ref.empty() || hyp.empty()) throw Error(Errc::EmptyText, "reference or hypothesis is empty");
  std::map<std::string, std::size_t> ref_left, hyp_left;
  std::size_t ref_len = 0, hyp_len = 0;
  for (const auto& s : ref)
    for (const auto& t : s) ++ref_left[t], ++ref_len;
  for (const auto& s : hyp)
    for (const auto& t : s) ++hyp_left[t], ++hyp_len;
  std::size_t hits = 0;
  for (const auto& r : ref) {
    std::set<std::size_t> uni;
    for (const auto& h : hyp)
      for (std::size_t i : lcs_indices(r, h)) uni.insert(i);
    for (std::size_t i : uni) {
      const std::string& tok = r[i];
      if (ref_left[tok] > 0 && hyp_left[tok] > 0) {
        --ref_left[tok];
        --hyp_left[tok];
        ++hits;
      }
    }
  }
  OverlapScore s;
  s.precision = 100.0 * static_cast<double>(hits) / static_cast<double>(hyp_len);
  s.recall = 100.0 * static_cast<double>(hits) / static_cast<double>(ref_len);
  s.f1 = harmonic(s.precision, s.recall);
  return s;
}

// ---------------------------------------------------------------------------

std::vector<std::string> ngram_features(const std::string& text_in) {
  const auto words = text::word_tokens(text_in);
  std::set<std::string> feats;
  for (std::size_t i = 0; i < words.size(); ++i) {
    feats.insert("u:" + words[i]);
    if (i + 1 < words.size()) feats.insert("b:" + words[i] + " " + words[i + 1]);
  }
  return {feats.begin(), feats.end()};
}

std::vector<std::size_t> AccClassifier::active_features(const std::string& text_in) const {
  std::vector<std::size_t> idx;
  for (const auto& f : ngram_features(text_in)) {
    auto it = std::lower_bound(features_.begin(), features_.end(), f);
    if (it != features_.end() && *it == f)
      idx.push_back(static_cast<std::size_t>(it - features_.begin()));
  }
  return idx;
}

double AccClassifier::probability_accept(const std::string& text_in) const {
  double z = bias_;
  for (std::size_t i : active_features(text_in)) z += weights_[i];
  return 1.0 / (1.0 + std::exp(-z));
}

Acceptance AccClassifier::predict(const std::string& text_in) const {
  return probability_accept(text_in) >= 0.5 ? Acceptance::Accept : Acceptance::Reject;
}

json AccClassifier::to_json() const {
  return {{"features", features_}, {"weights", weights_}, {"bias", bias_}, {"metadata", metadata_}};
}

AccClassifier AccClassifier::from_json(const json& j) {
  AccClassifier c;
  try {
    c.features_ = j.at("features").get<std::vector<std::string>>();
    c.weights_ = j.at("weights").get<std::vector<double>>();
    c.bias_ = j.at("bias").get<double>();
    c.metadata_ = j.value("metadata", json::object());
  } catch (const json::exception& e) {
    throw Error(Errc::MalformedRecord, std::string("classifier: ") + e.what());
  }
  if (c.features_.size() != c.weights_.size() ||
      !std::is_sorted(c.features_.begin(), c.features_.end()))
    throw Error(Errc::MalformedRecord, "classifier features/weights inconsistent");
  return c;
}

void AccClassifier::save(const std::string& path) const {
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << to_json().dump() << '\n';
}

AccClassifier AccClassifier::load(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  try {
    return from_json(json::parse(in));
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedRecord, path + ": " + e.what());
  }
}

struct AccTrainer {
  static AccClassifier train(const std::vector<std::string>& texts,
                             const std::vector<Acceptance>& labels, const AccTrainOptions& opt) {
    if (texts.size() != labels.size())
      throw Error(Errc::LengthMismatch, "one label per meta-review expected");
    const bool has_accept = std::count(labels.begin(), labels.end(), Acceptance::Accept) > 0;
    const bool has_reject = std::count(labels.begin(), labels.end(), Acceptance::Reject) > 0;
    if (!has_accept || !has_reject)
      throw Error(Errc::SingleClassCorpus, "classifier training needs both labels");

    AccClassifier c;
    std::set<std::string> all;
    std::vector<std::vector<std::string>> per_text;
    for (const auto& t : texts) {
      per_text.push_back(ngram_features(t));
      all.insert(per_text.back().begin(), per_text.back().end());
    }
    c.features_.assign(all.begin(), all.end());
    c.weights_.assign(c.features_.size(), 0.0);
    std::vector<std::vector<std::size_t>> active;
    for (const auto& t : texts) active.push_back(c.active_features(t));

    std::vector<std::size_t> order(texts.size());
    std::iota(order.begin(), order.end(), 0);
    std::mt19937_64 rng(opt.seed);
    for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
      std::shuffle(order.begin(), order.end(), rng);
      for (std::size_t i : order) {
        double z = c.bias_;
        for (std::size_t f : active[i]) z += c.weights_[f];
        const double p = 1.0 / (1.0 + std::exp(-z));
        const double err = p - (labels[i] == Acceptance::Accept ? 1.0 : 0.0);
        for (std::size_t f : active[i])
          c.weights_[f] -= opt.learning_rate * (err + opt.l2 * c.weights_[f]);
        c.bias_ -= opt.learning_rate * err;
      }
    }
    std::size_t correct = 0;
    for (std::size_t i = 0; i < texts.size(); ++i) correct += c.predict(texts[i]) == labels[i];
    c.metadata_ = {{"seed", opt.seed},
                   {"epochs", opt.epochs},
                   {"learning_rate", opt.learning_rate},
                   {"l2", opt.l2},
                   {"n_train", texts.size()},
                   {"train_accuracy", static_cast<double>(correct) / static_cast<double>(texts.size())}};
    return c;
  }
};

AccClassifier train_acc_classifier(const std::vector<std::string>& meta_reviews,
                                   const std::vector<Acceptance>& labels,
                                   const AccTrainOptions& options) {
  return AccTrainer::train(meta_reviews, labels, options);
}

double acc_metric(const AccClassifier& classifier, const std::vector<std::string>& generated,
                  const std::vector<Acceptance>& gold) {
  if (generated.size() != gold.size())
    throw Error(Errc::LengthMismatch, "generated and gold lists differ in length");
  if (generated.empty()) throw Error(Errc::EmptyCorpus, "nothing to score");
  std::size_t hits = 0;
  for (std::size_t i = 0; i < generated.size(); ++i) hits += classifier.predict(generated[i]) == gold[i];
  return static_cast<double>(hits) / static_cast<double>(generated.size());
}

std::string_view partition_name(Partition p) noexcept {
  switch (p) {
    case Partition::All: return "all";
    case Partition::Conflict: return "CF";
    case Partition::NonConflict: return "Non-CF";
  }
  return "all";
}

namespace {

EvalReport build_report(Partition part, std::vector<SampleEval> rows) {
  EvalReport r;
  r.partition = part;
  r.samples = std::move(rows);
  const double n = static_cast<double>(r.samples.size());
  std::size_t hits = 0;
  for (const auto& s : r.samples) {
    r.mean.precision += s.overlap.precision / n;
    r.mean.recall += s.overlap.recall / n;
    r.mean.f1 += s.overlap.f1 / n;
    hits += s.predicted == s.gold;
  }
  r.acc = static_cast<double>(hits) / n;
  return r;
}

}  // namespace

std::vector<EvalReport> evaluate_generations(const std::vector<Sample>& test,
                                             const std::vector<std::string>& generations,
                                             const AccClassifier& classifier,
                                             bool partition_by_conflict) {
  if (test.empty()) throw Error(Errc::EmptyCorpus, "empty test set");
  if (test.size() != generations.size())
    throw Error(Errc::LengthMismatch, "one generation per test sample expected");
  std::vector<SampleEval> all, cf, non_cf;
  for (std::size_t i = 0; i < test.size(); ++i) {
    SampleEval e;
    e.paper_id = test[i].paper_id;
    e.gold = test[i].acceptance;
    e.predicted = classifier.predict(generations[i]);
    // An empty generation shares nothing with the reference.
    if (!text::word_tokens(generations[i]).empty())
      e.overlap = lcs_f1_sum(test[i].meta_review, generations[i]);
    (detect_conflict(test[i]).is_cf ? cf : non_cf).push_back(e);
    all.push_back(std::move(e));
  }
  std::vector<EvalReport> out;
  if (partition_by_conflict) {
    if (!cf.empty()) out.push_back(build_report(Partition::Conflict, std::move(cf)));
    if (!non_cf.empty()) out.push_back(build_report(Partition::NonConflict, std::move(non_cf)));
  }
  out.push_back(build_report(Partition::All, std::move(all)));
  return out;
}

std::vector<std::string> generate_all(const Checkpoint& ckpt, const std::vector<Sample>& test) {
  std::vector<std::string> out;
  const auto& mc = ckpt.params.config;
  for (const Sample& s : test) {
    const EncoderInput enc(assemble_input(s, ckpt.vocab, mc.max_in), build_all_relations(s));
    const auto ids = beam_generate(enc, ckpt.params, ckpt.config.beam_size,
                                   ckpt.config.length_penalty, mc.max_out);
    out.push_back(ckpt.vocab.decode(ids));
  }
  return out;
}

std::vector<EvalReport> evaluate_run(const Checkpoint& ckpt, const std::vector<Sample>& test,
                                     const AccClassifier& classifier, bool partition_by_conflict) {
  if (test.empty()) throw Error(Errc::EmptyCorpus, "empty test set");
  return evaluate_generations(test, generate_all(ckpt, test), classifier, partition_by_conflict);
}

std::string report_csv(const std::vector<EvalReport>& reports) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(4);
  os << "scope,partition,paper_id,n,rougeLsum_p,rougeLsum_r,rougeLsum_f1,acc_pred,acc_gold,acc,"
        "bertscore,unieval\n";
  auto label = [](Acceptance a) { return a == Acceptance::Accept ? "accept" : "reject"; };
  for (const auto& r : reports) {
    for (const auto& s : r.samples) {
      std::string id = s.paper_id;
      if (id.find_first_of(",\"\n") != std::string::npos) {
        std::string quoted = "\"";
        for (char c : id) quoted += c == '"' ? std::string("\"\"") : std::string(1, c);
        id = quoted + "\"";
      }
      os << "sample," << partition_name(r.partition) << ',' << id << ",1," << s.overlap.precision
         << ',' << s.overlap.recall << ',' << s.overlap.f1 << ',' << label(s.predicted) << ','
         << label(s.gold) << ",,,\n";
    }
    os << "aggregate," << partition_name(r.partition) << ",," << r.samples.size() << ','
       << r.mean.precision << ',' << r.mean.recall << ',' << r.mean.f1 << ",,," << r.acc << ",,\n";
  }
  return os.str();
}

json report_json(const std::vector<EvalReport>& reports) {
  json out = json::array();
  for (const auto& r : reports) {
    json rows = json::array();
    for (const auto& s : r.samples)
      rows.push_back({{"paper_id", s.paper_id},
                      {"precision", s.overlap.precision},
                      {"recall", s.overlap.recall},
                      {"f1", s.overlap.f1},
                      {"predicted", s.predicted == Acceptance::Accept ? "accept" : "reject"},
                      {"gold", s.gold == Acceptance::Accept ? "accept" : "reject"}});
    out.push_back({{"partition", partition_name(r.partition)},
                   {"n", r.samples.size()},
                   {"rougeLsum", {{"precision", r.mean.precision}, {"recall", r.mean.recall}, {"f1", r.mean.f1}}},
                   {"acc", r.acc},
                   {"bertscore", nullptr},
                   {"unieval", nullptr},
                   {"samples", std::move(rows)}});
  }
  return out;
}

}  // namespace metarev
