// Command-line front end: corpus ingestion, statistics, training, generation
// and evaluation.

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "json.hpp"
#include "metarev/conversation.hpp"
#include "metarev/corpus.hpp"
#include "metarev/error.hpp"
#include "metarev/evaluation.hpp"
#include "metarev/gradcheck.hpp"
#include "metarev/relations.hpp"
#include "metarev/synthetic.hpp"
#include "metarev/training.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace metarev;

namespace {

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw Error(Errc::MalformedRecord, path + ": " + e.what());
  }
}

void write_text(const std::string& path, const std::string& body) {
  if (path.empty() || path == "-") {
    std::cout << body;
    return;
  }
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << body;
}

std::string stats_csv(const CorpusStats& s, const std::array<double, 3>& novel) {
  std::ostringstream os;
  os << std::setprecision(6);
  os << "metric,value\n";
  const json j = to_json(s);
  for (const auto& [k, v] : j.items()) os << k << ',' << v.dump() << '\n';
  os << "novel_1gram_pct," << novel[0] << "\nnovel_2gram_pct," << novel[1]
     << "\nnovel_3gram_pct," << novel[2] << '\n';
  return os.str();
}

// The tiny configuration used for gradient checks.
TrainConfig tiny_config() {
  TrainConfig c;
  c.model.d_model = 8;
  c.model.d_k = 4;
  c.model.n_heads = 2;
  c.model.n_enc_layers = 1;
  c.model.n_dec_layers = 1;
  c.model.ffn_dim = 16;
  c.model.max_in = 32;
  c.model.max_out = 12;
  c.model.dropout_rate = 0.0;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Structure-aware meta-review generation toolkit"};
  app.require_subcommand(1);

  // synth ---------------------------------------------------------------
  auto* synth = app.add_subcommand("synth", "Write a synthetic OpenReview-style notes dump");
  std::string synth_out;
  std::size_t synth_forums = 20;
  std::uint64_t synth_seed = 2024;
  synth->add_option("--out", synth_out, "Output JSON file")->required();
  synth->add_option("--forums", synth_forums, "Number of papers with a decision");
  synth->add_option("--seed", synth_seed);

  // ingest --------------------------------------------------------------
  auto* ingest = app.add_subcommand("ingest", "Convert a notes dump into JSON-lines samples");
  std::string ingest_dump, ingest_out, ingest_split_dir;
  std::uint64_t ingest_seed = 1;
  ingest->add_option("--dump", ingest_dump, "OpenReview-style notes JSON")->required();
  ingest->add_option("--out", ingest_out, "Output JSON-lines file")->required();
  ingest->add_option("--split-dir", ingest_split_dir,
                     "Also write train/validation/test.jsonl (8:1:1) here");
  ingest->add_option("--seed", ingest_seed, "Split seed");

  // stats ---------------------------------------------------------------
  auto* stats = app.add_subcommand("stats", "Corpus statistics and abstractiveness");
  std::string stats_data, stats_report = "json", stats_out;
  stats->add_option("--data", stats_data)->required();
  stats->add_option("--report", stats_report)->check(CLI::IsMember({"csv", "json"}));
  stats->add_option("--out", stats_out, "Output file (stdout by default)");

  // conflicts -----------------------------------------------------------
  auto* conflicts = app.add_subcommand("conflicts", "Per-sample conflict labels as CSV");
  std::string conflicts_data;
  conflicts->add_option("--data", conflicts_data)->required();

  // relations -----------------------------------------------------------
  auto* relations = app.add_subcommand("relations", "Print one relation matrix as a 0/1 grid");
  std::string rel_sample, rel_kind;
  std::size_t rel_index = 0;
  relations->add_option("--sample", rel_sample, "JSON-lines file")->required();
  relations->add_option("--kind", rel_kind, "ancestor1|ancestor_all|descendant1|descendant_all|"
                                            "siblings|document_self|same_thread")
      ->required();
  relations->add_option("--index", rel_index, "Record index in the file");

  // train ---------------------------------------------------------------
  auto* train = app.add_subcommand("train", "Train a model");
  std::string train_data, train_config, train_out;
  std::size_t train_steps = 0;
  train->add_option("--data", train_data)->required();
  train->add_option("--config", train_config, "JSON config")->required();
  train->add_option("--out", train_out, "Output directory")->required();
  train->add_option("--max-steps", train_steps, "Override max_steps");

  // generate ------------------------------------------------------------
  auto* generate = app.add_subcommand("generate", "Generate meta-reviews with beam search");
  std::string gen_ckpt, gen_data, gen_out;
  generate->add_option("--checkpoint", gen_ckpt)->required();
  generate->add_option("--data", gen_data)->required();
  generate->add_option("--out", gen_out, "JSON-lines of {paper_id, text}")->required();

  // evaluate ------------------------------------------------------------
  auto* evaluate = app.add_subcommand("evaluate", "Overlap and acceptance-consistency report");
  std::string ev_ckpt, ev_data, ev_report = "csv", ev_out, ev_cls_data, ev_gens, ev_cls_out;
  bool ev_split = false;
  evaluate->add_option("--checkpoint", ev_ckpt)->required();
  evaluate->add_option("--data", ev_data, "Test JSON-lines")->required();
  evaluate->add_flag("--split-conflicts", ev_split, "Report CF and Non-CF separately");
  evaluate->add_option("--report", ev_report)->check(CLI::IsMember({"csv", "json"}));
  evaluate->add_option("--out", ev_out, "Report file (stdout by default)");
  evaluate->add_option("--classifier-data", ev_cls_data,
                       "Training-split JSON-lines whose gold meta-reviews train the classifier")
      ->required();
  evaluate->add_option("--generations", ev_gens, "Reuse generations written by `generate`");
  evaluate->add_option("--classifier-out", ev_cls_out, "Where to store the classifier");

  // grad-check ----------------------------------------------------------
  auto* grad = app.add_subcommand("grad-check", "Finite-difference gradient check (tiny model)");
  std::uint64_t grad_seed = 3;
  grad->add_option("--seed", grad_seed);

  // overfit -------------------------------------------------------------
  auto* overfit = app.add_subcommand("overfit", "Memorization sanity run on toy samples");
  std::string overfit_config;
  overfit->add_option("--config", overfit_config, "JSON config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*synth) {
      write_text(synth_out, synthetic::openreview_dump(synth_forums, synth_seed).dump(1) + "\n");
    } else if (*ingest) {
      const ConversionReport rep = convert_openreview_dump(read_json_file(ingest_dump));
      write_samples_jsonl(ingest_out, rep.samples);
      for (const auto& w : rep.warnings) std::cerr << "warning: " << w << '\n';
      std::cerr << rep.samples.size() << " samples, " << rep.skipped_notes << " notes skipped, "
                << rep.dropped.size() << " forums dropped\n";
      if (!ingest_split_dir.empty()) {
        fs::create_directories(ingest_split_dir);
        const auto split = split_dataset(rep.samples, {0.8, 0.1, 0.1}, ingest_seed);
        write_samples_jsonl((fs::path(ingest_split_dir) / "train.jsonl").string(), split.train);
        write_samples_jsonl((fs::path(ingest_split_dir) / "validation.jsonl").string(),
                            split.validation);
        write_samples_jsonl((fs::path(ingest_split_dir) / "test.jsonl").string(), split.test);
      }
    } else if (*stats) {
      const auto corpus = read_samples_jsonl(stats_data);
      const CorpusStats st = corpus_stats(corpus);
      const auto novel = corpus_novel_ngrams(corpus);
      if (stats_report == "csv") {
        write_text(stats_out, stats_csv(st, novel));
      } else {
        json j = to_json(st);
        j["novel_ngram_pct"] = {novel[0], novel[1], novel[2]};
        write_text(stats_out, j.dump(2) + "\n");
      }
    } else if (*conflicts) {
      std::cout << "paper_id,is_cf,max_pair_diff,n_official_reviews\n";
      for (const Sample& s : read_samples_jsonl(conflicts_data)) {
        const ConflictLabel c = detect_conflict(s);
        std::cout << s.paper_id << ',' << (c.is_cf ? 1 : 0) << ',' << c.max_pair_diff << ','
                  << c.n_official_reviews << '\n';
      }
    } else if (*relations) {
      const auto kind = relation_from_name(rel_kind);
      if (!kind) throw Error(Errc::InvalidArgument, "unknown relation kind '" + rel_kind + "'");
      const auto corpus = read_samples_jsonl(rel_sample);
      if (rel_index >= corpus.size()) throw Error(Errc::InvalidArgument, "--index out of range");
      std::cout << build_relation(corpus[rel_index], *kind).to_grid();
    } else if (*train) {
      TrainConfig cfg = load_train_config(train_config);
      if (train_steps > 0) cfg.max_steps = train_steps;
      fs::create_directories(train_out);
      std::ofstream metrics(fs::path(train_out) / "metrics.csv");
      const Checkpoint ckpt = run_training(read_samples_jsonl(train_data), cfg, &metrics);
      save_checkpoint((fs::path(train_out) / "checkpoint.json").string(), ckpt);
      ckpt.vocab.save((fs::path(train_out) / "vocab.txt").string());
      std::cerr << "trained " << ckpt.step << " steps; final " << ckpt.metrics.dump() << '\n';
    } else if (*generate) {
      const Checkpoint ckpt = load_checkpoint(gen_ckpt);
      const auto data = read_samples_jsonl(gen_data);
      const auto texts = generate_all(ckpt, data);
      std::ostringstream os;
      for (std::size_t i = 0; i < data.size(); ++i)
        os << json{{"paper_id", data[i].paper_id}, {"text", texts[i]}}.dump() << '\n';
      write_text(gen_out, os.str());
    } else if (*evaluate) {
      const auto test = read_samples_jsonl(ev_data);
      if (test.empty()) throw Error(Errc::EmptyCorpus, ev_data + " has no samples");
      const auto cls_train = read_samples_jsonl(ev_cls_data);
      std::vector<std::string> gold_texts;
      std::vector<Acceptance> gold_labels;
      for (const Sample& s : cls_train) {
        gold_texts.push_back(s.meta_review);
        gold_labels.push_back(s.acceptance);
      }
      const AccClassifier cls = train_acc_classifier(gold_texts, gold_labels);
      std::vector<std::string> gens;
      if (!ev_gens.empty()) {
        std::map<std::string, std::string> by_id;
        std::ifstream in(ev_gens);
        if (!in) throw Error(Errc::Io, "cannot open " + ev_gens);
        for (std::string line; std::getline(in, line);)
          if (!line.empty()) {
            const json j = json::parse(line);
            by_id[j.at("paper_id").get<std::string>()] = j.at("text").get<std::string>();
          }
        for (const Sample& s : test) gens.push_back(by_id.at(s.paper_id));
      } else {
        gens = generate_all(load_checkpoint(ev_ckpt), test);
      }
      const auto reports = evaluate_generations(test, gens, cls, ev_split);
      write_text(ev_out, ev_report == "csv" ? report_csv(reports) : report_json(reports).dump(2) + "\n");
      std::string cls_path = ev_cls_out;
      if (cls_path.empty() && !ev_out.empty() && ev_out != "-") cls_path = ev_out + ".classifier.json";
      if (!cls_path.empty()) cls.save(cls_path);
    } else if (*grad) {
      TrainConfig cfg = tiny_config();
      const auto toys = synthetic::toy_samples(2, grad_seed);
      const Vocab vocab = build_vocab(toys, 64);
      cfg.model.vocab_size = vocab.size();
      const ModelParams params = init_params(cfg.model, grad_seed);
      const PreparedSample sample(toys[0], vocab, cfg.model.max_in, cfg.model.max_out);
      const GradCheckResult r = gradient_check(params, sample, cfg);
      std::cout << "group,entries,max_relative_error\n";
      for (const auto& [group, err] : r.max_rel_error)
        std::cout << group << ',' << r.checked.at(group) << ',' << err << '\n';
      std::cout << "worst," << ',' << r.worst << '\n';
      return r.worst <= 1e-4 ? 0 : 1;
    } else if (*overfit) {
      TrainConfig cfg = overfit_config.empty() ? TrainConfig{} : load_train_config(overfit_config);
      const auto toys = synthetic::toy_samples(10, cfg.seed);
      const Vocab vocab = build_vocab(toys, cfg.vocab_limit);
      const OverfitReport r = overfit_probe(toys, vocab, cfg);
      std::cout << json{{"initial_L_g", r.initial_generation_loss},
                        {"final_L_g", r.final_generation_loss},
                        {"steps", r.steps},
                        {"threshold_step", r.threshold_step},
                        {"converged", r.converged},
                        {"exact_matches", r.exact_matches},
                        {"n_samples", r.n_samples}}
                       .dump(2)
                << '\n';
      return r.converged ? 0 : 2;
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
