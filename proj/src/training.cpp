#include "metarev/training.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <fstream>
#include <memory>
#include <sstream>

#include "metarev/error.hpp"
#include "metarev/relations.hpp"

namespace metarev {

using nlohmann::json;

void TrainConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
    throw Error(Errc::InvalidArgument, "learning_rate must be finite and >= 0");
  if (micro_batch == 0 || grad_accumulation_steps == 0)
    throw Error(Errc::InvalidArgument, "micro_batch and grad_accumulation_steps must be >= 1");
  if (label_smoothing < 0.0 || label_smoothing >= 1.0)
    throw Error(Errc::InvalidArgument, "label_smoothing outside [0, 1)");
  if (beam_size == 0) throw Error(Errc::InvalidArgument, "beam_size must be >= 1");
  weights.validate();
}

TrainConfig train_config_from_json(const json& j) {
  TrainConfig c;
  c.seed = j.value("seed", c.seed);
  c.learning_rate = j.value("learning_rate", c.learning_rate);
  c.warmup_steps = j.value("warmup_steps", c.warmup_steps);
  const std::string sched = j.value("schedule", std::string("linear_decay"));
  if (sched == "constant")
    c.schedule = Schedule::Constant;
  else if (sched == "linear_decay")
    c.schedule = Schedule::LinearDecay;
  else
    throw Error(Errc::InvalidArgument, "schedule must be 'constant' or 'linear_decay'");
  c.micro_batch = j.value("micro_batch", c.micro_batch);
  c.grad_accumulation_steps = j.value("grad_accumulation_steps", c.grad_accumulation_steps);
  if (j.contains("batch_size")) {
    const std::size_t bs = j["batch_size"].get<std::size_t>();
    if (bs % c.grad_accumulation_steps != 0)
      throw Error(Errc::InvalidArgument, "batch_size must be a multiple of grad_accumulation_steps");
    c.micro_batch = bs / c.grad_accumulation_steps;
  }
  c.max_steps = j.value("max_steps", c.max_steps);
  c.label_smoothing = j.value("label_smoothing", c.label_smoothing);
  c.weights = loss_weights_from_json(j);
  c.multitask = j.value("multitask", c.multitask);
  c.model = model_config_from_json(j.contains("model") ? j["model"] : j);
  c.model.max_in = j.value("max_in", c.model.max_in);
  c.model.max_out = j.value("max_out", c.model.max_out);
  c.vocab_limit = j.value("vocab_limit", c.vocab_limit);
  c.beam_size = j.value("beam_size", c.beam_size);
  c.length_penalty = j.value("length_penalty", c.length_penalty);
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  json j = to_json(c.weights);
  j["seed"] = c.seed;
  j["learning_rate"] = c.learning_rate;
  j["warmup_steps"] = c.warmup_steps;
  j["schedule"] = c.schedule == Schedule::Constant ? "constant" : "linear_decay";
  j["micro_batch"] = c.micro_batch;
  j["grad_accumulation_steps"] = c.grad_accumulation_steps;
  j["max_steps"] = c.max_steps;
  j["label_smoothing"] = c.label_smoothing;
  j["multitask"] = c.multitask;
  j["model"] = to_json(c.model);
  j["vocab_limit"] = c.vocab_limit;
  j["beam_size"] = c.beam_size;
  j["length_penalty"] = c.length_penalty;
  return j;
}

TrainConfig load_train_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  try {
    return train_config_from_json(json::parse(in));
  } catch (const json::exception& e) {
    throw Error(Errc::InvalidArgument, path + ": " + e.what());
  }
}

std::uint64_t config_hash(const TrainConfig& c) {
  const std::string s = to_json(c).dump();
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char ch : s) h = (h ^ ch) * 1099511628211ULL;
  return h;
}

double learning_rate_at(const TrainConfig& c, std::size_t step) {
  const double s = static_cast<double>(step);
  if (c.warmup_steps > 0 && step <= c.warmup_steps)
    return c.learning_rate * s / static_cast<double>(c.warmup_steps);
  if (c.schedule == Schedule::Constant) return c.learning_rate;
  if (c.max_steps <= c.warmup_steps) return c.learning_rate;
  const double remaining = static_cast<double>(c.max_steps) - s;
  return c.learning_rate * std::max(0.0, remaining) /
         static_cast<double>(c.max_steps - c.warmup_steps);
}

PreparedSample::PreparedSample(const Sample& s, const Vocab& vocab, std::size_t max_in,
                               std::size_t max_out)
    : encoder(assemble_input(s, vocab, max_in), build_all_relations(s)),
      target(build_decoder_target(s.meta_review, vocab, max_out)),
      aux(build_aux_targets(s)),
      paper_id(s.paper_id) {}

SampleLoss sample_loss(ad::Graph& g, const ModelParams& params, const PreparedSample& sample,
                       const TrainConfig& config, const ForwardOptions& opt) {
  ad::Var enc = encode(g, params, sample.encoder, opt);
  const std::vector<TokenId> prefix(sample.target.begin(), sample.target.end() - 1);
  const std::vector<TokenId> gold(sample.target.begin() + 1, sample.target.end());
  DecoderVars dec = decode(g, params, prefix, enc, opt);
  ad::Var lg = ad::softmax_cross_entropy(
      dec.logits, smoothed_targets(gold, params.config.vocab_size, config.label_smoothing));

  SampleLoss out;
  out.breakdown.components.generation = lg.value()[0];
  std::vector<ad::Var> terms{lg};
  std::vector<double> weights{config.weights.generation};
  if (config.multitask) {
    const auto& in = sample.encoder.input;
    auto cr = predict_confidence_rating(g, params, enc, in.official_review_positions);
    const auto column = [](const std::vector<double>& v) {
      Matrix m(v.size(), 1);
      for (std::size_t i = 0; i < v.size(); ++i) m[i] = v[i];
      return m;
    };
    ad::Var lc = ad::mse(cr.confidence, column(sample.aux.confidence));
    ad::Var lr = ad::mse(cr.rating, column(sample.aux.rating));
    ad::Var lo = ad::softmax_cross_entropy(doc_type_logits(g, params, enc, in.delimiter_indices),
                                           sample.aux.doc_type);
    ad::Var la =
        ad::softmax_cross_entropy(acceptance_logits(g, params, dec.hidden), sample.aux.acceptance);
    out.breakdown.components.confidence = lc.value()[0];
    out.breakdown.components.rating = lr.value()[0];
    out.breakdown.components.doc_type = lo.value()[0];
    out.breakdown.components.acceptance = la.value()[0];
    terms.insert(terms.end(), {lc, lr, lo, la});
    weights.insert(weights.end(), {config.weights.confidence, config.weights.rating,
                                   config.weights.doc_type, config.weights.acceptance});
  }
  out.total = ad::weighted_sum(terms, weights);
  out.breakdown.total = out.total.value()[0];
  if (!std::isfinite(out.breakdown.total)) {
    const auto& c = out.breakdown.components;
    std::ostringstream os;
    os << "sample " << sample.paper_id << ": L_g=" << c.generation << " L_c=" << c.confidence
       << " L_r=" << c.rating << " L_o=" << c.doc_type << " L_a=" << c.acceptance;
    throw Error(Errc::NonFiniteLoss, os.str());
  }
  return out;
}

void adam_update(ModelParams& params, AdamState& state,
                 const std::map<std::string, Matrix>& grads, double lr) {
  ++state.t;
  const double c1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(state.t));
  for (const auto& [name, g] : grads) {
    Matrix& p = params.tensors.at(name);
    auto [mit, m_new] = state.m.try_emplace(name, p.rows(), p.cols());
    auto [vit, v_new] = state.v.try_emplace(name, p.rows(), p.cols());
    Matrix& m = mit->second;
    Matrix& v = vit->second;
    for (std::size_t i = 0; i < p.size(); ++i) {
      m[i] = kAdamBeta1 * m[i] + (1.0 - kAdamBeta1) * g[i];
      v[i] = kAdamBeta2 * v[i] + (1.0 - kAdamBeta2) * g[i] * g[i];
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
  }
}

TrainState init_train_state(const TrainConfig& config) {
  config.validate();
  TrainState st{init_params(config.model, config.seed), {}, std::mt19937_64(config.seed ^ 0x5eedULL), 0};
  return st;
}

namespace {

// Accumulates scale × gradients of each sample into `acc`, in sample order.
LossBreakdown accumulate(const std::vector<const PreparedSample*>& samples,
                         const ModelParams& params, const TrainConfig& config,
                         const ForwardOptions& opt, double scale,
                         std::map<std::string, Matrix>& acc) {
  LossBreakdown sum;
  for (const PreparedSample* s : samples) {
    ad::Graph g;
    SampleLoss loss = sample_loss(g, params, *s, config, opt);
    g.backward(loss.total);
    for (auto& [name, grad] : g.parameter_gradients()) {
      grad *= scale;
      auto it = acc.find(name);
      if (it == acc.end())
        acc.emplace(name, std::move(grad));
      else
        it->second += grad;
    }
    auto& c = sum.components;
    const auto& b = loss.breakdown.components;
    c.generation += b.generation;
    c.confidence += b.confidence;
    c.rating += b.rating;
    c.doc_type += b.doc_type;
    c.acceptance += b.acceptance;
    sum.total += loss.breakdown.total;
  }
  return sum;
}

}  // namespace

LossBreakdown train_step(const std::vector<const PreparedSample*>& batch, TrainState& state,
                         const TrainConfig& config) {
  if (batch.empty()) throw Error(Errc::InvalidArgument, "empty batch");
  const std::size_t k = config.grad_accumulation_steps;
  if (batch.size() % k != 0)
    throw Error(Errc::InvalidArgument, "batch does not split into equal micro-batches");
  const std::size_t mb = batch.size() / k;
  ForwardOptions opt;
  opt.dropout_rate = config.model.dropout_rate;
  opt.rng = &state.rng;

  std::map<std::string, Matrix> grads;
  LossBreakdown total;
  for (std::size_t i = 0; i < k; ++i) {
    std::vector<const PreparedSample*> micro(batch.begin() + i * mb, batch.begin() + (i + 1) * mb);
    LossBreakdown part = accumulate(micro, state.params, config, opt,
                                    1.0 / static_cast<double>(mb * k), grads);
    auto& c = total.components;
    c.generation += part.components.generation;
    c.confidence += part.components.confidence;
    c.rating += part.components.rating;
    c.doc_type += part.components.doc_type;
    c.acceptance += part.components.acceptance;
    total.total += part.total;
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  auto& c = total.components;
  c.generation *= inv;
  c.confidence *= inv;
  c.rating *= inv;
  c.doc_type *= inv;
  c.acceptance *= inv;
  total.total *= inv;

  ++state.step;
  adam_update(state.params, state.optimizer, grads, learning_rate_at(config, state.step));
  return total;
}

std::map<std::string, Matrix> batch_gradients(const std::vector<const PreparedSample*>& batch,
                                              const ModelParams& params,
                                              const TrainConfig& config) {
  std::map<std::string, Matrix> grads;
  accumulate(batch, params, config, ForwardOptions{}, 1.0 / static_cast<double>(batch.size()),
             grads);
  return grads;
}

OverfitReport overfit_probe(const std::vector<Sample>& samples, const Vocab& vocab,
                            const TrainConfig& config) {
  if (samples.empty()) throw Error(Errc::EmptyCorpus, "overfit probe needs samples");
  TrainConfig cfg = config;
  cfg.model.vocab_size = vocab.size();
  cfg.micro_batch = samples.size();
  cfg.grad_accumulation_steps = 1;
  std::vector<std::unique_ptr<PreparedSample>> prepared;
  std::vector<const PreparedSample*> batch;
  for (const Sample& s : samples) {
    prepared.push_back(
        std::make_unique<PreparedSample>(s, vocab, cfg.model.max_in, cfg.model.max_out));
    batch.push_back(prepared.back().get());
  }
  TrainState state = init_train_state(cfg);
  OverfitReport report;
  report.n_samples = samples.size();
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    const LossBreakdown b = train_step(batch, state, cfg);
    const double lg = b.components.generation;
    if (step == 0) report.initial_generation_loss = lg;
    report.generation_loss_history.push_back(lg);
    report.final_generation_loss = lg;
    report.steps = step + 1;
    if (report.threshold_step == 0 && lg < 0.1 * report.initial_generation_loss)
      report.threshold_step = step + 1;
  }
  report.converged = report.final_generation_loss < 0.1 * report.initial_generation_loss;
  for (const auto& p : prepared) {
    auto out = beam_generate(p->encoder, state.params, cfg.beam_size, cfg.length_penalty,
                             cfg.model.max_out);
    if (out == p->target) ++report.exact_matches;
    report.generations.push_back(std::move(out));
  }
  return report;
}

Checkpoint run_training(const std::vector<Sample>& train, const TrainConfig& config,
                        std::ostream* metrics) {
  if (train.empty()) throw Error(Errc::EmptyCorpus, "no training samples");
  Checkpoint ckpt;
  ckpt.vocab = build_vocab(train, config.vocab_limit);
  ckpt.config = config;
  ckpt.config.model.vocab_size = ckpt.vocab.size();
  ckpt.config.validate();
  const TrainConfig& cfg = ckpt.config;

  std::vector<std::unique_ptr<PreparedSample>> prepared;
  for (const Sample& s : train)
    prepared.push_back(
        std::make_unique<PreparedSample>(s, ckpt.vocab, cfg.model.max_in, cfg.model.max_out));

  TrainState state = init_train_state(cfg);
  std::mt19937_64 order_rng(cfg.seed + 1);
  std::vector<std::size_t> order(prepared.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), order_rng);
  std::size_t cursor = 0;

  if (metrics) *metrics << "step,L_g,L_c,L_r,L_o,L_a,total\n";
  LossBreakdown last;
  for (std::size_t step = 0; step < cfg.max_steps; ++step) {
    std::vector<const PreparedSample*> batch;
    while (batch.size() < cfg.batch_size()) {
      if (cursor == order.size()) {
        std::shuffle(order.begin(), order.end(), order_rng);
        cursor = 0;
      }
      batch.push_back(prepared[order[cursor++]].get());
    }
    last = train_step(batch, state, cfg);
    if (metrics) {
      const auto& c = last.components;
      *metrics << state.step << ',' << c.generation << ',' << c.confidence << ',' << c.rating
               << ',' << c.doc_type << ',' << c.acceptance << ',' << last.total << '\n';
    }
  }
  ckpt.step = state.step;
  ckpt.params = std::move(state.params);
  ckpt.optimizer = std::move(state.optimizer);
  ckpt.config_hash = config_hash(cfg);
  const auto& c = last.components;
  ckpt.metrics = {{"L_g", c.generation}, {"L_c", c.confidence}, {"L_r", c.rating},
                  {"L_o", c.doc_type},   {"L_a", c.acceptance}, {"total", last.total}};
  return ckpt;
}

// ---------------------------------------------------------------------------
// Checkpoints

namespace {

json tensors_to_json(const std::map<std::string, Matrix>& tensors) {
  json out = json::object();
  for (const auto& [name, m] : tensors)
    out[name] = {{"rows", m.rows()},
                 {"cols", m.cols()},
                 {"data", std::vector<double>(m.values().begin(), m.values().end())}};
  return out;
}

std::map<std::string, Matrix> tensors_from_json(const json& j) {
  std::map<std::string, Matrix> out;
  for (const auto& [name, t] : j.items()) {
    Matrix m(t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>());
    const auto data = t.at("data").get<std::vector<double>>();
    if (data.size() != m.size())
      throw Error(Errc::CorruptCheckpoint, "tensor '" + name + "' has the wrong element count");
    std::copy(data.begin(), data.end(), m.values().begin());
    out.emplace(name, std::move(m));
  }
  return out;
}

constexpr const char* kCheckpointFormat = "metarev-checkpoint";
constexpr int kCheckpointVersion = 1;

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  json j = {{"format", kCheckpointFormat},
            {"version", kCheckpointVersion},
            {"step", ckpt.step},
            {"config", to_json(ckpt.config)},
            {"config_hash", std::to_string(ckpt.config_hash)},
            {"model_config", to_json(ckpt.params.config)},
            {"vocab", ckpt.vocab.to_text()},
            {"params", tensors_to_json(ckpt.params.tensors)},
            {"optimizer",
             {{"t", ckpt.optimizer.t},
              {"m", tensors_to_json(ckpt.optimizer.m)},
              {"v", tensors_to_json(ckpt.optimizer.v)}}},
            {"metrics", ckpt.metrics}};
  std::ofstream out(path);
  if (!out) throw Error(Errc::Io, "cannot write " + path);
  out << j.dump() << '\n';
  if (!out) throw Error(Errc::Io, "write failed for " + path);
}

Checkpoint load_checkpoint(const std::string& path, const std::optional<ModelConfig>& expected) {
  std::ifstream in(path);
  if (!in) throw Error(Errc::Io, "cannot open " + path);
  Checkpoint c;
  try {
    const json j = json::parse(in);
    if (j.at("format") != kCheckpointFormat || j.at("version") != kCheckpointVersion)
      throw Error(Errc::CorruptCheckpoint, "unknown checkpoint format or version");
    c.step = j.at("step").get<std::size_t>();
    c.config = train_config_from_json(j.at("config"));
    c.config_hash = std::stoull(j.at("config_hash").get<std::string>());
    c.params.config = model_config_from_json(j.at("model_config"));
    c.vocab = Vocab::from_text(j.at("vocab").get<std::string>());
    c.params.tensors = tensors_from_json(j.at("params"));
    c.optimizer.t = j.at("optimizer").at("t").get<std::size_t>();
    c.optimizer.m = tensors_from_json(j.at("optimizer").at("m"));
    c.optimizer.v = tensors_from_json(j.at("optimizer").at("v"));
    c.metrics = j.value("metrics", json::object());
  } catch (const json::exception& e) {
    throw Error(Errc::CorruptCheckpoint, path + ": " + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::CorruptCheckpoint) throw;
    throw Error(Errc::CorruptCheckpoint, path + ": " + e.what());
  } catch (const std::logic_error& e) {
    throw Error(Errc::CorruptCheckpoint, path + ": " + e.what());
  }
  // Shapes must match what the stored config would create.
  const ModelParams reference = init_params(c.params.config, 0);
  for (const auto& [name, m] : reference.tensors) {
    auto it = c.params.tensors.find(name);
    if (it == c.params.tensors.end() || !it->second.same_shape(m))
      throw Error(Errc::CorruptCheckpoint, "parameter '" + name + "' missing or misshapen");
  }
  if (c.params.tensors.size() != reference.tensors.size())
    throw Error(Errc::CorruptCheckpoint, "unexpected parameters in checkpoint");
  if (expected && !(*expected == c.params.config))
    throw Error(Errc::ConfigMismatch, "checkpoint model config differs from the expected one");
  return c;
}

}  // namespace metarev
