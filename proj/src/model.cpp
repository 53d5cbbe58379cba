#include "metarev/model.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "metarev/error.hpp"

namespace metarev {

using nlohmann::json;

void ModelConfig::validate() const {
  const bool dims_ok = d_model >= 1 && d_k >= 1 && n_heads >= 1 && n_enc_layers >= 1 &&
                       n_dec_layers >= 1 && ffn_dim >= 1 && vocab_size >= 1 && max_in >= 1 &&
                       max_out >= 2;
  if (!dims_ok) throw Error(Errc::InvalidArgument, "model dimensions must be positive");
  if (d_model != n_heads * d_k)
    throw Error(Errc::InvalidArgument, "d_model must equal n_heads x d_k");
  if (dropout_rate < 0.0 || dropout_rate >= 1.0)
    throw Error(Errc::InvalidArgument, "dropout_rate outside [0, 1)");
}

json to_json(const ModelConfig& c) {
  return {{"d_model", c.d_model},       {"d_k", c.d_k},
          {"n_heads", c.n_heads},       {"n_enc_layers", c.n_enc_layers},
          {"n_dec_layers", c.n_dec_layers}, {"ffn_dim", c.ffn_dim},
          {"vocab_size", c.vocab_size}, {"max_in", c.max_in},
          {"max_out", c.max_out},       {"dropout_rate", c.dropout_rate}};
}

ModelConfig model_config_from_json(const json& j) {
  ModelConfig c;
  c.d_model = j.value("d_model", c.d_model);
  c.d_k = j.value("d_k", c.d_k);
  c.n_heads = j.value("n_heads", c.n_heads);
  c.n_enc_layers = j.value("n_enc_layers", c.n_enc_layers);
  c.n_dec_layers = j.value("n_dec_layers", c.n_dec_layers);
  c.ffn_dim = j.value("ffn_dim", c.ffn_dim);
  c.vocab_size = j.value("vocab_size", c.vocab_size);
  c.max_in = j.value("max_in", c.max_in);
  c.max_out = j.value("max_out", c.max_out);
  c.dropout_rate = j.value("dropout_rate", c.dropout_rate);
  return c;
}

const Matrix& ModelParams::at(const std::string& name) const {
  auto it = tensors.find(name);
  if (it == tensors.end()) throw Error(Errc::InvalidArgument, "no parameter '" + name + "'");
  return it->second;
}

std::size_t ModelParams::n_values() const {
  std::size_t n = 0;
  for (const auto& [_, m] : tensors) n += m.size();
  return n;
}

std::uint64_t ModelParams::hash() const {
  std::uint64_t h = 1469598103934665603ULL;
  auto mix = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) h = (h ^ b[i]) * 1099511628211ULL;
  };
  for (const auto& [name, m] : tensors) {
    mix(name.data(), name.size());
    for (double v : m.values()) mix(&v, sizeof v);
  }
  return h;
}

namespace {

enum class Init { Xavier, Embedding, Zero, One, Beta };

struct ParamSpec {
  std::string name;
  std::size_t rows, cols;
  Init init;
};

void attention_specs(std::vector<ParamSpec>& out, const std::string& prefix,
                     const ModelConfig& c, bool with_beta) {
  for (std::size_t h = 0; h < c.n_heads; ++h) {
    const std::string p = prefix + ".head." + std::to_string(h);
    out.push_back({p + ".wq", c.d_model, c.d_k, Init::Xavier});
    out.push_back({p + ".wk", c.d_model, c.d_k, Init::Xavier});
    out.push_back({p + ".wv", c.d_model, c.d_k, Init::Xavier});
    out.push_back({p + ".wo", c.d_k, c.d_model, Init::Xavier});
    if (with_beta) out.push_back({p + ".beta", 1, kNumRelations, Init::Beta});
  }
}

void norm_specs(std::vector<ParamSpec>& out, const std::string& p, std::size_t d) {
  out.push_back({p + ".gain", 1, d, Init::One});
  out.push_back({p + ".bias", 1, d, Init::Zero});
}

void ffn_specs(std::vector<ParamSpec>& out, const std::string& p, const ModelConfig& c) {
  out.push_back({p + ".w1", c.d_model, c.ffn_dim, Init::Xavier});
  out.push_back({p + ".b1", 1, c.ffn_dim, Init::Zero});
  out.push_back({p + ".w2", c.ffn_dim, c.d_model, Init::Xavier});
  out.push_back({p + ".b2", 1, c.d_model, Init::Zero});
}

void mlp_specs(std::vector<ParamSpec>& out, const std::string& p, std::size_t d,
               std::size_t n_out) {
  out.push_back({p + ".w1", d, d, Init::Xavier});
  out.push_back({p + ".b1", 1, d, Init::Zero});
  out.push_back({p + ".w2", d, n_out, Init::Xavier});
  out.push_back({p + ".b2", 1, n_out, Init::Zero});
}

std::vector<ParamSpec> param_specs(const ModelConfig& c) {
  std::vector<ParamSpec> s;
  s.push_back({"embed.token", c.vocab_size, c.d_model, Init::Embedding});
  s.push_back({"embed.enc_pos", c.max_in, c.d_model, Init::Embedding});
  s.push_back({"embed.dec_pos", c.max_out, c.d_model, Init::Embedding});
  for (std::size_t l = 0; l < c.n_enc_layers; ++l) {
    const std::string p = "enc." + std::to_string(l);
    attention_specs(s, p + ".attn", c, true);
    norm_specs(s, p + ".ln1", c.d_model);
    ffn_specs(s, p + ".ffn", c);
    norm_specs(s, p + ".ln2", c.d_model);
  }
  for (std::size_t l = 0; l < c.n_dec_layers; ++l) {
    const std::string p = "dec." + std::to_string(l);
    attention_specs(s, p + ".self", c, false);
    norm_specs(s, p + ".ln1", c.d_model);
    attention_specs(s, p + ".cross", c, false);
    norm_specs(s, p + ".ln2", c.d_model);
    ffn_specs(s, p + ".ffn", c);
    norm_specs(s, p + ".ln3", c.d_model);
  }
  s.push_back({"out.w", c.d_model, c.vocab_size, Init::Xavier});
  s.push_back({"out.b", 1, c.vocab_size, Init::Zero});
  mlp_specs(s, "head.confidence", c.d_model, 1);
  mlp_specs(s, "head.rating", c.d_model, 1);
  mlp_specs(s, "head.doc_type", c.d_model, kNumDocTypes);
  mlp_specs(s, "head.acceptance", c.d_model, 2);
  return s;
}

}  // namespace

ModelParams init_params(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelParams params;
  params.config = config;
  std::mt19937_64 rng(seed);
  for (const ParamSpec& spec : param_specs(config)) {
    Matrix m(spec.rows, spec.cols);
    switch (spec.init) {
      case Init::Xavier: {
        const double a = std::sqrt(6.0 / static_cast<double>(spec.rows + spec.cols));
        std::uniform_real_distribution<double> u(-a, a);
        for (double& v : m.values()) v = u(rng);
        break;
      }
      case Init::Embedding: {
        const double a = std::sqrt(3.0 / static_cast<double>(spec.cols));
        std::uniform_real_distribution<double> u(-a, a);
        for (double& v : m.values()) v = u(rng);
        break;
      }
      case Init::Beta: {
        std::uniform_real_distribution<double> u(0.1, 0.3);
        for (double& v : m.values()) v = u(rng);
        break;
      }
      case Init::One: m.fill(1.0); break;
      case Init::Zero: break;
    }
    params.tensors.emplace(spec.name, std::move(m));
  }
  return params;
}

std::string parameter_group(const std::string& name) {
  auto has = [&name](const char* s) { return name.find(s) != std::string::npos; };
  auto ends = [&name](const char* s) {
    const std::size_t n = std::strlen(s);
    return name.size() >= n && name.compare(name.size() - n, n, s) == 0;
  };
  if (name.rfind("embed.", 0) == 0) return "embeddings";
  if (name.rfind("head.", 0) == 0) return "heads";
  if (name.rfind("out.", 0) == 0) return "output";
  if (ends(".beta")) return "beta";
  if (has(".ffn.")) return "feed_forward";
  if (has(".ln")) return "layer_norm";
  return "attention";
}

EncoderInput::EncoderInput(AssembledInput in, RelationSet rel)
    : input(std::move(in)), relations(std::move(rel)),
      layout(make_block_layout(input.doc_of_token, relations)) {}

namespace {

ad::Var param(ad::Graph& g, const ModelParams& p, const std::string& name) {
  return g.parameter(name, p.at(name));
}

std::vector<std::size_t> iota_ids(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), 0);
  return v;
}

ad::Var embed(ad::Graph& g, const ModelParams& p, const std::vector<TokenId>& ids,
              const char* pos_table, std::size_t max_len) {
  if (ids.size() > max_len)
    throw Error(Errc::ShapeMismatch, "sequence of " + std::to_string(ids.size()) +
                                         " exceeds the positional table (" +
                                         std::to_string(max_len) + ")");
  std::vector<std::size_t> rows;
  rows.reserve(ids.size());
  for (TokenId id : ids) {
    if (id < 0 || static_cast<std::size_t>(id) >= p.config.vocab_size)
      throw Error(Errc::ShapeMismatch, "token id outside the vocabulary");
    rows.push_back(static_cast<std::size_t>(id));
  }
  return ad::add(ad::gather_rows(param(g, p, "embed.token"), rows),
                 ad::gather_rows(param(g, p, pos_table), iota_ids(ids.size())));
}

ad::Var feed_forward(ad::Graph& g, const ModelParams& p, const std::string& prefix, ad::Var x) {
  ad::Var h = ad::relu(ad::add_row(ad::matmul(x, param(g, p, prefix + ".w1")),
                                   param(g, p, prefix + ".b1")));
  return ad::add_row(ad::matmul(h, param(g, p, prefix + ".w2")), param(g, p, prefix + ".b2"));
}

ad::Var norm(ad::Graph& g, const ModelParams& p, const std::string& prefix, ad::Var x) {
  return ad::layer_norm(x, param(g, p, prefix + ".gain"), param(g, p, prefix + ".bias"));
}

// Sum over heads of head_h(x) · Wo_h.
template <typename HeadFn>
ad::Var multi_head(ad::Graph& g, const ModelParams& p, const std::string& prefix, ad::Var x,
                   ad::Var kv_source, HeadFn&& head_attention) {
  ad::Var total{};
  for (std::size_t h = 0; h < p.config.n_heads; ++h) {
    const std::string hp = prefix + ".head." + std::to_string(h);
    ad::Var q = ad::matmul(x, param(g, p, hp + ".wq"));
    ad::Var k = ad::matmul(kv_source, param(g, p, hp + ".wk"));
    ad::Var v = ad::matmul(kv_source, param(g, p, hp + ".wv"));
    ad::Var o = ad::matmul(head_attention(hp, q, k, v), param(g, p, hp + ".wo"));
    total = h == 0 ? o : ad::add(total, o);
  }
  return total;
}

}  // namespace

ad::Var encode(ad::Graph& g, const ModelParams& p, const EncoderInput& enc,
               const ForwardOptions& opt) {
  const auto& ids = enc.input.token_ids;
  if (ids.empty()) throw Error(Errc::ShapeMismatch, "empty encoder input");
  std::vector<TokenMask> masks;
  if (opt.path == AttentionPath::DenseMasked)
    masks = extend_relations(std::vector<RelationMatrix>(enc.relations.begin(), enc.relations.end()),
                             enc.input.doc_of_token);
  ad::Var x = ad::dropout(embed(g, p, ids, "embed.enc_pos", p.config.max_in), opt.dropout_rate,
                          opt.rng);
  for (std::size_t l = 0; l < p.config.n_enc_layers; ++l) {
    const std::string lp = "enc." + std::to_string(l);
    ad::Var a = multi_head(g, p, lp + ".attn", x, x,
                           [&](const std::string& hp, ad::Var q, ad::Var k, ad::Var v) {
                             ad::Var beta = param(g, p, hp + ".beta");
                             if (opt.path == AttentionPath::DenseMasked)
                               return ad::rsattn_dense(q, k, v, beta, masks);
                             return ad::rsattn(q, k, v, beta, enc.layout, enc.relations, opt.stats);
                           });
    x = norm(g, p, lp + ".ln1", ad::add(x, ad::dropout(a, opt.dropout_rate, opt.rng)));
    ad::Var f = feed_forward(g, p, lp + ".ffn", x);
    x = norm(g, p, lp + ".ln2", ad::add(x, ad::dropout(f, opt.dropout_rate, opt.rng)));
  }
  return x;
}

DecoderVars decode(ad::Graph& g, const ModelParams& p, const std::vector<TokenId>& prefix,
                   ad::Var memory, const ForwardOptions& opt) {
  if (prefix.empty() || prefix.front() != Vocab::kBos)
    throw Error(Errc::ShapeMismatch, "decoder prefix must start with <bos>");
  if (memory.value().cols() != p.config.d_model)
    throw Error(Errc::ShapeMismatch, "encoder output width differs from d_model");
  ad::Var x = ad::dropout(embed(g, p, prefix, "embed.dec_pos", p.config.max_out),
                          opt.dropout_rate, opt.rng);
  for (std::size_t l = 0; l < p.config.n_dec_layers; ++l) {
    const std::string lp = "dec." + std::to_string(l);
    ad::Var s = multi_head(g, p, lp + ".self", x, x,
                           [](const std::string&, ad::Var q, ad::Var k, ad::Var v) {
                             return ad::attention(q, k, v, true);
                           });
    x = norm(g, p, lp + ".ln1", ad::add(x, ad::dropout(s, opt.dropout_rate, opt.rng)));
    ad::Var c = multi_head(g, p, lp + ".cross", x, memory,
                           [](const std::string&, ad::Var q, ad::Var k, ad::Var v) {
                             return ad::attention(q, k, v, false);
                           });
    x = norm(g, p, lp + ".ln2", ad::add(x, ad::dropout(c, opt.dropout_rate, opt.rng)));
    ad::Var f = feed_forward(g, p, lp + ".ffn", x);
    x = norm(g, p, lp + ".ln3", ad::add(x, ad::dropout(f, opt.dropout_rate, opt.rng)));
  }
  ad::Var logits = ad::add_row(ad::matmul(x, param(g, p, "out.w")), param(g, p, "out.b"));
  return {x, logits};
}

EncoderOutput encoder_forward(const EncoderInput& enc, const ModelParams& params,
                              AttentionPath path) {
  ad::Graph g(false);
  ForwardOptions opt;
  opt.path = path;
  return {encode(g, params, enc, opt).value()};
}

DecoderOutput decoder_forward(const std::vector<TokenId>& prefix, const EncoderOutput& memory,
                              const ModelParams& params) {
  ad::Graph g(false);
  ad::Var mem = g.constant(memory.hidden);
  DecoderVars d = decode(g, params, prefix, mem);
  return {d.hidden.value(), d.logits.value()};
}

double beam_score(double log_prob, std::size_t generated, double length_penalty) {
  return log_prob / std::pow(static_cast<double>(std::max<std::size_t>(generated, 1)),
                             length_penalty);
}

std::vector<TokenId> beam_search(const NextTokenScorer& scorer, TokenId bos, TokenId eos,
                                 std::size_t beam_size, double length_penalty,
                                 std::size_t max_out) {
  if (beam_size == 0 || max_out < 2)
    throw Error(Errc::InvalidArgument, "beam_size must be >= 1 and max_out >= 2");
  struct Hyp {
    std::vector<TokenId> ids;
    double log_prob;
  };
  struct Candidate {
    double log_prob;
    TokenId token;
    std::size_t parent;
  };
  std::vector<Hyp> alive{{{bos}, 0.0}};
  std::vector<Hyp> finished;
  while (!alive.empty()) {
    std::vector<Candidate> cands;
    for (std::size_t b = 0; b < alive.size(); ++b) {
      const auto lp = scorer(alive[b].ids);
      for (std::size_t t = 0; t < lp.size(); ++t)
        cands.push_back({alive[b].log_prob + lp[t], static_cast<TokenId>(t), b});
    }
    std::sort(cands.begin(), cands.end(), [](const Candidate& a, const Candidate& b) {
      if (a.log_prob != b.log_prob) return a.log_prob > b.log_prob;
      if (a.token != b.token) return a.token < b.token;
      return a.parent < b.parent;
    });
    const bool last = alive.front().ids.size() + 1 >= max_out;
    const std::size_t take = last ? cands.size() : std::min(beam_size, cands.size());
    std::vector<Hyp> next;
    for (std::size_t i = 0; i < take; ++i) {
      Hyp h{alive[cands[i].parent].ids, cands[i].log_prob};
      h.ids.push_back(cands[i].token);
      if (last || cands[i].token == eos)
        finished.push_back(std::move(h));
      else
        next.push_back(std::move(h));
    }
    alive = std::move(next);
  }
  const Hyp* best = nullptr;
  double best_score = 0.0;
  for (const Hyp& h : finished) {
    const double s = beam_score(h.log_prob, h.ids.size() - 1, length_penalty);
    if (!best || s > best_score || (s == best_score && h.ids < best->ids)) {
      best = &h;
      best_score = s;
    }
  }
  return best ? best->ids : std::vector<TokenId>{bos};
}

std::vector<TokenId> beam_generate(const EncoderInput& enc, const ModelParams& params,
                                   std::size_t beam_size, double length_penalty,
                                   std::size_t max_out) {
  const EncoderOutput memory = encoder_forward(enc, params);
  max_out = std::min(max_out, params.config.max_out);
  auto scorer = [&](const std::vector<TokenId>& prefix) {
    const DecoderOutput out = decoder_forward(prefix, memory, params);
    const auto last = out.logits.row(out.logits.rows() - 1);
    double mx = *std::max_element(last.begin(), last.end());
    double sum = 0.0;
    for (double z : last) sum += std::exp(z - mx);
    const double lse = mx + std::log(sum);
    std::vector<double> lp(last.size());
    for (std::size_t i = 0; i < last.size(); ++i) lp[i] = last[i] - lse;
    return lp;
  };
  return beam_search(scorer, Vocab::kBos, Vocab::kEos, beam_size, length_penalty, max_out);
}

}  // namespace metarev
