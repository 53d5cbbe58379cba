#include "metarev/autograd.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>

#include "metarev/error.hpp"

namespace metarev::ad {

namespace {

void require_same_graph(Var a, Var b) {
  if (a.graph != b.graph || a.graph == nullptr)
    throw Error(Errc::InvalidArgument, "vars belong to different graphs");
}

Matrix softmax_rows(const Matrix& logits) {
  Matrix p = logits;
  for (std::size_t r = 0; r < p.rows(); ++r) {
    auto row = p.row(r);
    double mx = -std::numeric_limits<double>::infinity();
    for (double x : row) mx = std::max(mx, x);
    double sum = 0.0;
    for (double& x : row) sum += (x = std::exp(x - mx));
    for (double& x : row) x /= sum;
  }
  return p;
}

RelationWeights as_weights(const Matrix& beta) {
  if (beta.size() != kNumRelations) throw Error(Errc::ShapeMismatch, "beta must have 7 entries");
  RelationWeights w{};
  for (std::size_t j = 0; j < kNumRelations; ++j) w[j] = beta[j];
  return w;
}

}  // namespace

const Matrix& Var::value() const { return graph->value(*this); }

Var Graph::push(Matrix value, std::function<void(Graph&, std::size_t)> back) {
  nodes_.push_back({std::move(value), Matrix(), record_ ? std::move(back) : nullptr});
  return {this, nodes_.size() - 1};
}

Matrix& Graph::grad(std::size_t id) {
  Node& n = nodes_[id];
  if (n.grad.empty()) n.grad = Matrix(n.value.rows(), n.value.cols());
  return n.grad;
}

Var Graph::constant(Matrix value) { return push(std::move(value), nullptr); }

Var Graph::parameter(const std::string& name, const Matrix& value) {
  auto it = params_.find(name);
  if (it != params_.end()) return {this, it->second};
  Var v = push(value, nullptr);
  params_.emplace(name, v.id);
  return v;
}

void Graph::backward(Var loss) {
  if (!record_ || nodes_.empty())
    throw Error(Errc::NoRecordedGraph, "backward() needs a graph built with recording on");
  if (loss.graph != this || value(loss).size() != 1)
    throw Error(Errc::ShapeMismatch, "backward() needs a scalar node of this graph");
  grad(loss.id)[0] = 1.0;
  for (std::size_t i = loss.id + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (n.back && !n.grad.empty()) n.back(*this, i);
  }
}

std::map<std::string, Matrix> Graph::parameter_gradients() const {
  std::map<std::string, Matrix> out;
  for (const auto& [name, id] : params_) {
    const Node& n = nodes_[id];
    out.emplace(name, n.grad.empty() ? Matrix(n.value.rows(), n.value.cols()) : n.grad);
  }
  return out;
}

Var matmul(Var a, Var b) {
  require_same_graph(a, b);
  Graph& g = *a.graph;
  return g.push(metarev::matmul(a.value(), b.value()), [a, b](Graph& g, std::size_t self) {
    const Matrix& up = g.grad(self);
    g.grad(a.id) += matmul_nt(up, g.value(b));
    g.grad(b.id) += matmul_tn(g.value(a), up);
  });
}

Var add(Var a, Var b) {
  require_same_graph(a, b);
  if (!a.value().same_shape(b.value())) throw Error(Errc::ShapeMismatch, "add");
  Matrix out = a.value();
  out += b.value();
  return a.graph->push(std::move(out), [a, b](Graph& g, std::size_t self) {
    const Matrix up = g.grad(self);
    g.grad(a.id) += up;
    g.grad(b.id) += up;
  });
}

Var add_row(Var a, Var row) {
  require_same_graph(a, row);
  const Matrix& r = row.value();
  if (r.rows() != 1 || r.cols() != a.value().cols()) throw Error(Errc::ShapeMismatch, "add_row");
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t j = 0; j < out.cols(); ++j) out(i, j) += r[j];
  return a.graph->push(std::move(out), [a, row](Graph& g, std::size_t self) {
    const Matrix up = g.grad(self);
    g.grad(a.id) += up;
    Matrix& gr = g.grad(row.id);
    for (std::size_t i = 0; i < up.rows(); ++i)
      for (std::size_t j = 0; j < up.cols(); ++j) gr[j] += up(i, j);
  });
}

Var scale(Var a, double s) {
  Matrix out = a.value();
  out *= s;
  return a.graph->push(std::move(out), [a, s](Graph& g, std::size_t self) {
    Matrix up = g.grad(self);
    up *= s;
    g.grad(a.id) += up;
  });
}

Var relu(Var a) {
  Matrix out = a.value();
  for (double& x : out.values()) x = x > 0.0 ? x : 0.0;
  return a.graph->push(std::move(out), [a](Graph& g, std::size_t self) {
    const Matrix up = g.grad(self);
    const Matrix& x = g.value(a);
    Matrix& ga = g.grad(a.id);
    for (std::size_t i = 0; i < up.size(); ++i)
      if (x[i] > 0.0) ga[i] += up[i];
  });
}

Var sigmoid(Var a) {
  Matrix out = a.value();
  for (double& x : out.values()) x = 1.0 / (1.0 + std::exp(-x));
  return a.graph->push(std::move(out), [a](Graph& g, std::size_t self) {
    const Matrix up = g.grad(self);
    const Matrix& y = g.value(Var{&g, self});
    Matrix& ga = g.grad(a.id);
    for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * y[i] * (1.0 - y[i]);
  });
}

Var layer_norm(Var x, Var gain, Var bias, double eps) {
  require_same_graph(x, gain);
  require_same_graph(x, bias);
  const Matrix& in = x.value();
  const std::size_t n = in.cols();
  if (gain.value().size() != n || bias.value().size() != n)
    throw Error(Errc::ShapeMismatch, "layer_norm parameters");
  auto xhat = std::make_shared<Matrix>(in.rows(), n);
  auto inv_std = std::make_shared<std::vector<double>>(in.rows());
  Matrix out(in.rows(), n);
  for (std::size_t r = 0; r < in.rows(); ++r) {
    const auto row = in.row(r);
    double mean = 0.0;
    for (double v : row) mean += v;
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : row) var += (v - mean) * (v - mean);
    var /= static_cast<double>(n);
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)[r] = is;
    for (std::size_t c = 0; c < n; ++c) {
      const double h = (row[c] - mean) * is;
      (*xhat)(r, c) = h;
      out(r, c) = h * gain.value()[c] + bias.value()[c];
    }
  }
  return x.graph->push(std::move(out), [x, gain, bias, xhat, inv_std](Graph& g,
                                                                      std::size_t self) {
    const Matrix up = g.grad(self);
    const Matrix& gm = g.value(gain);
    Matrix& gg = g.grad(gain.id);
    Matrix& gb = g.grad(bias.id);
    Matrix& gx = g.grad(x.id);
    const std::size_t n = up.cols();
    std::vector<double> dh(n);
    for (std::size_t r = 0; r < up.rows(); ++r) {
      double sum_dh = 0.0, sum_dh_h = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        gg[c] += up(r, c) * (*xhat)(r, c);
        gb[c] += up(r, c);
        dh[c] = up(r, c) * gm[c];
        sum_dh += dh[c];
        sum_dh_h += dh[c] * (*xhat)(r, c);
      }
      const double is = (*inv_std)[r];
      for (std::size_t c = 0; c < n; ++c)
        gx(r, c) += is / static_cast<double>(n) *
                    (static_cast<double>(n) * dh[c] - sum_dh - (*xhat)(r, c) * sum_dh_h);
    }
  });
}

Var gather_rows(Var table, const std::vector<std::size_t>& ids) {
  const Matrix& t = table.value();
  Matrix out(ids.size(), t.cols());
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= t.rows()) throw Error(Errc::PositionOutOfBounds, "gather_rows index");
    std::copy(t.row(ids[i]).begin(), t.row(ids[i]).end(), out.row(i).begin());
  }
  return table.graph->push(std::move(out), [table, ids](Graph& g, std::size_t self) {
    const Matrix up = g.grad(self);
    Matrix& gt = g.grad(table.id);
    for (std::size_t i = 0; i < ids.size(); ++i)
      for (std::size_t c = 0; c < up.cols(); ++c) gt(ids[i], c) += up(i, c);
  });
}

Var mean_rows(Var a) {
  const Matrix& m = a.value();
  if (m.rows() == 0) throw Error(Errc::EmptyDecoderOutput, "mean over zero rows");
  Matrix out(1, m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out[c] += m(r, c);
  out *= 1.0 / static_cast<double>(m.rows());
  return a.graph->push(std::move(out), [a](Graph& g, std::size_t self) {
    const Matrix up = g.grad(self);
    Matrix& ga = g.grad(a.id);
    const double inv = 1.0 / static_cast<double>(ga.rows());
    for (std::size_t r = 0; r < ga.rows(); ++r)
      for (std::size_t c = 0; c < ga.cols(); ++c) ga(r, c) += up[c] * inv;
  });
}

Var dropout(Var a, double rate, std::mt19937_64* rng) {
  if (rate <= 0.0 || rng == nullptr) return a;
  const double keep = 1.0 - rate;
  auto mask = std::make_shared<Matrix>(a.value().rows(), a.value().cols());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (double& m : mask->values()) m = u(*rng) < keep ? 1.0 / keep : 0.0;
  Matrix out = a.value();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= (*mask)[i];
  return a.graph->push(std::move(out), [a, mask](Graph& g, std::size_t self) {
    const Matrix up = g.grad(self);
    Matrix& ga = g.grad(a.id);
    for (std::size_t i = 0; i < up.size(); ++i) ga[i] += up[i] * (*mask)[i];
  });
}

Var rsattn(Var q, Var k, Var v, Var beta, const BlockLayout& layout,
           const RelationSet& relations, BlockAttentionStats* stats) {
  auto fwd = std::make_shared<BlockAttentionResult>(block_sparse_attention(
      q.value(), k.value(), v.value(), layout, relations, as_weights(beta.value())));
  if (stats) {
    stats->blocks_computed += fwd->stats.blocks_computed;
    stats->attended_pairs += fwd->stats.attended_pairs;
    stats->workspace_doubles = std::max(stats->workspace_doubles, fwd->stats.workspace_doubles);
  }
  Matrix out = fwd->output;
  // layout and relations outlive the graph by contract (owned by the caller's batch item).
  const BlockLayout* lay = &layout;
  const RelationSet* rel = &relations;
  return q.graph->push(std::move(out), [q, k, v, beta, lay, rel, fwd](Graph& g, std::size_t self) {
    auto grads = block_sparse_attention_backward(g.value(q), g.value(k), g.value(v), *lay, *rel,
                                                 as_weights(g.value(beta)), *fwd, g.grad(self));
    g.grad(q.id) += grads.dq;
    g.grad(k.id) += grads.dk;
    g.grad(v.id) += grads.dv;
    Matrix& gb = g.grad(beta.id);
    for (std::size_t j = 0; j < kNumRelations; ++j) gb[j] += grads.dbeta[j];
  });
}

Var rsattn_dense(Var q, Var k, Var v, Var beta, const std::vector<TokenMask>& masks) {
  Matrix out = rsattn_head(q.value(), k.value(), v.value(), masks, as_weights(beta.value()));
  return q.graph->push(std::move(out), [](Graph&, std::size_t) {
    throw Error(Errc::InvalidArgument, "the dense-masked attention path is forward-only");
  });
}

Var attention(Var q, Var k, Var v, bool causal) {
  auto fwd =
      std::make_shared<DenseAttentionResult>(scaled_dot_attention(q.value(), k.value(), v.value(), causal));
  Matrix out = fwd->output;
  return q.graph->push(std::move(out), [q, k, v, fwd](Graph& g, std::size_t self) {
    auto grads = scaled_dot_attention_backward(g.value(q), g.value(k), g.value(v), *fwd, g.grad(self));
    g.grad(q.id) += grads.dq;
    g.grad(k.id) += grads.dk;
    g.grad(v.id) += grads.dv;
  });
}

Var softmax_cross_entropy(Var logits, const Matrix& targets, double eps) {
  const Matrix& z = logits.value();
  if (!z.same_shape(targets)) throw Error(Errc::ShapeMismatch, "cross-entropy targets");
  auto probs = std::make_shared<Matrix>(softmax_rows(z));
  std::vector<std::size_t> active;
  for (std::size_t r = 0; r < targets.rows(); ++r) {
    double s = 0.0;
    for (double t : targets.row(r)) s += t;
    if (s != 0.0) active.push_back(r);
  }
  double loss = 0.0;
  for (std::size_t r : active)
    for (std::size_t c = 0; c < z.cols(); ++c)
      if (targets(r, c) != 0.0) loss -= targets(r, c) * std::log(std::max((*probs)(r, c), eps));
  const double inv = active.empty() ? 0.0 : 1.0 / static_cast<double>(active.size());
  Matrix out(1, 1, loss * inv);
  return logits.graph->push(std::move(out), [logits, targets, probs, active, inv, eps](
                                                Graph& g, std::size_t self) {
    const double up = g.grad(self)[0] * inv;
    Matrix& gz = g.grad(logits.id);
    const std::size_t n = targets.cols();
    std::vector<double> dp(n);
    for (std::size_t r : active) {
      double weighted = 0.0;
      for (std::size_t c = 0; c < n; ++c) {
        const double p = (*probs)(r, c);
        dp[c] = (targets(r, c) != 0.0 && p > eps) ? -targets(r, c) / p : 0.0;
        weighted += p * dp[c];
      }
      for (std::size_t c = 0; c < n; ++c)
        gz(r, c) += up * (*probs)(r, c) * (dp[c] - weighted);
    }
  });
}

Var mse(Var a, const Matrix& target) {
  const Matrix& x = a.value();
  if (!x.same_shape(target)) throw Error(Errc::LengthMismatch, "mse operands differ in shape");
  double s = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) s += (x[i] - target[i]) * (x[i] - target[i]);
  const double inv = x.size() == 0 ? 0.0 : 1.0 / static_cast<double>(x.size());
  return a.graph->push(Matrix(1, 1, s * inv), [a, target, inv](Graph& g, std::size_t self) {
    const double up = g.grad(self)[0];
    const Matrix& x = g.value(a);
    Matrix& ga = g.grad(a.id);
    for (std::size_t i = 0; i < x.size(); ++i) ga[i] += up * 2.0 * (x[i] - target[i]) * inv;
  });
}

Var weighted_sum(const std::vector<Var>& xs, const std::vector<double>& weights) {
  if (xs.empty() || xs.size() != weights.size())
    throw Error(Errc::LengthMismatch, "weighted_sum operands");
  double s = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (xs[i].value().size() != 1) throw Error(Errc::ShapeMismatch, "weighted_sum needs scalars");
    s += weights[i] * xs[i].value()[0];
  }
  return xs[0].graph->push(Matrix(1, 1, s), [xs, weights](Graph& g, std::size_t self) {
    const double up = g.grad(self)[0];
    for (std::size_t i = 0; i < xs.size(); ++i) g.grad(xs[i].id)[0] += weights[i] * up;
  });
}

}  // namespace metarev::ad
