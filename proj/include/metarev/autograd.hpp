#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <random>
#include <string>
#include <vector>

#include "metarev/attention.hpp"
#include "metarev/matrix.hpp"

namespace metarev::ad {

class Graph;

/// Handle to a node of a Graph. Cheap to copy; only valid with its graph.
struct Var {
  Graph* graph = nullptr;
  std::size_t id = 0;

  const Matrix& value() const;
};

/// Tape of matrix operations with analytic reverse-mode gradients. Nodes are
/// appended in evaluation order, so reverse insertion order is a valid
/// topological order for backward().
class Graph {
 public:
  explicit Graph(bool record = true) : record_(record) {}
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  bool recording() const noexcept { return record_; }

  Var constant(Matrix value);
  /// Leaf registered under `name`; asking twice returns the same node.
  Var parameter(const std::string& name, const Matrix& value);

  const Matrix& value(Var v) const { return nodes_.at(v.id).value; }

  /// Seeds d(loss)/d(loss) = 1 and propagates. Throws NoRecordedGraph when
  /// the graph was built without recording or is empty.
  void backward(Var loss);

  /// Gradient of every registered parameter (zeros if unreached).
  std::map<std::string, Matrix> parameter_gradients() const;

  // Used by op implementations.
  Var push(Matrix value, std::function<void(Graph&, std::size_t)> back);
  Matrix& grad(std::size_t id);
  bool has_grad(std::size_t id) const { return !nodes_[id].grad.empty(); }
  std::size_t size() const noexcept { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::function<void(Graph&, std::size_t)> back;
  };
  bool record_;
  std::vector<Node> nodes_;
  std::map<std::string, std::size_t> params_;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
/// Adds a 1×n row to every row of a.
Var add_row(Var a, Var row);
Var scale(Var a, double s);
Var relu(Var a);
Var sigmoid(Var a);
/// Row-wise normalization with learned 1×n gain and bias.
Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
/// Rows `ids` of `table`.
Var gather_rows(Var table, const std::vector<std::size_t>& ids);
Var mean_rows(Var a);
/// Inverted dropout. Identity when rate == 0 or rng is null.
Var dropout(Var a, double rate, std::mt19937_64* rng);

/// Relationship-aware block-sparse attention; beta is a 1×7 row.
Var rsattn(Var q, Var k, Var v, Var beta, const BlockLayout& layout,
           const RelationSet& relations, BlockAttentionStats* stats = nullptr);
/// Forward-only dense-masked variant used to cross-check the block path.
Var rsattn_dense(Var q, Var k, Var v, Var beta, const std::vector<TokenMask>& masks);
Var attention(Var q, Var k, Var v, bool causal);

/// Mean over rows r in `rows` (all rows if empty) of −Σ_c t[r][c]·log(max(p[r][c], eps)),
/// p = softmax(logits[r]). Rows whose target row sums to zero are skipped.
Var softmax_cross_entropy(Var logits, const Matrix& targets, double eps = 1e-9);
/// mean((a − target)²) over all entries; 0 for an empty a.
Var mse(Var a, const Matrix& target);
/// Σ w_i · x_i over 1×1 vars.
Var weighted_sum(const std::vector<Var>& xs, const std::vector<double>& weights);

}  // namespace metarev::ad
