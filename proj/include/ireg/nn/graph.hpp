#pragma once

// Reverse-mode automatic differentiation over dense row-major matrices.
//
// A Graph records operations eagerly; values are available immediately and
// backward() replays the recorded adjoints in reverse creation order. Graphs
// are single-use and cheap to create, one per example.

#include <functional>
#include <span>
#include <vector>

#include "ireg/nn/parameters.hpp"

namespace ireg::nn {

struct Var {
  int id = -1;
};

class Graph {
 public:
  /// With requires_grad == false no adjoints are recorded (inference).
  explicit Graph(const ParameterSet& params, bool requires_grad = true);
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var param(std::size_t index);
  Var param(const std::string& name) { return param(params_->index(name)); }
  Var constant(Matrix value);

  const Matrix& value(Var v) const;
  double scalar(Var v) const { return value(v)(0, 0); }

  Var matmul(Var a, Var b);
  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  /// Adds a 1 x n row to every row of a.
  Var add_row(Var a, Var row);
  Var scale(Var a, double factor);
  Var relu(Var a);
  Var layer_norm(Var x, Var gain, Var bias, double eps = 1e-5);
  /// Multi-head scaled dot-product attention over already projected q, k, v.
  /// `mask_bias` is added to the logits (0 or -inf), shape q.rows x k.rows.
  Var attention(Var q, Var k, Var v, const Matrix& mask_bias, int heads);
  Var gather_rows(Var table, std::span<const int> rows);
  Var concat_rows(std::span<const Var> parts);
  /// Keeps rows [begin, begin + count).
  Var slice_rows(Var a, int begin, int count);
  /// 1 x 1: sum over rows t of log_softmax(logits)[t, targets[t]].
  Var log_prob_sum(Var logits, std::span<const int> targets);
  Var transpose(Var a);
  Var sum(Var a);
  Var mean_rows(Var a);

  /// Seeds d(loss)/d(loss) = 1 and accumulates parameter gradients into `out`.
  void backward(Var loss, Gradients& out);

  std::size_t node_count() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    const Matrix* external = nullptr;
    std::function<void()> adjoint;
    int param_index = -1;
  };

  Var push(Matrix value);
  const Matrix& val(int id) const;
  Matrix& grad(int id);
  bool has_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad.size() != 0; }
  void record(Var out, std::function<void()> adjoint);

  const ParameterSet* params_;
  bool requires_grad_;
  std::vector<Node> nodes_;
  std::vector<int> param_nodes_;
};

}  // namespace ireg::nn
