#pragma once

#include <functional>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "stockode/tensor.hpp"

namespace stockode {

/// A named trainable tensor plus its gradient accumulator.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v)
      : name(std::move(n)), value(std::move(v)), grad(value.shape()) {}

  void zero_grad() { grad.fill(0.0); }
};

class Tape;

/// Lightweight handle to a node on a Tape.
struct Var {
  Tape* tape = nullptr;
  int id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor& value() const;
};

/// Reverse-mode differentiation tape. Every operation records a node whose
/// parents precede it, so creation order is a topological order and the
/// backward sweep is a single reverse pass. One tape per forward evaluation;
/// calling backward() accumulates into the gradients of every Parameter that
/// participated.
class Tape {
 public:
  Var constant(Tensor t);
  Var param(Parameter& p);  // one node per Parameter per tape

  Var add(Var a, Var b);
  Var sub(Var a, Var b);
  Var mul(Var a, Var b);
  Var scale(Var a, double c);
  Var add_scalar(Var a, double c);
  Var matmul(Var a, Var b);
  Var transpose(Var a);
  /// (R,C) matrix plus a length-C row vector broadcast over rows.
  Var add_rowvec(Var m, Var v);
  Var concat_cols(Var a, Var b);
  Var slice_cols(Var a, std::size_t start, std::size_t len);

  Var sigmoid(Var a);
  Var tanh(Var a);
  Var relu(Var a);
  Var leaky_relu(Var a, double slope);
  Var softplus(Var a);
  Var log(Var a);

  /// Row-wise softmax of a rank-2 tensor.
  Var softmax_rows(Var a);
  /// Layer normalization over the last (feature) axis with learned scale and
  /// shift; gain and bias are length-C vectors.
  Var layer_norm_rows(Var x, Var gain, Var bias, double eps = 1e-5);

  Var sum(Var a);   // -> rank-0 scalar
  Var mean(Var a);  // -> rank-0 scalar

  /// sum over the given ordered pairs of max(0, -(r_i - r_j) * true_diff[p]),
  /// where r is a column vector (N,1) or vector (N). true_diff holds one
  /// precomputed target difference per pair.
  Var pairwise_hinge(Var rhat, std::vector<std::pair<int, int>> pairs,
                     Tensor true_diff);

  /// Seeds d(loss)/d(loss) = 1, sweeps the tape in reverse and accumulates
  /// into Parameter::grad. Throws ContractError if loss is not scalar.
  /// Repeated calls accumulate again (node-local grads are reset each call).
  void backward(Var loss);

  const Tensor& value(Var v) const { return nodes_[v.id].value; }
  const Tensor& grad(Var v) const { return nodes_[v.id].grad; }
  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Tensor value;
    Tensor grad;
    Parameter* param = nullptr;
    std::function<void(Tape&, const Node&)> back;
  };

  friend struct Var;

  Var push(Tensor value, std::function<void(Tape&, const Node&)> back);
  Tensor& grad_ref(int id);
  Var unary(Var a, Tensor value, Tensor dydx);

  std::vector<Node> nodes_;
  std::unordered_map<const Parameter*, int> param_nodes_;
};

inline const Tensor& Var::value() const { return tape->value(*this); }

}  // namespace stockode
