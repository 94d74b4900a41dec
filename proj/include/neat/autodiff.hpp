#pragma once

// Define-by-run reverse-mode differentiation over dense matrices.
//
// A Tape owns every node created during one forward pass. Leaves are either
// trainable parameters or constants; intermediate nodes remember their inputs
// and a backward rule. Tape::backward(loss) walks the nodes in reverse
// creation order, which is a valid reverse topological order because every
// node is created after its inputs.

#include <cstddef>
#include <deque>
#include <functional>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "neat/matrix.hpp"

namespace neat::ad {

enum class Activation { relu, sine };

std::string_view to_string(Activation a);
/// Throws ConfigError for anything other than "relu" or "sine".
Activation parse_activation(std::string_view name);

/// Scalar activation and its derivative (ReLU derivative at 0 is 0).
double activate(Activation a, double x);
double activate_derivative(Activation a, double x);

enum class Op {
  leaf,
  matmul,
  add,
  subtract,
  scale,
  transpose,
  hadamard,
  sum,
  mean,
  frobenius_norm,
  mse_loss,
  softmax_cross_entropy,
  relu,
  sine,
};

std::string_view op_name(Op op);
std::optional<Op> parse_op(std::string_view name);

class Tape;

/// Lightweight handle to a node on a Tape.
class Var {
 public:
  Var() = default;

  const Matrix& value() const;
  /// Accumulated gradient; an all-zero matrix for nodes that do not require grad.
  const Matrix& grad() const;
  bool requires_grad() const;
  std::size_t id() const { return id_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// A leaf that receives a gradient in backward().
  Var parameter(Matrix value);
  /// A leaf that never receives a gradient (frozen weights, data, masks).
  Var constant(Matrix value);

  /// Accumulates d(loss)/d(node) into every node reachable from `loss` that
  /// requires a gradient. Gradients add up across calls until zero_grad().
  void backward(Var loss);
  void zero_grad();

  std::size_t size() const { return nodes_.size(); }

  /// Smallest |x| seen by any ReLU on this tape (infinity if none). Finite
  /// differences are unreliable within one step size of the kink.
  double relu_margin() const { return relu_margin_; }

  /// Test hook: perturbs the gradient produced by every node of kind `op`.
  void inject_fault(std::optional<Op> op) { fault_ = op; }

  // Recording interface used by the operation functions below.
  using BackwardRule = std::function<void(Tape&, std::size_t self)>;
  Var record(Op op, Matrix value, std::vector<std::size_t> inputs, BackwardRule rule);
  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const { return nodes_[id].grad; }
  /// Gradient flowing into node `id` during the current backward pass.
  const Matrix& adjoint(std::size_t id) const { return adjoints_[id]; }
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  std::size_t input(std::size_t id, std::size_t k) const { return nodes_[id].inputs[k]; }
  /// Adds `contribution` to the gradient of the k-th input of node `self`.
  void accumulate(std::size_t self, std::size_t k, Matrix contribution);
  void note_relu_input(const Matrix& x);

 private:
  struct Node {
    Op op = Op::leaf;
    Matrix value;
    Matrix grad;
    bool requires_grad = false;
    std::vector<std::size_t> inputs;
    BackwardRule rule;
  };

  Var leaf(Matrix value, bool trainable);

  std::deque<Node> nodes_;  // deque: value() references survive later appends
  std::vector<Matrix> adjoints_;  // live only during backward()
  std::optional<Op> fault_;
  double relu_margin_ = std::numeric_limits<double>::infinity();
};

// Recorded operations. Shapes are never broadcast; mismatches throw ShapeError,
// non-finite results throw NumericalError.
Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var subtract(Var a, Var b);
Var scale(Var a, double s);
Var transpose(Var a);
Var hadamard(Var a, Var b);
Var activate(Var a, Activation kind);
Var sum(Var a);
Var mean(Var a);
Var frobenius_norm(Var a);
/// mean((pred - target)^2) over all entries.
Var mse_loss(Var pred, Var target);
/// Mean over columns of -log softmax(logits[:, j])[labels[j]]; logits are classes x batch.
Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels);

}  // namespace neat::ad
