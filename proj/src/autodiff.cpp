#include "neat/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "neat/errors.hpp"

namespace neat::ad {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_same_tape(Var a, Var b, const char* op) {
  if (a.tape() == nullptr || a.tape() != b.tape())
    throw ContractError(std::string(op) + ": operands live on different tapes");
}

void require_same_shape(const Matrix& a, const Matrix& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_string() + " vs " + b.shape_string());
}

}  // namespace

std::string_view to_string(Activation a) { return a == Activation::relu ? "relu" : "sine"; }

Activation parse_activation(std::string_view name) {
  if (name == "relu") return Activation::relu;
  if (name == "sine") return Activation::sine;
  throw ConfigError("unknown activation '" + std::string(name) + "' (expected relu or sine)");
}

double activate(Activation a, double x) {
  return a == Activation::relu ? std::max(0.0, x) : std::sin(kTwoPi * x);
}

double activate_derivative(Activation a, double x) {
  if (a == Activation::relu) return x > 0.0 ? 1.0 : 0.0;
  return kTwoPi * std::cos(kTwoPi * x);
}

std::string_view op_name(Op op) {
  switch (op) {
    case Op::leaf: return "leaf";
    case Op::matmul: return "matmul";
    case Op::add: return "add";
    case Op::subtract: return "subtract";
    case Op::scale: return "scale";
    case Op::transpose: return "transpose";
    case Op::hadamard: return "hadamard";
    case Op::sum: return "sum";
    case Op::mean: return "mean";
    case Op::frobenius_norm: return "frobenius_norm";
    case Op::mse_loss: return "mse_loss";
    case Op::softmax_cross_entropy: return "softmax_cross_entropy";
    case Op::relu: return "relu";
    case Op::sine: return "sine";
  }
  return "unknown";
}

std::optional<Op> parse_op(std::string_view name) {
  for (int i = 0; i <= static_cast<int>(Op::sine); ++i) {
    auto op = static_cast<Op>(i);
    if (op_name(op) == name) return op;
  }
  return std::nullopt;
}

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }
bool Var::requires_grad() const { return tape_->requires_grad(id_); }

Var Tape::leaf(Matrix value, bool trainable) {
  if (!value.all_finite()) throw NumericalError("leaf: non-finite entries in " + value.shape_string());
  Node node;
  node.grad = Matrix(value.rows(), value.cols());
  node.value = std::move(value);
  node.requires_grad = trainable;
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

Var Tape::parameter(Matrix value) { return leaf(std::move(value), true); }
Var Tape::constant(Matrix value) { return leaf(std::move(value), false); }

Var Tape::record(Op op, Matrix value, std::vector<std::size_t> inputs, BackwardRule rule) {
  if (!value.all_finite())
    throw NumericalError(std::string(op_name(op)) + ": non-finite output " + value.shape_string());
  Node node;
  node.op = op;
  node.grad = Matrix(value.rows(), value.cols());
  node.value = std::move(value);
  node.requires_grad = std::any_of(inputs.begin(), inputs.end(), [&](std::size_t i) { return nodes_[i].requires_grad; });
  node.inputs = std::move(inputs);
  if (node.requires_grad) node.rule = std::move(rule);
  nodes_.push_back(std::move(node));
  return Var(this, nodes_.size() - 1);
}

void Tape::accumulate(std::size_t self, std::size_t k, Matrix contribution) {
  const std::size_t target = nodes_[self].inputs[k];
  if (!nodes_[target].requires_grad) return;
  if (fault_ && *fault_ == nodes_[self].op) {
    for (auto& v : contribution.values()) v = v * 1.01 + 1e-3;
  }
  Matrix& adj = adjoints_[target];
  for (std::size_t i = 0; i < adj.size(); ++i) adj[i] += contribution[i];
}

void Tape::note_relu_input(const Matrix& x) {
  for (double v : x.values()) relu_margin_ = std::min(relu_margin_, std::abs(v));
}

void Tape::backward(Var loss) {
  if (loss.tape() != this) throw ContractError("backward: loss does not belong to this tape");
  const Matrix& lv = value(loss.id());
  if (!lv.is_scalar()) throw ContractError("backward: loss must be scalar, got " + lv.shape_string());
  if (!nodes_[loss.id()].requires_grad) return;

  adjoints_.clear();
  adjoints_.reserve(loss.id() + 1);
  for (std::size_t i = 0; i <= loss.id(); ++i) {
    const Matrix& v = nodes_[i].value;
    adjoints_.emplace_back(nodes_[i].requires_grad ? Matrix(v.rows(), v.cols()) : Matrix());
  }
  adjoints_[loss.id()][0] = 1.0;
  for (std::size_t id = loss.id() + 1; id-- > 0;) {
    Node& node = nodes_[id];
    if (!node.requires_grad || !node.rule) continue;
    node.rule(*this, id);
  }
  for (std::size_t i = 0; i <= loss.id(); ++i) {
    if (!nodes_[i].requires_grad) continue;
    Matrix& g = nodes_[i].grad;
    for (std::size_t j = 0; j < g.size(); ++j) g[j] += adjoints_[i][j];
  }
  adjoints_.clear();
}

void Tape::zero_grad() {
  for (auto& node : nodes_)
    for (auto& v : node.grad.values()) v = 0.0;
}

Var matmul(Var a, Var b) {
  require_same_tape(a, b, "matmul");
  Tape& t = *a.tape();
  Matrix out = neat::matmul(a.value(), b.value());
  return t.record(Op::matmul, std::move(out), {a.id(), b.id()}, [](Tape& tape, std::size_t self) {
    const Matrix& g = tape.adjoint(self);
    const Matrix& av = tape.value(tape.input(self, 0));
    const Matrix& bv = tape.value(tape.input(self, 1));
    if (tape.requires_grad(tape.input(self, 0))) tape.accumulate(self, 0, neat::matmul(g, neat::transpose(bv)));
    if (tape.requires_grad(tape.input(self, 1))) tape.accumulate(self, 1, neat::matmul(neat::transpose(av), g));
  });
}

Var add(Var a, Var b) {
  require_same_tape(a, b, "add");
  require_same_shape(a.value(), b.value(), "add");
  return a.tape()->record(Op::add, neat::add(a.value(), b.value()), {a.id(), b.id()},
                          [](Tape& tape, std::size_t self) {
                            tape.accumulate(self, 0, tape.adjoint(self));
                            tape.accumulate(self, 1, tape.adjoint(self));
                          });
}

Var subtract(Var a, Var b) {
  require_same_tape(a, b, "subtract");
  require_same_shape(a.value(), b.value(), "subtract");
  return a.tape()->record(Op::subtract, neat::subtract(a.value(), b.value()), {a.id(), b.id()},
                          [](Tape& tape, std::size_t self) {
                            tape.accumulate(self, 0, tape.adjoint(self));
                            tape.accumulate(self, 1, neat::scale(tape.adjoint(self), -1.0));
                          });
}

Var scale(Var a, double s) {
  if (!std::isfinite(s)) throw NumericalError("scale: non-finite factor");
  return a.tape()->record(Op::scale, neat::scale(a.value(), s), {a.id()}, [s](Tape& tape, std::size_t self) {
    tape.accumulate(self, 0, neat::scale(tape.adjoint(self), s));
  });
}

Var transpose(Var a) {
  return a.tape()->record(Op::transpose, neat::transpose(a.value()), {a.id()}, [](Tape& tape, std::size_t self) {
    tape.accumulate(self, 0, neat::transpose(tape.adjoint(self)));
  });
}

Var hadamard(Var a, Var b) {
  require_same_tape(a, b, "hadamard");
  require_same_shape(a.value(), b.value(), "hadamard");
  return a.tape()->record(Op::hadamard, neat::hadamard(a.value(), b.value()), {a.id(), b.id()},
                          [](Tape& tape, std::size_t self) {
                            const Matrix& g = tape.adjoint(self);
                            const std::size_t ia = tape.input(self, 0);
                            const std::size_t ib = tape.input(self, 1);
                            if (tape.requires_grad(ia)) tape.accumulate(self, 0, neat::hadamard(g, tape.value(ib)));
                            if (tape.requires_grad(ib)) tape.accumulate(self, 1, neat::hadamard(g, tape.value(ia)));
                          });
}

Var activate(Var a, Activation kind) {
  Tape& t = *a.tape();
  const Matrix& x = a.value();
  if (!x.all_finite()) throw NumericalError("activate: non-finite input");
  if (kind == Activation::relu) t.note_relu_input(x);
  Matrix out(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = activate(kind, x[i]);
  const Op op = kind == Activation::relu ? Op::relu : Op::sine;
  return t.record(op, std::move(out), {a.id()}, [kind](Tape& tape, std::size_t self) {
    const Matrix& g = tape.adjoint(self);
    const Matrix& xv = tape.value(tape.input(self, 0));
    Matrix d(g.rows(), g.cols());
    for (std::size_t i = 0; i < g.size(); ++i) d[i] = g[i] * activate_derivative(kind, xv[i]);
    tape.accumulate(self, 0, std::move(d));
  });
}

Var sum(Var a) {
  return a.tape()->record(Op::sum, Matrix::scalar(neat::sum(a.value())), {a.id()}, [](Tape& tape, std::size_t self) {
    const Matrix& x = tape.value(tape.input(self, 0));
    tape.accumulate(self, 0, Matrix(x.rows(), x.cols(), tape.adjoint(self)[0]));
  });
}

Var mean(Var a) {
  const double n = static_cast<double>(a.value().size());
  return a.tape()->record(Op::mean, Matrix::scalar(neat::sum(a.value()) / n), {a.id()},
                          [n](Tape& tape, std::size_t self) {
                            const Matrix& x = tape.value(tape.input(self, 0));
                            tape.accumulate(self, 0, Matrix(x.rows(), x.cols(), tape.adjoint(self)[0] / n));
                          });
}

Var frobenius_norm(Var a) {
  const double norm = neat::frobenius_norm(a.value());
  return a.tape()->record(Op::frobenius_norm, Matrix::scalar(norm), {a.id()}, [norm](Tape& tape, std::size_t self) {
    const Matrix& x = tape.value(tape.input(self, 0));
    // Subgradient 0 at the origin.
    const double g = norm > 0.0 ? tape.adjoint(self)[0] / norm : 0.0;
    tape.accumulate(self, 0, neat::scale(x, g));
  });
}

Var mse_loss(Var pred, Var target) {
  require_same_tape(pred, target, "mse_loss");
  require_same_shape(pred.value(), target.value(), "mse_loss");
  const Matrix diff = neat::subtract(pred.value(), target.value());
  double acc = 0.0;
  for (double v : diff.values()) acc += v * v;
  const double n = static_cast<double>(diff.size());
  return pred.tape()->record(Op::mse_loss, Matrix::scalar(acc / n), {pred.id(), target.id()},
                             [n](Tape& tape, std::size_t self) {
                               const Matrix d = neat::subtract(tape.value(tape.input(self, 0)),
                                                               tape.value(tape.input(self, 1)));
                               const Matrix g = neat::scale(d, 2.0 * tape.adjoint(self)[0] / n);
                               tape.accumulate(self, 0, g);
                               tape.accumulate(self, 1, neat::scale(g, -1.0));
                             });
}

Var softmax_cross_entropy(Var logits, std::span<const std::size_t> labels) {
  const Matrix& z = logits.value();
  if (labels.size() != z.cols())
    throw ShapeError("softmax_cross_entropy: " + std::to_string(labels.size()) + " labels for logits " +
                     z.shape_string());
  Matrix probs(z.rows(), z.cols());
  double loss = 0.0;
  for (std::size_t j = 0; j < z.cols(); ++j) {
    if (labels[j] >= z.rows())
      throw ShapeError("softmax_cross_entropy: label " + std::to_string(labels[j]) + " out of range for " +
                       std::to_string(z.rows()) + " classes");
    double mx = z(0, j);
    for (std::size_t i = 1; i < z.rows(); ++i) mx = std::max(mx, z(i, j));
    double denom = 0.0;
    for (std::size_t i = 0; i < z.rows(); ++i) denom += std::exp(z(i, j) - mx);
    for (std::size_t i = 0; i < z.rows(); ++i) probs(i, j) = std::exp(z(i, j) - mx) / denom;
    loss -= z(labels[j], j) - mx - std::log(denom);
  }
  const double n = static_cast<double>(z.cols());
  std::vector<std::size_t> owned(labels.begin(), labels.end());
  return logits.tape()->record(Op::softmax_cross_entropy, Matrix::scalar(loss / n), {logits.id()},
                               [probs = std::move(probs), owned = std::move(owned), n](Tape& tape, std::size_t self) {
                                 Matrix g = probs;
                                 for (std::size_t j = 0; j < g.cols(); ++j) g(owned[j], j) -= 1.0;
                                 tape.accumulate(self, 0, neat::scale(g, tape.adjoint(self)[0] / n));
                               });
}

}  // namespace neat::ad
