#include "neat/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "neat/adapters.hpp"
#include "neat/errors.hpp"

namespace neat::ad {

Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h) {
  if (!(h > 0.0)) throw ContractError("finite_diff_grad: step must be positive");
  Matrix grad(x.rows(), x.cols());
  Matrix probe = x;
  for (std::size_t i = 0; i < x.size(); ++i) {
    probe[i] = x[i] + h;
    const double up = f(probe);
    probe[i] = x[i] - h;
    const double down = f(probe);
    probe[i] = x[i];
    grad[i] = (up - down) / (2.0 * h);
  }
  return grad;
}

double gradient_error(double autodiff, double numeric) {
  return std::abs(autodiff - numeric) / std::max({1.0, std::abs(autodiff), std::abs(numeric)});
}

namespace {

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GraphCase {
  std::string name;
  std::vector<std::string> leaf_names;
  std::vector<Matrix> leaves;
  Builder build;
};

std::size_t draw_dim(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, std::max(lo, hi))(rng);
}

// sum(R .* y): turns any matrix-valued node into a scalar with a generic upstream gradient.
Var project(Tape& tape, Var y, const Matrix& weights) { return sum(hadamard(y, tape.constant(weights))); }

GraphCase unary_case(const std::string& name, std::mt19937_64& rng, std::size_t max_dim,
                     std::function<Var(Var)> op, bool scalar_output, bool transposed = false) {
  const std::size_t m = draw_dim(rng, 1, max_dim);
  const std::size_t n = draw_dim(rng, 1, max_dim);
  Matrix a = gaussian(m, n, 1.0, rng);
  Matrix r = transposed ? gaussian(n, m, 1.0, rng) : gaussian(m, n, 1.0, rng);
  return {name, {"a"}, {std::move(a)}, [op, r, scalar_output](Tape& t, const std::vector<Var>& p) {
            Var y = op(p[0]);
            return scalar_output ? y : project(t, y, r);
          }};
}

GraphCase binary_case(const std::string& name, std::mt19937_64& rng, std::size_t max_dim,
                      std::function<Var(Var, Var)> op, bool scalar_output) {
  const std::size_t m = draw_dim(rng, 1, max_dim);
  const std::size_t n = draw_dim(rng, 1, max_dim);
  Matrix a = gaussian(m, n, 1.0, rng);
  Matrix b = gaussian(m, n, 1.0, rng);
  Matrix r = gaussian(m, n, 1.0, rng);
  return {name, {"a", "b"}, {std::move(a), std::move(b)}, [op, r, scalar_output](Tape& t, const std::vector<Var>& p) {
            Var y = op(p[0], p[1]);
            return scalar_output ? y : project(t, y, r);
          }};
}

GraphCase matmul_case(std::mt19937_64& rng, std::size_t max_dim) {
  const std::size_t m = draw_dim(rng, 1, max_dim);
  const std::size_t k = draw_dim(rng, 1, max_dim);
  const std::size_t n = draw_dim(rng, 1, max_dim);
  Matrix a = gaussian(m, k, 1.0, rng);
  Matrix b = gaussian(k, n, 1.0, rng);
  Matrix r = gaussian(m, n, 1.0, rng);
  return {"matmul", {"a", "b"}, {std::move(a), std::move(b)}, [r](Tape& t, const std::vector<Var>& p) {
            return project(t, matmul(p[0], p[1]), r);
          }};
}

GraphCase softmax_case(std::mt19937_64& rng, std::size_t max_dim) {
  const std::size_t classes = draw_dim(rng, 2, max_dim);
  const std::size_t batch = draw_dim(rng, 1, max_dim);
  Matrix logits = gaussian(classes, batch, 1.0, rng);
  std::vector<std::size_t> labels(batch);
  for (auto& l : labels) l = draw_dim(rng, 0, classes - 1);
  return {"softmax_cross_entropy", {"logits"}, {std::move(logits)}, [labels](Tape&, const std::vector<Var>& p) {
            return softmax_cross_entropy(p[0], labels);
          }};
}

GraphCase neat_case(std::mt19937_64& rng, std::size_t max_dim, Activation act, std::size_t depth, bool residual) {
  const std::size_t d1 = draw_dim(rng, 2, max_dim + 2);
  const std::size_t d2 = draw_dim(rng, 2, max_dim);
  const std::size_t r = draw_dim(rng, 1, 3);
  const std::size_t batch = draw_dim(rng, 1, 4);
  // Sine graphs get smaller weights so 2*pi*x stays within a few periods.
  const double w_scale = act == Activation::sine ? 0.5 : 1.0;

  AdaptedLayer layer;
  layer.base.weight = gaussian(d1, d2, w_scale, rng);
  NeatAdapter adapter;
  adapter.theta_in = gaussian(d2, r, w_scale / std::sqrt(static_cast<double>(d2)), rng);
  for (std::size_t k = 2; k < depth; ++k)
    adapter.intermediates.push_back(gaussian(r, r, w_scale / std::sqrt(static_cast<double>(r)), rng));
  adapter.theta_out = gaussian(r, d2, 1.0, rng);
  adapter.activation = act;
  adapter.residual = residual;
  adapter.scaling = std::uniform_real_distribution<double>(0.5, 2.0)(rng);
  const Matrix x = gaussian(d2, batch, 1.0, rng);
  const Matrix target = gaussian(d1, batch, 1.0, rng);

  std::string name = "neat_" + std::string(to_string(act)) + "_depth" + std::to_string(depth) +
                     (residual ? "_residual" : "");
  std::vector<std::string> leaf_names{"theta_in"};
  for (std::size_t k = 2; k < depth; ++k) leaf_names.push_back("intermediate" + std::to_string(k - 2));
  leaf_names.push_back("theta_out");
  layer.adapter = adapter;
  std::vector<Matrix> leaves;
  for (const Matrix* m : parameters(*layer.adapter)) leaves.push_back(*m);
  return {std::move(name), std::move(leaf_names), std::move(leaves),
          [layer, x, target](Tape& t, const std::vector<Var>& p) {
            LayerVars vars{t.constant(layer.base.weight), p};
            Var y = record_adapted_forward(t, layer, vars, t.constant(x), false, nullptr);
            return mse_loss(y, t.constant(target));
          }};
}

GraphCase lora_case(std::mt19937_64& rng, std::size_t max_dim) {
  const std::size_t d1 = draw_dim(rng, 2, max_dim + 2);
  const std::size_t d2 = draw_dim(rng, 2, max_dim);
  const std::size_t r = draw_dim(rng, 1, 3);
  AdaptedLayer layer;
  layer.base.weight = gaussian(d1, d2, 1.0, rng);
  LoraAdapter adapter{gaussian(d1, r, 1.0, rng), gaussian(r, d2, 1.0, rng), 0.75, 0.0};
  const Matrix x = gaussian(d2, 3, 1.0, rng);
  const Matrix target = gaussian(d1, 3, 1.0, rng);
  std::vector<Matrix> leaves{adapter.A, adapter.B};
  layer.adapter = adapter;
  return {"lora", {"A", "B"}, std::move(leaves), [layer, x, target](Tape& t, const std::vector<Var>& p) {
            LayerVars vars{t.constant(layer.base.weight), p};
            return mse_loss(record_adapted_forward(t, layer, vars, t.constant(x), false, nullptr), t.constant(target));
          }};
}

std::vector<GraphCase> build_round(std::mt19937_64& rng, std::size_t max_dim) {
  std::vector<GraphCase> cases;
  cases.push_back(matmul_case(rng, max_dim));
  cases.push_back(binary_case("add", rng, max_dim, [](Var a, Var b) { return add(a, b); }, false));
  cases.push_back(binary_case("subtract", rng, max_dim, [](Var a, Var b) { return subtract(a, b); }, false));
  cases.push_back(binary_case("hadamard", rng, max_dim, [](Var a, Var b) { return hadamard(a, b); }, false));
  cases.push_back(binary_case("mse_loss", rng, max_dim, [](Var a, Var b) { return mse_loss(a, b); }, true));
  const double s = std::uniform_real_distribution<double>(-2.0, 2.0)(rng);
  cases.push_back(unary_case("scale", rng, max_dim, [s](Var a) { return scale(a, s); }, false));
  cases.push_back(unary_case("transpose", rng, max_dim, [](Var a) { return transpose(a); }, false, true));
  cases.push_back(unary_case("sum", rng, max_dim, [](Var a) { return sum(a); }, true));
  cases.push_back(unary_case("mean", rng, max_dim, [](Var a) { return mean(a); }, true));
  cases.push_back(unary_case("frobenius_norm", rng, max_dim, [](Var a) { return frobenius_norm(a); }, true));
  cases.push_back(unary_case("relu", rng, max_dim, [](Var a) { return activate(a, Activation::relu); }, false));
  cases.push_back(unary_case("sine", rng, max_dim, [](Var a) { return activate(a, Activation::sine); }, false));
  cases.push_back(softmax_case(rng, max_dim));
  for (Activation act : {Activation::relu, Activation::sine})
    for (std::size_t depth : {2, 4})
      for (bool residual : {false, true}) cases.push_back(neat_case(rng, max_dim, act, depth, residual));
  cases.push_back(lora_case(rng, max_dim));
  return cases;
}

// Builds the graph once; returns the tape-side loss value, ReLU margin and gradients.
struct Evaluation {
  double loss = 0.0;
  double relu_margin = 0.0;
  std::vector<Matrix> grads;
};

Evaluation evaluate(const GraphCase& g, std::optional<Op> fault, bool with_grad) {
  Tape tape;
  tape.inject_fault(fault);
  std::vector<Var> params;
  for (const Matrix& m : g.leaves) params.push_back(tape.parameter(m));
  Var loss = g.build(tape, params);
  Evaluation e;
  e.loss = loss.value()[0];
  e.relu_margin = tape.relu_margin();
  if (with_grad) {
    tape.backward(loss);
    for (const Var& p : params) e.grads.push_back(p.grad());
  }
  return e;
}

}  // namespace

std::vector<std::string> gradcheck_graph_kinds() {
  std::mt19937_64 rng(0);
  std::vector<std::string> names;
  for (const auto& g : build_round(rng, 3)) names.push_back(g.name);
  return names;
}

GradCheckReport run_gradcheck(const GradCheckOptions& options) {
  if (options.max_dim == 0) throw ContractError("gradcheck: max_dim must be >= 1");
  GradCheckReport report;
  std::mt19937_64 rng(options.seed);
  // Keep finite-difference stencils well clear of ReLU kinks.
  const double kink_margin = 100.0 * options.step;

  const std::size_t kinds = gradcheck_graph_kinds().size();
  for (std::size_t round = 0; round < options.rounds; ++round) {
    for (std::size_t kind = 0; kind < kinds; ++kind) {
      GraphCase g;
      Evaluation base;
      for (int attempt = 0;; ++attempt) {
        std::mt19937_64 sub(rng());
        g = std::move(build_round(sub, options.max_dim)[kind]);
        base = evaluate(g, options.fault, true);
        if (base.relu_margin > kink_margin) break;
        if (attempt > 200) throw NumericalError("gradcheck: could not sample a graph away from ReLU kinks");
      }
      ++report.graphs;
      if (std::find(report.graph_kinds.begin(), report.graph_kinds.end(), g.name) == report.graph_kinds.end())
        report.graph_kinds.push_back(g.name);

      std::optional<GradCheckFailure> graph_worst;
      for (std::size_t leaf = 0; leaf < g.leaves.size(); ++leaf) {
        auto f = [&](const Matrix& probe) {
          GraphCase copy = g;
          copy.leaves[leaf] = probe;
          return evaluate(copy, std::nullopt, false).loss;
        };
        const Matrix numeric = finite_diff_grad(f, g.leaves[leaf], options.step);
        const Matrix& analytic = base.grads[leaf];
        for (std::size_t i = 0; i < numeric.size(); ++i) {
          ++report.entries;
          const double err = gradient_error(analytic[i], numeric[i]);
          GradCheckFailure entry{g.name, g.leaf_names[leaf], i, analytic[i], numeric[i], err};
          if (err > report.max_error || !report.worst) {
            report.max_error = std::max(report.max_error, err);
            if (!report.worst || err >= report.worst->error) report.worst = entry;
          }
          if (err > options.tolerance && (!graph_worst || err > graph_worst->error)) graph_worst = entry;
        }
      }
      if (graph_worst) report.failures.push_back(*graph_worst);
    }
  }
  return report;
}

}  // namespace neat::ad
