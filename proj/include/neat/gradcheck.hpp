#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "neat/autodiff.hpp"
#include "neat/matrix.hpp"

namespace neat::ad {

/// Central differences (f(x + h e_i) - f(x - h e_i)) / 2h for every entry of x.
/// f must be deterministic; that is the caller's responsibility.
Matrix finite_diff_grad(const std::function<double(const Matrix&)>& f, const Matrix& x, double h = 1e-5);

/// |a - b| / max(1, |a|, |b|): relative for large gradients, absolute near zero.
double gradient_error(double autodiff, double numeric);

struct GradCheckOptions {
  std::uint64_t seed = 0;
  std::size_t rounds = 5;   // each round builds one graph of every kind
  std::size_t max_dim = 6;  // random dims are drawn from [1, max_dim] (hidden widths from [1, 3])
  double step = 1e-5;
  double tolerance = 1e-6;
  std::optional<Op> fault;  // negative-control hook, see Tape::inject_fault
};

struct GradCheckFailure {
  std::string graph;
  std::string leaf;
  std::size_t index = 0;
  double autodiff = 0.0;
  double numeric = 0.0;
  double error = 0.0;
};

struct GradCheckReport {
  std::size_t graphs = 0;
  std::size_t entries = 0;
  double max_error = 0.0;
  std::optional<GradCheckFailure> worst;
  std::vector<GradCheckFailure> failures;  // worst entry of each failing graph
  std::vector<std::string> graph_kinds;    // distinct graph names covered

  bool passed() const { return failures.empty(); }
};

/// Names of the graph kinds built per round: one per primitive operation plus
/// NEAT layers (relu/sine x depth 2/4 x residual off/on) and a LoRA layer.
std::vector<std::string> gradcheck_graph_kinds();

GradCheckReport run_gradcheck(const GradCheckOptions& options);

}  // namespace neat::ad
