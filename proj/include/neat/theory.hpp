#pragma once

// Executable expressivity checks relating NEAT updates act(W0 T1) T2 to
// low-rank updates A B.
//
// ReLU: any A B projected onto the column space of W0 is reproduced exactly by
// a NEAT update with 2r hidden units, using x = relu(x) - relu(-x):
//   T1 = [pinv(W0) A, -pinv(W0) A],  T2 = [B; -B]
//   relu(W0 T1) T2 = W0 pinv(W0) A B = U U^T A B.
// Conversely any r-unit NEAT update is the low-rank product with
// A = relu(W0 T1), B = T2.
//
// Sine (act(x) = sin(2 pi x)): with T1 = (c_1 e_j, ..., c_r e_j) the hidden
// matrix is sin(2 pi c_k w_j) column by column, so choosing the multipliers c_k
// to match the fractional parts of c_k w_j against arcsin(a_k) / 2pi
// approximates any A, and T2 = B gives
//   ||A B - sin(2 pi W0 T1) B||_F <= 2 pi ||B||_2 sqrt(r) max_k eps_k
// where eps_k is the Euclidean norm of the circular fractional-part mismatch
// of column k.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "neat/autodiff.hpp"
#include "neat/matrix.hpp"

namespace neat::theory {

/// L(W) = ||U^T W X - Z||_F^2 with U the left singular basis of a designated W0.
/// Invariant under W -> U U^T W since U^T U U^T = U^T.
struct InvariantLoss {
  Matrix U;          // d1 x k
  Matrix X;          // d2 x n
  Matrix Z;          // k x n
  Matrix generator;  // the perturbation G with Z = U^T (W0 + G) X

  double operator()(const Matrix& W) const;
};

/// X ~ N(0, 1), G ~ N(0, perturbation^2), Z = U^T (W0 + G) X.
InvariantLoss build_invariant_loss(const Matrix& W0, std::size_t n_probes, std::uint64_t seed,
                                   std::optional<double> rank_tol = std::nullopt, double perturbation = 1.0);

/// act(W0 T1) T2 computed directly.
Matrix shallow_update(const Matrix& W0, const Matrix& theta_in, const Matrix& theta_out, ad::Activation act);

struct NeatPair {
  Matrix theta_in;   // d2 x 2r (construction) or d2 x r
  Matrix theta_out;  // 2r x d2 or r x d2
};

struct LowRankPair {
  Matrix A;  // d1 x r
  Matrix B;  // r x d2
};

NeatPair prop1_construct(const Matrix& W0, const Matrix& A, const Matrix& B,
                         std::optional<double> rank_tol = std::nullopt);

struct Prop1Report {
  double residual = 0.0;   // ||relu(W0 T1) T2 - U U^T A B||_F
  double loss_gap = 0.0;   // |L(W0 + relu(W0 T1) T2) - L(W0 + A B)|
  double tolerance = 0.0;  // 1e-9 * max(1, ||A B||_F)
  bool passed = false;
};

Prop1Report prop1_verify(const Matrix& W0, const Matrix& A, const Matrix& B, const InvariantLoss& loss,
                         std::optional<double> rank_tol = std::nullopt);

/// A = relu(W0 T1), B = T2, so that A B equals the NEAT update exactly.
LowRankPair prop1_reverse(const Matrix& W0, const Matrix& theta_in, const Matrix& theta_out);

struct Prop2Options {
  double eps = 1e-3;      // target on the achieved Frobenius error; not a contract
  double c_max = 1e4;
  double grid_step = 1e-4;
  /// Pins j*. Otherwise every column is scanned (or only the heuristic pick
  /// when scan_all_columns is false) and the best fit is kept.
  std::optional<std::size_t> column;
  bool scan_all_columns = true;
  /// Coordinate passes that re-search one shift at a time against the joint
  /// residual with the other shifts held fixed.
  std::size_t refine_rounds = 1;
  /// Replace theta_out = B by the least-squares fit pinv(S) A B, where
  /// S = sin(2 pi W0 theta_in). Never worse than theta_out = B. Also adds a
  /// greedy start per column that picks shifts one at a time to shrink the
  /// joint residual, since the sines then only need to span col(A B).
  bool refit_output = true;
  /// Coarse-to-fine search: a first pass visits every stride-th grid point,
  /// with the stride chosen so no phase 2 pi c w_i advances more than
  /// coarse_phase radians per visited point; the fine grid is then searched
  /// exhaustively within one stride of the best `candidates` coarse points.
  /// coarse_phase = 0 visits every grid point.
  double coarse_phase = 0.02;
  std::size_t candidates = 64;
  bool parallel = true;  // scan columns concurrently
};

struct Prop2Column {
  double shift = 0.0;           // c_k
  double sign = 1.0;            // a_k enters the construction as sign * a_k / scale
  double scale = 1.0;           // max_i |a_ik|
  double frac_error = 0.0;      // eps_k: Euclidean norm of circular fractional-part mismatch
  double max_frac_error = 0.0;  // max-norm of the same mismatch
  double sine_error = 0.0;      // ||sign * a_k / scale - sin(2 pi c_k w)||_2
};

struct Prop2SearchReport {
  std::size_t column = 0;  // j*
  std::vector<Prop2Column> columns;
  Matrix theta_in;            // d2 x r, column k is c_k e_{j*}
  Matrix theta_out;           // r x d2, the reported fit (refit or construction)
  Matrix construction_theta_out;  // r x d2, row k is sign_k * scale_k * b_k
  double achieved_error = 0.0;      // ||A B - sin(2 pi W0 theta_in) theta_out||_F
  double construction_error = 0.0;  // same with construction_theta_out
  double relative_error = 0.0;      // achieved / ||A B||_F (absolute when A B = 0)
  double b_spectral_norm = 0.0;     // ||construction_theta_out||_2
  double bound = 0.0;               // 2 pi ||B||_2 sqrt(r) max_k eps_k
  double target_eps = 0.0;
  bool converged = false;  // achieved_error <= target_eps
  double grid_step = 0.0;
  double c_max = 0.0;
  std::uint64_t budget = 0;         // fine grid points per sweep
  std::uint64_t coarse_stride = 1;  // for column j*
  std::uint64_t used = 0;           // grid points scored over all sweeps
  std::size_t columns_scanned = 0;
};

/// Column whose entries look most rationally independent: maximizes the smallest
/// gap among {|w_i|} U {|w_i - w_k|, |w_i + w_k|}. Ties go to the lowest index.
std::size_t select_kronecker_column(const Matrix& W0);

/// Folds arcsin(a) / 2pi into [0, 1).
double fractional_target(double a);

/// Circular distance between fractional parts, in [0, 1/2].
double circular_distance(double x, double y);

Prop2SearchReport prop2_search(const Matrix& W0, const Matrix& A, const Matrix& B, const Prop2Options& options = {});

/// Both the reported fit and the construction stay within the bound, allowing
/// for floating-point rounding.
bool prop2_bound_check(const Prop2SearchReport& report);

}  // namespace neat::theory
