#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "neat/matrix.hpp"

namespace neat::linalg {

/// Thin SVD: input = U * diag(singular_values) * V^T with k = min(rows, cols).
struct SvdResult {
  Matrix U;                             // rows x k, orthonormal columns
  std::vector<double> singular_values;  // k entries, nonincreasing, >= 0
  Matrix V;                             // cols x k, orthonormal columns
};

inline constexpr int kMaxJacobiSweeps = 80;

/// One-sided (Hestenes) Jacobi SVD with a fixed cyclic sweep order.
///
/// Columns of U belonging to numerically zero singular values are completed to
/// an orthonormal set deterministically. Each U column is sign-normalized so
/// its largest-magnitude entry is nonnegative (ties go to the lowest index).
/// Throws NumericalError if the sweeps do not converge within kMaxJacobiSweeps.
SvdResult svd(const Matrix& m);

/// max(rows, cols) * machine epsilon * sigma_max.
double default_rank_tol(const Matrix& m, const SvdResult& s);

std::size_t numerical_rank(const SvdResult& s, double rank_tol);

/// Moore-Penrose pseudoinverse, dropping singular values <= rank_tol.
Matrix pinv(const Matrix& m, std::optional<double> rank_tol = std::nullopt);

/// Orthonormal basis (rows x rank) of the column space of m.
Matrix left_singular_basis(const Matrix& m, std::optional<double> rank_tol = std::nullopt);

/// U U^T over singular values above rank_tol: the orthogonal projector onto col(m).
Matrix left_projector(const Matrix& m, std::optional<double> rank_tol = std::nullopt);

double spectral_norm(const Matrix& m);

}  // namespace neat::linalg
