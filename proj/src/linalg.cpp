#include "neat/linalg.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "neat/errors.hpp"

namespace neat::linalg {

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();

double column_dot(const Matrix& a, std::size_t p, std::size_t q) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.rows(); ++i) s += a(i, p) * a(i, q);
  return s;
}

// Extends the first `filled` orthonormal columns of u with vectors from the
// standard basis, orthogonalized twice (classical Gram-Schmidt with reorthogonalization).
void complete_orthonormal(Matrix& u, const std::vector<bool>& filled) {
  const std::size_t n = u.rows();
  std::vector<bool> have = filled;
  for (std::size_t col = 0; col < u.cols(); ++col) {
    if (have[col]) continue;
    std::vector<double> best;
    double best_norm = -1.0;
    for (std::size_t e = 0; e < n; ++e) {
      std::vector<double> v(n, 0.0);
      v[e] = 1.0;
      for (int pass = 0; pass < 2; ++pass) {
        for (std::size_t c = 0; c < u.cols(); ++c) {
          if (!have[c]) continue;
          double d = 0.0;
          for (std::size_t i = 0; i < n; ++i) d += u(i, c) * v[i];
          for (std::size_t i = 0; i < n; ++i) v[i] -= d * u(i, c);
        }
      }
      const double norm = std::sqrt(std::inner_product(v.begin(), v.end(), v.begin(), 0.0));
      if (norm > best_norm + 1e-12) {
        best_norm = norm;
        best = std::move(v);
      }
      if (best_norm > 0.7) break;
    }
    for (std::size_t i = 0; i < n; ++i) u(i, col) = best[i] / best_norm;
    have[col] = true;
  }
}

// Requires m.rows() >= m.cols().
SvdResult jacobi_tall(const Matrix& m) {
  const std::size_t rows = m.rows();
  const std::size_t n = m.cols();
  Matrix a = m;
  Matrix v = Matrix::identity(n);

  bool converged = n == 1;
  for (int sweep = 0; sweep < kMaxJacobiSweeps && !converged; ++sweep) {
    converged = true;
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double alpha = column_dot(a, p, p);
        const double beta = column_dot(a, q, q);
        const double gamma = column_dot(a, p, q);
        if (alpha == 0.0 || beta == 0.0) continue;
        if (std::abs(gamma) <= static_cast<double>(rows) * kEps * std::sqrt(alpha * beta)) continue;
        converged = false;
        const double zeta = (beta - alpha) / (2.0 * gamma);
        const double t = std::copysign(1.0, zeta) / (std::abs(zeta) + std::sqrt(1.0 + zeta * zeta));
        const double c = 1.0 / std::sqrt(1.0 + t * t);
        const double s = c * t;
        for (std::size_t i = 0; i < rows; ++i) {
          const double ap = a(i, p);
          const double aq = a(i, q);
          a(i, p) = c * ap - s * aq;
          a(i, q) = s * ap + c * aq;
        }
        for (std::size_t i = 0; i < n; ++i) {
          const double vp = v(i, p);
          const double vq = v(i, q);
          v(i, p) = c * vp - s * vq;
          v(i, q) = s * vp + c * vq;
        }
      }
    }
  }
  if (!converged) {
    double off = 0.0;
    for (std::size_t p = 0; p + 1 < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) off += std::pow(column_dot(a, p, q), 2);
    throw NumericalError("svd: Jacobi sweeps did not converge for " + m.shape_string() +
                         ", off-diagonal residual " + std::to_string(std::sqrt(off)));
  }

  std::vector<double> sigma(n);
  for (std::size_t j = 0; j < n; ++j) sigma[j] = std::sqrt(column_dot(a, j, j));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return sigma[x] > sigma[y]; });

  const double smax = sigma[order[0]];
  const double cutoff = static_cast<double>(std::max(rows, n)) * kEps * smax;

  SvdResult out{Matrix(rows, n), std::vector<double>(n), Matrix(n, n)};
  std::vector<bool> filled(n, false);
  for (std::size_t k = 0; k < n; ++k) {
    const std::size_t j = order[k];
    out.singular_values[k] = sigma[j];
    for (std::size_t i = 0; i < n; ++i) out.V(i, k) = v(i, j);
    if (sigma[j] > cutoff && sigma[j] > 0.0) {
      for (std::size_t i = 0; i < rows; ++i) out.U(i, k) = a(i, j) / sigma[j];
      filled[k] = true;
    }
  }
  complete_orthonormal(out.U, filled);

  for (std::size_t k = 0; k < n; ++k) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < rows; ++i)
      if (std::abs(out.U(i, k)) > std::abs(out.U(arg, k))) arg = i;
    if (out.U(arg, k) < 0.0) {
      for (std::size_t i = 0; i < rows; ++i) out.U(i, k) = -out.U(i, k);
      for (std::size_t i = 0; i < n; ++i) out.V(i, k) = -out.V(i, k);
    }
  }
  return out;
}

}  // namespace

SvdResult svd(const Matrix& m) {
  if (m.empty()) throw ShapeError("svd: empty matrix");
  if (!m.all_finite()) throw NumericalError("svd: non-finite input " + m.shape_string());
  if (m.rows() >= m.cols()) return jacobi_tall(m);

  // Wide case: factor the transpose and swap roles, then re-apply the sign
  // convention to the new U.
  SvdResult t = jacobi_tall(transpose(m));
  SvdResult out{std::move(t.V), std::move(t.singular_values), std::move(t.U)};
  for (std::size_t k = 0; k < out.U.cols(); ++k) {
    std::size_t arg = 0;
    for (std::size_t i = 1; i < out.U.rows(); ++i)
      if (std::abs(out.U(i, k)) > std::abs(out.U(arg, k))) arg = i;
    if (out.U(arg, k) < 0.0) {
      for (std::size_t i = 0; i < out.U.rows(); ++i) out.U(i, k) = -out.U(i, k);
      for (std::size_t i = 0; i < out.V.rows(); ++i) out.V(i, k) = -out.V(i, k);
    }
  }
  return out;
}

double default_rank_tol(const Matrix& m, const SvdResult& s) {
  return static_cast<double>(std::max(m.rows(), m.cols())) * kEps * s.singular_values.front();
}

std::size_t numerical_rank(const SvdResult& s, double rank_tol) {
  return static_cast<std::size_t>(std::count_if(s.singular_values.begin(), s.singular_values.end(),
                                                [rank_tol](double v) { return v > rank_tol; }));
}

namespace {

double resolve_tol(const Matrix& m, const SvdResult& s, std::optional<double> rank_tol) {
  if (rank_tol && !(*rank_tol > 0.0)) throw ContractError("rank_tol must be positive");
  return rank_tol.value_or(default_rank_tol(m, s));
}

}  // namespace

Matrix pinv(const Matrix& m, std::optional<double> rank_tol) {
  const SvdResult s = svd(m);
  const double tol = resolve_tol(m, s, rank_tol);
  Matrix out(m.cols(), m.rows());
  for (std::size_t k = 0; k < s.singular_values.size(); ++k) {
    const double sk = s.singular_values[k];
    if (!(sk > tol)) continue;
    const double inv = 1.0 / sk;
    for (std::size_t i = 0; i < m.cols(); ++i) {
      const double vik = s.V(i, k) * inv;
      for (std::size_t j = 0; j < m.rows(); ++j) out(i, j) += vik * s.U(j, k);
    }
  }
  return out;
}

Matrix left_singular_basis(const Matrix& m, std::optional<double> rank_tol) {
  const SvdResult s = svd(m);
  const std::size_t r = numerical_rank(s, resolve_tol(m, s, rank_tol));
  if (r == 0) return Matrix();
  Matrix u(m.rows(), r);
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t k = 0; k < r; ++k) u(i, k) = s.U(i, k);
  return u;
}

Matrix left_projector(const Matrix& m, std::optional<double> rank_tol) {
  const Matrix u = left_singular_basis(m, rank_tol);
  if (u.empty()) return Matrix(m.rows(), m.rows());
  return matmul(u, transpose(u));
}

double spectral_norm(const Matrix& m) { return svd(m).singular_values.front(); }

}  // namespace neat::linalg
