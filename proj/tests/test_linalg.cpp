#include <random>

#include "doctest.h"
#include "neat/linalg.hpp"

using namespace neat;
using namespace neat::linalg;

namespace {

Matrix low_rank(std::size_t m, std::size_t n, std::size_t k, std::mt19937_64& rng) {
  return matmul(gaussian(m, k, 1.0, rng), gaussian(k, n, 1.0, rng));
}

Matrix diag_times(const Matrix& u, const std::vector<double>& s, const Matrix& v) {
  Matrix us = u;
  for (std::size_t i = 0; i < us.rows(); ++i)
    for (std::size_t j = 0; j < us.cols(); ++j) us(i, j) *= s[j];
  return matmul(us, transpose(v));
}

}  // namespace

TEST_CASE("svd reconstructs and has orthonormal factors") {
  std::mt19937_64 rng(11);
  for (auto [m, n] : {std::pair{7, 3}, {3, 7}, {5, 5}, {1, 4}}) {
    const Matrix a = gaussian(m, n, 1.0, rng);
    const SvdResult s = svd(a);
    CHECK(distance(diag_times(s.U, s.singular_values, s.V), a) <= 1e-12);
    const std::size_t k = s.singular_values.size();
    CHECK(distance(matmul(transpose(s.U), s.U), Matrix::identity(k)) <= 1e-12);
    CHECK(distance(matmul(transpose(s.V), s.V), Matrix::identity(k)) <= 1e-12);
    for (std::size_t i = 1; i < k; ++i) CHECK(s.singular_values[i - 1] >= s.singular_values[i]);
  }
}

TEST_CASE("pinv of a diagonal matrix inverts the nonzero entries") {
  const Matrix d{{2, 0, 0}, {0, 0, 0}, {0, 0, -4}};
  CHECK(distance(pinv(d), Matrix{{0.5, 0, 0}, {0, 0, 0}, {0, 0, -0.25}}) <= 1e-15);
  CHECK(spectral_norm(d) == doctest::Approx(4.0));
}

TEST_CASE("Penrose identities on rank-deficient matrices") {
  std::mt19937_64 rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix a = low_rank(9, 6, 1 + trial % 4, rng);
    const Matrix p = pinv(a);
    CHECK(distance(matmul(matmul(a, p), a), a) <= 1e-10 * frobenius_norm(a));
    CHECK(distance(matmul(matmul(p, a), p), p) <= 1e-10 * frobenius_norm(p));
    const Matrix ap = matmul(a, p), pa = matmul(p, a);
    CHECK(distance(ap, transpose(ap)) <= 1e-10);
    CHECK(distance(pa, transpose(pa)) <= 1e-10);
  }
}

TEST_CASE("rank, basis and projector agree") {
  std::mt19937_64 rng(13);
  const Matrix a = low_rank(8, 5, 2, rng);
  const SvdResult s = svd(a);
  CHECK(numerical_rank(s, default_rank_tol(a, s)) == 2);
  const Matrix u = left_singular_basis(a);
  CHECK(u.cols() == 2);
  const Matrix proj = left_projector(a);
  CHECK(distance(matmul(proj, proj), proj) <= 1e-12);
  CHECK(distance(matmul(proj, a), a) <= 1e-12 * frobenius_norm(a));
}
