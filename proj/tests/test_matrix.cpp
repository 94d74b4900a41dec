#include <random>

#include "doctest.h"
#include "neat/errors.hpp"
#include "neat/matrix.hpp"

using namespace neat;

namespace {

Matrix naive_matmul(const Matrix& a, const Matrix& b) {
  Matrix c(a.rows(), b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i)
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double s = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) s += a(i, k) * b(k, j);
      c(i, j) = s;
    }
  return c;
}

}  // namespace

TEST_CASE("matmul agrees with the textbook triple loop") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 40; ++trial) {
    std::uniform_int_distribution<std::size_t> dim(1, 9);
    const std::size_t m = dim(rng), k = dim(rng), n = dim(rng);
    const Matrix a = gaussian(m, k, 1.0, rng);
    const Matrix b = gaussian(k, n, 1.0, rng);
    CHECK(distance(matmul(a, b), naive_matmul(a, b)) <= 1e-13);
  }
}

TEST_CASE("hand-computed 2x2 product and transpose") {
  const Matrix a{{1, 2}, {3, 4}};
  const Matrix b{{5, 6}, {7, 8}};
  CHECK(matmul(a, b) == Matrix{{19, 22}, {43, 50}});
  CHECK(transpose(Matrix{{1, 2, 3}}) == Matrix{{1}, {2}, {3}});
  CHECK(hstack(a, b) == Matrix{{1, 2, 5, 6}, {3, 4, 7, 8}});
  CHECK(vstack(a, b).rows() == 4);
  CHECK(frobenius_norm(Matrix{{3, 4}}) == doctest::Approx(5.0));
  CHECK(sum(a) == 10.0);
  CHECK(max_abs(Matrix{{-7, 2}}) == 7.0);
}

TEST_CASE("shape violations are reported, not silently broadcast") {
  const Matrix a(2, 3), b(2, 3);
  CHECK_THROWS_AS(matmul(a, b), ShapeError);
  CHECK_THROWS_AS(add(a, Matrix(3, 2)), ShapeError);
  CHECK_THROWS_AS(hstack(a, Matrix(3, 1)), ShapeError);
  CHECK_THROWS_AS(Matrix(0, 3), ShapeError);
}

TEST_CASE("checksum sees a single ulp change") {
  std::mt19937_64 rng(1);
  Matrix a = gaussian(4, 4, 1.0, rng);
  const auto before = checksum(a);
  a[7] = std::nextafter(a[7], 10.0);
  CHECK(checksum(a) != before);
}
