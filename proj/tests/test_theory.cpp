#include <cmath>
#include <random>

#include "doctest.h"
#include "neat/batteries.hpp"
#include "neat/linalg.hpp"
#include "neat/theory.hpp"

using namespace neat;
using namespace neat::theory;

TEST_CASE("ReLU construction on a hand-sized example") {
  // W0 = diag(1, 2): full column space, so the update must be A B exactly.
  const Matrix w0{{1, 0}, {0, 2}};
  const Matrix a{{1}, {-3}};
  const Matrix b{{2, 5}};
  const NeatPair p = prop1_construct(w0, a, b);
  CHECK(p.theta_in == Matrix{{1, -1}, {-1.5, 1.5}});
  CHECK(p.theta_out == Matrix{{2, 5}, {-2, -5}});
  CHECK(distance(shallow_update(w0, p.theta_in, p.theta_out, ad::Activation::relu), matmul(a, b)) <= 1e-15);
}

TEST_CASE("ReLU construction projects onto the column space of W0") {
  // W0 spans only e1; the e2 component of A B is invisible.
  const Matrix w0{{1, 0}, {0, 0}};
  const Matrix a{{1}, {1}};
  const Matrix b{{1, 1}};
  const NeatPair p = prop1_construct(w0, a, b);
  CHECK(distance(shallow_update(w0, p.theta_in, p.theta_out, ad::Activation::relu), Matrix{{1, 1}, {0, 0}}) <= 1e-15);
}

TEST_CASE("invariant loss ignores the orthogonal complement") {
  std::mt19937_64 rng(8);
  const Matrix w0 = matmul(gaussian(6, 2, 1.0, rng), gaussian(2, 4, 1.0, rng));
  const InvariantLoss loss = build_invariant_loss(w0, 5, 1);
  const Matrix w = gaussian(6, 4, 1.0, rng);
  CHECK(loss(w) == doctest::Approx(loss(matmul(linalg::left_projector(w0), w))).epsilon(1e-12));
  CHECK(loss(add(w0, loss.generator)) <= 1e-20);
}

TEST_CASE("reverse direction reproduces any shallow ReLU update exactly") {
  std::mt19937_64 rng(9);
  const Matrix w0 = gaussian(5, 3, 1.0, rng);
  const Matrix t1 = gaussian(3, 2, 1.0, rng), t2 = gaussian(2, 3, 1.0, rng);
  const LowRankPair lr = prop1_reverse(w0, t1, t2);
  CHECK(distance(matmul(lr.A, lr.B), shallow_update(w0, t1, t2, ad::Activation::relu)) == 0.0);
}

TEST_CASE("prop1 battery on a small sample") {
  const Prop1Battery b = run_prop1_battery(30, 4);
  CHECK(b.passed());
  CHECK(b.rank_deficient > 0);
  CHECK(b.max_reverse_residual <= 1e-12);
}

TEST_CASE("fractional targets and circular distance") {
  CHECK(fractional_target(0.0) == 0.0);
  CHECK(fractional_target(1.0) == doctest::Approx(0.25));
  CHECK(fractional_target(-1.0) == doctest::Approx(0.75));
  CHECK(circular_distance(0.95, 0.05) == doctest::Approx(0.1));
  CHECK(circular_distance(0.2, 0.7) == doctest::Approx(0.5));
}

TEST_CASE("sine search recovers a planted solution") {
  Prop2BatteryOptions o;
  o.planted = true;
  const Prop2Battery b = run_prop2_battery(3, 21, o);
  CHECK(b.passed());
  CHECK(b.max_relative_error <= 1e-10);
}

TEST_CASE("sine search keeps the reported error under its bound") {
  std::mt19937_64 rng(14);
  const Matrix w0 = uniform(6, 4, -1.0, 1.0, rng);
  const Matrix a = gaussian(6, 2, 1.0, rng), b = gaussian(2, 4, 1.0, rng);
  Prop2Options o;
  o.c_max = 200.0;
  o.grid_step = 1e-3;
  const Prop2SearchReport r = prop2_search(w0, a, b, o);
  CHECK(prop2_bound_check(r));
  CHECK(r.achieved_error <= r.construction_error + 1e-12);
  CHECK(r.theta_in.rows() == 4);
  for (std::size_t k = 0; k < 2; ++k) {
    for (std::size_t i = 0; i < 4; ++i)
      if (i != r.column) CHECK(r.theta_in(i, k) == 0.0);
    CHECK(std::abs(r.theta_in(r.column, k)) <= o.c_max);
  }
}
