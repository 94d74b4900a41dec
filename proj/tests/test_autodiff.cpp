#include <cmath>
#include <random>

#include "doctest.h"
#include "neat/autodiff.hpp"
#include "neat/errors.hpp"
#include "neat/gradcheck.hpp"

using namespace neat;
using namespace neat::ad;

TEST_CASE("d/dA sum(A B) is ones * B^T") {
  std::mt19937_64 rng(3);
  const Matrix a = gaussian(3, 4, 1.0, rng);
  const Matrix b = gaussian(4, 2, 1.0, rng);
  Tape t;
  Var va = t.parameter(a);
  Var vb = t.parameter(b);
  t.backward(sum(matmul(va, vb)));
  CHECK(distance(va.grad(), matmul(Matrix(3, 2, 1.0), transpose(b))) <= 1e-14);
  CHECK(distance(vb.grad(), matmul(transpose(a), Matrix(3, 2, 1.0))) <= 1e-14);
}

TEST_CASE("elementwise derivatives at known points") {
  CHECK(activate(Activation::relu, -1.0) == 0.0);
  CHECK(activate_derivative(Activation::relu, 2.0) == 1.0);
  CHECK(activate_derivative(Activation::relu, -2.0) == 0.0);
  CHECK(activate(Activation::sine, 0.25) == doctest::Approx(1.0));
  CHECK(activate_derivative(Activation::sine, 0.0) == doctest::Approx(2.0 * M_PI));
}

TEST_CASE("softmax cross entropy of equal logits is log C") {
  Tape t;
  Var logits = t.parameter(Matrix(5, 3, 0.7));
  const std::vector<std::size_t> labels{0, 4, 2};
  Var loss = softmax_cross_entropy(logits, labels);
  CHECK(loss.value()[0] == doctest::Approx(std::log(5.0)));
  t.backward(loss);
  // (softmax - onehot) / batch
  CHECK(logits.grad()(0, 0) == doctest::Approx((0.2 - 1.0) / 3.0));
  CHECK(logits.grad()(1, 0) == doctest::Approx(0.2 / 3.0));
}

TEST_CASE("mse loss value and gradient") {
  Tape t;
  Var p = t.parameter(Matrix{{1.0, 3.0}});
  Var loss = mse_loss(p, t.constant(Matrix{{0.0, 1.0}}));
  CHECK(loss.value()[0] == doctest::Approx(2.5));
  t.backward(loss);
  CHECK(p.grad() == Matrix{{1.0, 2.0}});
}

TEST_CASE("gradients accumulate until zero_grad") {
  Tape t;
  Var x = t.parameter(Matrix{{2.0}});
  Var y = hadamard(x, x);
  t.backward(y);
  t.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(8.0));
  t.zero_grad();
  t.backward(y);
  CHECK(x.grad()[0] == doctest::Approx(4.0));
}

TEST_CASE("backward requires a scalar") {
  Tape t;
  Var x = t.parameter(Matrix(2, 2, 1.0));
  CHECK_THROWS_AS(t.backward(x), ContractError);
}

TEST_CASE("central differences on a quadratic are exact up to rounding") {
  const Matrix x{{0.3, -1.2, 2.0}};
  auto f = [](const Matrix& m) { return m[0] * m[0] + 3.0 * m[1] * m[2]; };
  const Matrix g = finite_diff_grad(f, x);
  CHECK(g[0] == doctest::Approx(0.6).epsilon(1e-9));
  CHECK(g[1] == doctest::Approx(6.0).epsilon(1e-9));
  CHECK(g[2] == doctest::Approx(-3.6).epsilon(1e-9));
  CHECK(gradient_error(1e-9, 0.0) == doctest::Approx(1e-9));
  CHECK(gradient_error(200.0, 198.0) == doctest::Approx(0.01));
}

TEST_CASE("gradcheck passes, and catches every deliberately corrupted rule") {
  GradCheckOptions o;
  o.seed = 17;
  o.rounds = 2;
  const GradCheckReport clean = run_gradcheck(o);
  CHECK(clean.passed());
  CHECK(clean.max_error <= 1e-6);
  for (Op op : {Op::matmul, Op::add, Op::hadamard, Op::relu, Op::sine, Op::transpose, Op::softmax_cross_entropy, Op::mse_loss}) {
    o.fault = op;
    const GradCheckReport bad = run_gradcheck(o);
    CAPTURE(op_name(op));
    CHECK_FALSE(bad.passed());
  }
}
