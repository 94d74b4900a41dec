#include <cmath>

#include "doctest.h"
#include "neat/errors.hpp"
#include "neat/optimizer.hpp"

using namespace neat;
using namespace neat::train;

TEST_CASE("zero learning rate leaves parameters untouched") {
  OptimizerConfig cfg;
  cfg.lr = 0.0;
  cfg.weight_decay = 0.1;
  AdamW opt(cfg, 10);
  Matrix w{{1.0, -2.0}};
  const Matrix before = w;
  for (int i = 0; i < 5; ++i) opt.step({&w}, {Matrix{{0.3, 0.4}}});
  CHECK(w == before);
}

TEST_CASE("first step moves each coordinate by lr in the gradient's direction") {
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  cfg.warmup_steps = 0;
  AdamW opt(cfg, 1000);
  Matrix w{{1.0, 1.0}};
  opt.step({&w}, {Matrix{{5.0, -0.5}}});
  // Bias-corrected m / sqrt(v) = sign(g) on the first step; lr decays linearly from t = 1.
  const double lr = 0.1 * 999.0 / 1000.0;
  CHECK(w[0] == doctest::Approx(1.0 - lr));
  CHECK(w[1] == doctest::Approx(1.0 + lr));
}

TEST_CASE("weight decay is decoupled from the gradient") {
  OptimizerConfig cfg;
  cfg.lr = 0.1;
  cfg.warmup_steps = 0;
  cfg.weight_decay = 0.5;
  AdamW opt(cfg, 1000);
  Matrix w{{2.0}};
  opt.step({&w}, {Matrix{{0.0}}});
  const double lr = 0.1 * 999.0 / 1000.0;
  CHECK(w[0] == doctest::Approx(2.0 - lr * 0.5 * 2.0));
}

TEST_CASE("warmup then linear decay") {
  OptimizerConfig cfg;
  cfg.lr = 1.0;
  cfg.warmup_steps = 4;
  CHECK(scheduled_lr(cfg, 2, 12) == doctest::Approx(0.5));
  CHECK(scheduled_lr(cfg, 4, 12) == doctest::Approx(1.0));
  CHECK(scheduled_lr(cfg, 8, 12) == doctest::Approx(0.5));
  CHECK(scheduled_lr(cfg, 12, 12) == 0.0);
}

TEST_CASE("shape drift and bad settings are errors") {
  OptimizerConfig cfg;
  AdamW opt(cfg, 10);
  Matrix w(2, 2);
  CHECK_THROWS_AS(opt.step({&w}, {Matrix(2, 3)}), ShapeError);
  cfg.beta1 = 1.0;
  CHECK_THROWS_AS(AdamW(cfg, 10), ConfigError);
}
