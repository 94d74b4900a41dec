#include <random>

#include "doctest.h"
#include "neat/adapters.hpp"
#include "neat/errors.hpp"

using namespace neat;

namespace {

AdapterConfig neat_config(std::size_t r, std::size_t depth, ad::Activation act) {
  AdapterConfig c;
  c.hidden = r;
  c.depth = depth;
  c.activation = act;
  return c;
}

std::size_t enumerate(const Adapter& a) {
  std::size_t n = 0;
  for (const Matrix* m : parameters(a))
    for (std::size_t i = 0; i < m->rows(); ++i)
      for (std::size_t j = 0; j < m->cols(); ++j) ++n;
  return n;
}

}  // namespace

TEST_CASE("parameter counts follow the closed forms") {
  // d1 x d2 layer: LoRA r(d1 + d2); NEAT 2 r d2 + (L - 2) r^2.
  AdapterConfig lora;
  lora.kind = AdapterKind::lora;
  lora.hidden = 3;
  CHECK(param_count(lora, 10, 7) == 3 * (10 + 7));
  CHECK(enumerate(init_adapter(lora, 10, 7, 0)) == 51);
  const auto cfg = neat_config(3, 5, ad::Activation::relu);
  CHECK(param_count(cfg, 10, 7) == 2 * 3 * 7 + 3 * 9);
  CHECK(enumerate(init_adapter(cfg, 10, 7, 0)) == param_count(cfg, 10, 7));
}

TEST_CASE("fresh adapters leave the layer unchanged") {
  std::mt19937_64 rng(2);
  for (auto kind : {AdapterKind::neat, AdapterKind::lora}) {
    AdapterConfig cfg = neat_config(4, kind == AdapterKind::lora ? 2 : 3, ad::Activation::sine);
    cfg.kind = kind;
    AdaptedLayer layer{FrozenLinear{gaussian(6, 5, 1.0, rng)}, init_adapter(cfg, 6, 5, 9), 0};
    const Matrix x = gaussian(5, 4, 1.0, rng);
    CHECK(distance(adapted_forward(layer, x, false), matmul(layer.base.weight, x)) == 0.0);
  }
}

TEST_CASE("LoRA delta is s A B") {
  LoraAdapter l{Matrix{{1}, {2}}, Matrix{{3, 4}}, 0.5, 0.0};
  CHECK(lora_delta(l) == Matrix{{1.5, 2.0}, {3.0, 4.0}});
}

TEST_CASE("ReLU updates are invariant to positive rescaling between stages") {
  std::mt19937_64 rng(4);
  FrozenLinear base{gaussian(7, 5, 1.0, rng)};
  NeatAdapter a;
  a.theta_in = gaussian(5, 3, 1.0, rng);
  a.theta_out = gaussian(3, 5, 1.0, rng);
  NeatAdapter b = a;
  // Powers of two keep the comparison exact.
  b.theta_in = scale(a.theta_in, 8.0);
  b.theta_out = scale(a.theta_out, 0.125);
  CHECK(neat_delta(base, a, false) == neat_delta(base, b, false));
}

TEST_CASE("merge folds the update into the frozen weight") {
  std::mt19937_64 rng(6);
  NeatAdapter n;
  n.theta_in = gaussian(4, 2, 1.0, rng);
  n.intermediates.push_back(gaussian(2, 2, 1.0, rng));
  n.theta_out = gaussian(2, 4, 1.0, rng);
  n.residual = true;
  n.scaling = 0.75;
  AdaptedLayer layer{FrozenLinear{gaussian(3, 4, 1.0, rng)}, n, 0};
  const Matrix x = gaussian(4, 6, 1.0, rng);
  CHECK(distance(matmul(merge(layer).weight, x), adapted_forward(layer, x, false)) <= 1e-12);
}

TEST_CASE("incompatible shapes name the offending stage") {
  NeatAdapter n;
  n.theta_in = Matrix(4, 2);
  n.theta_out = Matrix(2, 3);
  try {
    check_compatible(FrozenLinear{Matrix(3, 4)}, n);
    FAIL("expected ShapeError");
  } catch (const ShapeError& e) {
    CHECK(std::string(e.what()).find("theta_out") != std::string::npos);
  }
}

TEST_CASE("invalid hyperparameters are rejected") {
  AdapterConfig cfg;
  cfg.depth = 1;
  CHECK_THROWS_AS(init_adapter(cfg, 3, 3, 0), ConfigError);
  cfg.depth = 3;
  cfg.kind = AdapterKind::lora;
  CHECK_THROWS_AS(init_adapter(cfg, 3, 3, 0), ConfigError);
}
