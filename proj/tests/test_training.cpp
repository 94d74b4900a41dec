#include <cmath>

#include "doctest.h"
#include "neat/errors.hpp"
#include "neat/training.hpp"

using namespace neat;
using namespace neat::train;

namespace {

struct Fixture {
  Dataset task;
  BaseModel base;
};

Fixture small_teacher(std::uint64_t seed) {
  TaskSpec s;
  s.d_in = 6;
  s.d_out = 3;
  s.hidden = {8};
  s.n_train = 64;
  s.n_val = 16;
  s.seed = seed;
  Fixture f{make_task(s), {}};
  TaskSpec pre = s;
  pre.shift = 0.0;
  TrainConfig cfg;
  cfg.epochs = 5;
  cfg.optimizer.lr = 1e-2;
  cfg.optimizer.warmup_steps = 0;
  cfg.seed = seed;
  f.base = pretrain(make_task(pre), {8}, cfg);
  return f;
}

AdapterPlan neat_plan() {
  AdapterPlan plan;
  plan.adapter.hidden = 2;
  plan.adapter.dropout_p = 0.0;
  return plan;
}

TrainConfig fine(std::size_t epochs, std::uint64_t seed) {
  TrainConfig cfg;
  cfg.epochs = epochs;
  cfg.optimizer.lr = 5e-3;
  cfg.optimizer.warmup_steps = 0;
  cfg.seed = seed;
  return cfg;
}

}  // namespace

TEST_CASE("zero epochs reproduces the frozen model") {
  const Fixture f = small_teacher(1);
  const FinetuneResult r = finetune(f.base, neat_plan(), f.task, fine(0, 0));
  REQUIRE(r.metrics.epochs.size() == 1);
  CHECK(r.metrics.epochs[0].train_loss == doctest::Approx(evaluate(f.base, f.task.train).loss).epsilon(1e-14));
  CHECK(distance(predict(r.model, f.task.val.inputs), predict(f.base, f.task.val.inputs)) == 0.0);
}

TEST_CASE("fine-tuning lowers the training loss on every seed and never touches W0") {
  const Fixture f = small_teacher(2);
  const auto before = weights_checksum(f.base);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const FinetuneResult r = finetune(f.base, neat_plan(), f.task, fine(8, seed));
    CAPTURE(seed);
    CHECK(r.metrics.epochs.back().train_loss < r.metrics.epochs.front().train_loss);
    CHECK(weights_checksum(r.model) == before);
  }
  CHECK(weights_checksum(f.base) == before);
}

TEST_CASE("same seed, same trajectory") {
  const Fixture f = small_teacher(3);
  const auto a = finetune(f.base, neat_plan(), f.task, fine(3, 7)).metrics.epochs;
  const auto b = finetune(f.base, neat_plan(), f.task, fine(3, 7)).metrics.epochs;
  REQUIRE(a.size() == b.size());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i].train_loss == b[i].train_loss);
}

TEST_CASE("merged model matches the adapted forward") {
  const Fixture f = small_teacher(4);
  const FinetuneResult r = finetune(f.base, neat_plan(), f.task, fine(3, 0));
  CHECK(distance(predict(merge(r.model), f.task.val.inputs), predict(r.model, f.task.val.inputs)) <= 1e-12);
}

TEST_CASE("a runaway learning rate is reported as divergence") {
  const Fixture f = small_teacher(5);
  TrainConfig cfg = fine(50, 0);
  cfg.optimizer.lr = 1e200;
  AdapterPlan plan = neat_plan();
  plan.adapter.activation = ad::Activation::relu;
  CHECK_THROWS_AS(finetune(f.base, plan, f.task, cfg), DivergenceError);
}

TEST_CASE("target layers are validated") {
  const Fixture f = small_teacher(6);
  AdapterPlan plan = neat_plan();
  plan.target_layers = {5};
  CHECK_THROWS_AS(finetune(f.base, plan, f.task, fine(1, 0)), ConfigError);
}

TEST_CASE("suffix targeting adapts only the later layers") {
  const Fixture f = small_teacher(7);
  SweepOptions o;
  o.suffix_from = 1;
  const SweepRecord s = run_sweep(SweepKind::targeting, f.base, f.task, neat_plan(), fine(1, 0), {0}, o);
  REQUIRE(s.points.size() == 2);
  CHECK(s.points[1].plan.target_layers == std::vector<std::size_t>{1});
  CHECK(s.points[0].runs[0].param_budget > s.points[1].runs[0].param_budget);
}
