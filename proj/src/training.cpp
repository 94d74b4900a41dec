#include "neat/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <future>
#include <numeric>
#include <random>
#include <thread>

#include "neat/errors.hpp"
#include "neat/theory.hpp"

namespace neat::train {

namespace {

std::mt19937_64 derived_rng(std::uint64_t seed, std::uint64_t a, std::uint64_t b = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(b)};
  return std::mt19937_64(seq);
}

enum Purpose : std::uint64_t { kInit = 11, kShuffle = 12, kDropout = 13, kPretrainInit = 14 };

// Runs f(0..n-1) on up to hardware_concurrency threads; results keep index order.
template <class F>
auto parallel_map(std::size_t n, F f) -> std::vector<decltype(f(std::size_t{0}))> {
  using R = decltype(f(std::size_t{0}));
  std::vector<R> out;
  out.reserve(n);
  const std::size_t width = std::max<std::size_t>(1, std::thread::hardware_concurrency());
  for (std::size_t begin = 0; begin < n; begin += width) {
    std::vector<std::future<R>> wave;
    for (std::size_t i = begin; i < std::min(n, begin + width); ++i) wave.push_back(std::async(std::launch::async, f, i));
    for (auto& fut : wave) out.push_back(fut.get());
  }
  return out;
}

Split take(const Split& s, const std::vector<std::size_t>& cols) {
  Split out;
  out.inputs = Matrix(s.inputs.rows(), cols.size());
  for (std::size_t j = 0; j < cols.size(); ++j)
    for (std::size_t i = 0; i < s.inputs.rows(); ++i) out.inputs(i, j) = s.inputs(i, cols[j]);
  if (s.classification()) {
    for (std::size_t c : cols) out.labels.push_back(s.labels[c]);
  } else {
    out.targets = Matrix(s.targets.rows(), cols.size());
    for (std::size_t j = 0; j < cols.size(); ++j)
      for (std::size_t i = 0; i < s.targets.rows(); ++i) out.targets(i, j) = s.targets(i, cols[j]);
  }
  return out;
}

ad::Var record_loss(ad::Tape& tape, ad::Var outputs, const Split& split) {
  if (split.classification()) return ad::softmax_cross_entropy(outputs, split.labels);
  return ad::mse_loss(outputs, tape.constant(split.targets));
}

ad::Var record_model_forward(ad::Tape& tape, const AdaptedModel& model, const std::vector<LayerVars>& vars, ad::Var x,
                             bool training, std::mt19937_64* rng) {
  ad::Var h = x;
  for (std::size_t l = 0; l < model.layers.size(); ++l) {
    h = record_adapted_forward(tape, model.layers[l], vars[l], h, training, rng);
    if (model.hidden_activation && l + 1 < model.layers.size()) h = ad::activate(h, *model.hidden_activation);
  }
  return h;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t n, std::size_t batch, std::mt19937_64* rng) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (rng) std::shuffle(order.begin(), order.end(), *rng);
  std::vector<std::vector<std::size_t>> out;
  for (std::size_t b = 0; b < n; b += batch)
    out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(b),
                     order.begin() + static_cast<std::ptrdiff_t>(std::min(n, b + batch)));
  return out;
}

std::size_t effective_batch(const Dataset& task, const TrainConfig& cfg) {
  if (cfg.full_batch || task.spec.kind == TaskKind::invariant_shift) return task.train.size();
  if (cfg.batch_size == 0) throw ConfigError("train.batch_size must be >= 1");
  return std::min(cfg.batch_size, task.train.size());
}

EpochRecord record_epoch(std::size_t epoch, const AdaptedModel& model, const Dataset& task) {
  const EvalMetrics tr = evaluate(model, task.train);
  const EvalMetrics va = evaluate(model, task.val);
  return {epoch, tr.loss, va.loss, tr.accuracy, va.accuracy};
}

void require_finite(double loss, std::size_t step) {
  if (!std::isfinite(loss)) throw DivergenceError("non-finite training loss", step);
}

std::uint64_t mix(std::uint64_t h, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) {
    h ^= (v >> (8 * i)) & 0xFF;
    h *= 1099511628211ULL;
  }
  return h;
}

double mean_of(const std::vector<RunMetrics>& runs, bool val) {
  double s = 0.0;
  for (const auto& r : runs) s += val ? r.epochs.back().val_loss : r.epochs.back().train_loss;
  return runs.empty() ? 0.0 : s / static_cast<double>(runs.size());
}

}  // namespace

AdaptedModel without_adapters(const BaseModel& base) {
  AdaptedModel m;
  m.hidden_activation = base.hidden_activation;
  for (std::size_t l = 0; l < base.layers.size(); ++l) m.layers.push_back({base.layers[l], std::nullopt, l});
  return m;
}

BaseModel merge(const AdaptedModel& model) {
  BaseModel out;
  out.hidden_activation = model.hidden_activation;
  for (const auto& layer : model.layers) out.layers.push_back(layer.adapter ? neat::merge(layer) : layer.base);
  return out;
}

Matrix predict(const BaseModel& model, const Matrix& inputs) { return predict(without_adapters(model), inputs); }

Matrix predict(const AdaptedModel& model, const Matrix& inputs) {
  ad::Tape tape;
  std::vector<LayerVars> vars;
  for (const auto& layer : model.layers) vars.push_back(bind_layer(tape, layer, false));
  return record_model_forward(tape, model, vars, tape.constant(inputs), false, nullptr).value();
}

EvalMetrics evaluate_predictions(const Matrix& outputs, const Split& split) {
  if (split.size() == 0) throw ContractError("evaluate: empty split");
  ad::Tape tape;
  EvalMetrics m;
  m.loss = record_loss(tape, tape.constant(outputs), split).value()[0];
  if (split.classification()) {
    std::size_t correct = 0;
    for (std::size_t j = 0; j < outputs.cols(); ++j) {
      std::size_t arg = 0;
      for (std::size_t i = 1; i < outputs.rows(); ++i)
        if (outputs(i, j) > outputs(arg, j)) arg = i;
      correct += arg == split.labels[j];
    }
    m.accuracy = static_cast<double>(correct) / static_cast<double>(outputs.cols());
  }
  return m;
}

EvalMetrics evaluate(const BaseModel& model, const Split& split) {
  return evaluate_predictions(predict(model, split.inputs), split);
}

EvalMetrics evaluate(const AdaptedModel& model, const Split& split) {
  return evaluate_predictions(predict(model, split.inputs), split);
}

std::uint64_t weights_checksum(const BaseModel& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& l : model.layers) h = mix(h, checksum(l.weight));
  return h;
}

std::uint64_t weights_checksum(const AdaptedModel& model) {
  std::uint64_t h = 1469598103934665603ULL;
  for (const auto& l : model.layers) h = mix(h, checksum(l.base.weight));
  return h;
}

BaseModel pretrain(const Dataset& task, const std::vector<std::size_t>& hidden, const TrainConfig& cfg) {
  if (task.spec.kind == TaskKind::invariant_shift) {
    const Teacher& ref = *task.reference;
    BaseModel m;
    m.hidden_activation = std::nullopt;
    for (const auto& w : ref.weights) m.layers.push_back({w});
    return m;
  }

  std::vector<std::size_t> widths{task.train.inputs.rows()};
  widths.insert(widths.end(), hidden.begin(), hidden.end());
  widths.push_back(task.train.classification() ? task.classes : task.train.targets.rows());

  auto init = derived_rng(cfg.seed, kPretrainInit);
  std::vector<Matrix> weights;
  for (std::size_t l = 0; l + 1 < widths.size(); ++l) {
    if (widths[l] == 0 || widths[l + 1] == 0) throw ConfigError("model widths must be >= 1");
    weights.push_back(gaussian(widths[l + 1], widths[l], 1.0 / std::sqrt(static_cast<double>(widths[l])), init));
  }

  const std::size_t batch = effective_batch(task, cfg);
  const std::size_t per_epoch = (task.train.size() + batch - 1) / batch;
  AdamW opt(cfg.optimizer, cfg.epochs * per_epoch);
  auto shuffle = derived_rng(cfg.seed, kShuffle, 1);
  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    for (const auto& cols : make_batches(task.train.size(), batch, &shuffle)) {
      ++step;
      const Split b = take(task.train, cols);
      ad::Tape tape;
      std::vector<ad::Var> params;
      for (const auto& w : weights) params.push_back(tape.parameter(w));
      ad::Var loss;
      try {
        ad::Var h = tape.constant(b.inputs);
        for (std::size_t l = 0; l < params.size(); ++l) {
          h = ad::matmul(params[l], h);
          if (l + 1 < params.size()) h = ad::activate(h, ad::Activation::relu);
        }
        loss = record_loss(tape, h, b);
      } catch (const NumericalError& e) {
        throw DivergenceError(std::string("pretrain: ") + e.what(), step);
      }
      require_finite(loss.value()[0], step);
      tape.backward(loss);
      std::vector<Matrix*> ptrs;
      std::vector<Matrix> grads;
      for (std::size_t l = 0; l < weights.size(); ++l) {
        ptrs.push_back(&weights[l]);
        grads.push_back(params[l].grad());
      }
      opt.step(ptrs, grads);
      for (const auto& w : weights)
        if (!w.all_finite()) throw DivergenceError("pretrain: non-finite weights", step);
    }
  }

  BaseModel m;
  m.hidden_activation = ad::Activation::relu;
  for (auto& w : weights) m.layers.push_back({std::move(w)});
  return m;
}

std::vector<std::size_t> resolve_targets(const AdapterPlan& plan, std::size_t layer_count) {
  std::vector<std::size_t> targets = plan.target_layers;
  if (targets.empty()) {
    targets.resize(layer_count);
    std::iota(targets.begin(), targets.end(), 0);
  }
  std::sort(targets.begin(), targets.end());
  targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
  for (std::size_t t : targets)
    if (t >= layer_count)
      throw ConfigError("adapter target layer " + std::to_string(t) + " does not exist (model has " +
                        std::to_string(layer_count) + " layers)");
  return targets;
}

FinetuneResult finetune(const BaseModel& base, const AdapterPlan& plan, const Dataset& task, const TrainConfig& cfg,
                        const EpochCallback& on_epoch, const AdaptedModel* initial) {
  const auto started = std::chrono::steady_clock::now();
  FinetuneResult result;
  RunMetrics& metrics = result.metrics;
  metrics.seed = cfg.seed;

  AdaptedModel& model = result.model;
  if (initial) {
    if (initial->layers.size() != base.layers.size())
      throw ContractError("finetune: resumed model has a different layer count");
    model = *initial;
  } else {
    model = without_adapters(base);
    for (std::size_t l : resolve_targets(plan, base.layers.size())) {
      const FrozenLinear& layer = base.layers[l];
      auto w = adapter_warnings(plan.adapter, layer.out_dim(), layer.in_dim());
      for (auto& s : w) metrics.warnings.push_back("layer " + std::to_string(l) + ": " + s);
      auto rng = derived_rng(cfg.seed, kInit, l);
      model.layers[l].adapter = init_adapter(plan.adapter, layer.out_dim(), layer.in_dim(), rng());
    }
  }
  for (const auto& layer : model.layers)
    if (layer.adapter) {
      check_compatible(layer.base, *layer.adapter);
      metrics.param_budget += param_count(*layer.adapter);
    }

  metrics.epochs.push_back(record_epoch(0, model, task));
  if (on_epoch) on_epoch(0, model);

  const std::size_t batch = effective_batch(task, cfg);
  const std::size_t per_epoch = (task.train.size() + batch - 1) / batch;
  AdamW opt(cfg.optimizer, cfg.epochs * per_epoch);
  auto shuffle = derived_rng(cfg.seed, kShuffle);
  auto dropout = derived_rng(cfg.seed, kDropout);
  const bool shuffled = batch < task.train.size();

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
    for (const auto& cols : make_batches(task.train.size(), batch, shuffled ? &shuffle : nullptr)) {
      ++step;
      const Split b = take(task.train, cols);
      ad::Tape tape;
      std::vector<LayerVars> vars;
      for (const auto& layer : model.layers) vars.push_back(bind_layer(tape, layer, true));
      ad::Var loss;
      try {
        ad::Var out = record_model_forward(tape, model, vars, tape.constant(b.inputs), true, &dropout);
        loss = record_loss(tape, out, b);
      } catch (const NumericalError& e) {
        throw DivergenceError(std::string("finetune: ") + e.what(), step);
      }
      require_finite(loss.value()[0], step);
      tape.backward(loss);

      std::vector<Matrix*> ptrs;
      std::vector<Matrix> grads;
      for (std::size_t l = 0; l < model.layers.size(); ++l) {
        if (!model.layers[l].adapter) continue;
        auto params = parameters(*model.layers[l].adapter);
        for (std::size_t k = 0; k < params.size(); ++k) {
          ptrs.push_back(params[k]);
          grads.push_back(vars[l].params[k].grad());
        }
      }
      opt.step(ptrs, grads);
      for (const Matrix* p : ptrs)
        if (!p->all_finite()) throw DivergenceError("finetune: non-finite adapter parameters", step);
    }
    metrics.epochs.push_back(record_epoch(epoch, model, task));
    require_finite(metrics.epochs.back().train_loss, step);
    if (on_epoch) on_epoch(epoch, model);
  }
  metrics.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

AdaptedModel construct_neat_from_lora(const AdaptedModel& lora_model) {
  AdaptedModel out = lora_model;
  for (auto& layer : out.layers) {
    if (!layer.adapter) continue;
    const auto* lora = std::get_if<LoraAdapter>(&*layer.adapter);
    if (!lora) throw ContractError("construct_neat_from_lora: layer " + std::to_string(layer.layer_index) +
                                   " does not carry a LoRA adapter");
    const theory::NeatPair theta =
        theory::prop1_construct(layer.base.weight, scale(lora->A, lora->scaling), lora->B);
    NeatAdapter n;
    n.theta_in = theta.theta_in;
    n.theta_out = theta.theta_out;
    n.activation = ad::Activation::relu;
    n.scaling = 1.0;
    layer.adapter = n;
  }
  return out;
}

ComparisonRecord compare_budget(const BaseModel& base, const Dataset& task, std::size_t r, const AdapterPlan& plan,
                                const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds) {
  if (r == 0) throw ConfigError("compare: rank must be >= 1");
  ComparisonRecord record;
  record.rank = r;
  record.exploratory = task.spec.kind != TaskKind::invariant_shift;

  AdapterPlan lora_plan = plan;
  lora_plan.adapter.kind = AdapterKind::lora;
  lora_plan.adapter.hidden = r;
  lora_plan.adapter.depth = 2;
  lora_plan.adapter.output_activation = false;
  lora_plan.adapter.residual = false;
  AdapterPlan neat_plan = plan;
  neat_plan.adapter.kind = AdapterKind::neat;
  neat_plan.adapter.hidden = 2 * r;
  neat_plan.adapter.depth = 2;
  neat_plan.adapter.activation = ad::Activation::relu;
  neat_plan.adapter.output_activation = false;
  neat_plan.adapter.residual = false;
  if (task.spec.kind == TaskKind::invariant_shift && plan.target_layers.empty()) {
    lora_plan.target_layers = {0};
    neat_plan.target_layers = {0};
  }

  struct SeedResult {
    ArmTrajectory lora, neat, constructed;
    double gap = 0.0;
  };
  auto run_seed = [&](std::size_t i) {
    TrainConfig c = cfg;
    c.seed = seeds[i];
    SeedResult s;
    s.constructed.arm = "neat_constructed";
    s.constructed.seed = seeds[i];
    auto on_epoch = [&](std::size_t epoch, const AdaptedModel& m) {
      const AdaptedModel built = construct_neat_from_lora(m);
      EpochRecord rec = record_epoch(epoch, built, task);
      if (s.constructed.params == 0)
        for (const auto& l : built.layers)
          if (l.adapter) s.constructed.params += param_count(*l.adapter);
      s.constructed.epochs.push_back(rec);
    };
    FinetuneResult lora = finetune(base, lora_plan, task, c, on_epoch);
    s.lora = {"lora", seeds[i], lora.metrics.param_budget, lora.metrics.epochs};
    FinetuneResult neat = finetune(base, neat_plan, task, c);
    s.neat = {"neat", seeds[i], neat.metrics.param_budget, neat.metrics.epochs};
    for (std::size_t e = 0; e < s.lora.epochs.size(); ++e)
      s.gap = std::max(s.gap, std::abs(s.lora.epochs[e].train_loss - s.constructed.epochs[e].train_loss));
    return s;
  };

  for (auto& s : parallel_map(seeds.size(), run_seed)) {
    if (s.lora.params != s.neat.params && record.warnings.empty())
      record.warnings.push_back("budget mismatch: LoRA rank " + std::to_string(r) + " trains " +
                                std::to_string(s.lora.params) + " parameters, NEAT with " + std::to_string(2 * r) +
                                " hidden units trains " + std::to_string(s.neat.params));
    record.max_constructed_gap = std::max(record.max_constructed_gap, s.gap);
    record.arms.push_back(std::move(s.lora));
    record.arms.push_back(std::move(s.neat));
    record.arms.push_back(std::move(s.constructed));
  }
  return record;
}

std::string to_string(SweepKind k) {
  switch (k) {
    case SweepKind::depth: return "depth_sweep";
    case SweepKind::activation: return "activation_sweep";
    case SweepKind::targeting: return "targeting_sweep";
  }
  return "unknown";
}

SweepKind parse_sweep_kind(const std::string& name) {
  for (SweepKind k : {SweepKind::depth, SweepKind::activation, SweepKind::targeting})
    if (to_string(k) == name) return k;
  throw ConfigError("unknown sweep '" + name + "'");
}

SweepRecord run_sweep(SweepKind kind, const BaseModel& base, const Dataset& task, const AdapterPlan& plan,
                      const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds, const SweepOptions& options) {
  SweepRecord record;
  record.kind = kind;
  switch (kind) {
    case SweepKind::depth:
      for (std::size_t d : options.depths) {
        AdapterPlan p = plan;
        p.adapter.kind = AdapterKind::neat;
        p.adapter.depth = d;
        record.points.push_back({"depth=" + std::to_string(d), p, {}, 0.0, 0.0});
      }
      break;
    case SweepKind::activation:
      for (ad::Activation a : options.activations) {
        AdapterPlan p = plan;
        p.adapter.kind = AdapterKind::neat;
        p.adapter.activation = a;
        record.points.push_back({"activation=" + std::string(ad::to_string(a)), p, {}, 0.0, 0.0});
      }
      break;
    case SweepKind::targeting: {
      const std::size_t n = base.layers.size();
      const std::size_t from = options.suffix_from.value_or(n / 3);
      if (from >= n) throw ConfigError("targeting sweep: suffix start " + std::to_string(from) + " leaves no layers");
      AdapterPlan full = plan;
      full.target_layers.clear();
      AdapterPlan suffix = plan;
      suffix.target_layers.clear();
      for (std::size_t l = from; l < n; ++l) suffix.target_layers.push_back(l);
      record.points.push_back({"layers=all", full, {}, 0.0, 0.0});
      record.points.push_back({"layers=" + std::to_string(from) + ".." + std::to_string(n - 1), suffix, {}, 0.0, 0.0});
      break;
    }
  }

  const std::size_t trials = record.points.size() * seeds.size();
  auto results = parallel_map(trials, [&](std::size_t i) {
    TrainConfig c = cfg;
    c.seed = seeds[i % seeds.size()];
    return finetune(base, record.points[i / seeds.size()].plan, task, c).metrics;
  });
  for (std::size_t i = 0; i < trials; ++i) record.points[i / seeds.size()].runs.push_back(std::move(results[i]));
  for (auto& p : record.points) {
    p.mean_final_train_loss = mean_of(p.runs, false);
    p.mean_final_val_loss = mean_of(p.runs, true);
  }
  return record;
}

}  // namespace neat::train
