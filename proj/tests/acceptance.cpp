// Acceptance run: one PASS/FAIL line per criterion, exit status 1 if any fails.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "neat/adapters.hpp"
#include "neat/batteries.hpp"
#include "neat/commands.hpp"
#include "neat/config.hpp"
#include "neat/gradcheck.hpp"
#include "neat/training.hpp"

using namespace neat;
using nlohmann::json;

namespace {

struct Outcome {
  bool ok = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const std::string& title, double limit_seconds, const std::function<Outcome()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = body();
  } catch (const std::exception& e) {
    o = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs <= limit_seconds;
  const bool pass = o.ok && in_time;
  if (!pass) ++failures;
  std::printf("[%s] criterion %d: %s | %s | %.2fs (limit %.0fs)%s\n", pass ? "PASS" : "FAIL", id, title.c_str(),
              o.detail.c_str(), secs, limit_seconds, in_time ? "" : " TIME EXCEEDED");
  std::fflush(stdout);
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3e", v);
  return buf;
}

std::size_t enumerate(const Adapter& a) {
  std::size_t n = 0;
  for (const Matrix* m : parameters(a)) n += m->rows() * m->cols();
  return n;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("neat_acceptance_" + name);
  std::filesystem::remove_all(p);
  return p;
}

// Small multi-layer teacher task shared by the end-to-end criteria.
ExperimentConfig teacher_experiment(ExperimentKind kind) {
  ExperimentConfig c = default_experiment_config();
  c.experiment = kind;
  c.task.d_in = 16;
  c.task.d_out = 8;
  c.task.hidden = {32, 32};
  c.task.n_train = 256;
  c.task.n_val = 64;
  c.task.seed = 11;
  c.model_hidden = {32, 32};
  c.pretrain.epochs = 10;
  c.adapter.adapter.hidden = 4;
  c.adapter.adapter.scaling = 1.0;
  c.adapter.adapter.dropout_p = 0.0;
  c.train.epochs = 5;
  c.train.batch_size = 32;
  c.train.optimizer.lr = 5e-3;
  c.seeds = {0, 1};
  return c;
}

bool all_losses_finite(const json& record, std::size_t& count) {
  count = 0;
  for (const json& run : record.at("runs"))
    for (const json& e : run.at("epochs")) {
      ++count;
      for (const char* key : {"train_loss", "val_loss"}) {
        const json& v = e.at(key);
        if (!v.is_number() || !std::isfinite(v.get<double>())) return false;
      }
    }
  return count > 0;
}

}  // namespace

int main() {
  criterion(1, "gradcheck over seeded random graphs", 60, [] {
    ad::GradCheckOptions o;
    o.seed = 2024;
    o.rounds = 5;
    const auto r = ad::run_gradcheck(o);
    const bool ok = r.passed() && r.graphs >= 100 && r.max_error <= 1e-6;
    return Outcome{ok, std::to_string(r.graphs) + " graphs, " + std::to_string(r.entries) +
                           " entries, max relative error " + sci(r.max_error) + " (<= 1e-6)"};
  });

  theory::Prop1Battery p1;
  criterion(2, "ReLU construction reproduces projected low-rank updates", 30, [&] {
    p1 = theory::run_prop1_battery(200, 7);
    bool ok = p1.trials.size() == 200 && p1.rank_deficient > 0 && p1.rank_deficient < 200;
    double worst_ratio = 0.0;
    for (const auto& t : p1.trials) {
      ok = ok && t.d1 <= 32 && t.d2 <= 16 && t.r <= 4;
      ok = ok && t.forward.residual <= t.forward.tolerance && t.forward.loss_gap <= 1e-9;
      worst_ratio = std::max(worst_ratio, t.forward.residual / t.forward.tolerance);
    }
    return Outcome{ok, "200 instances (" + std::to_string(p1.rank_deficient) + " rank-deficient), max residual " +
                           sci(p1.max_residual) + ", worst residual/tolerance " + sci(worst_ratio) +
                           ", max loss gap " + sci(p1.max_loss_gap) + " (<= 1e-9)"};
  });

  criterion(3, "reverse direction: any shallow ReLU update is low rank", 30, [&] {
    const bool ok = p1.trials.size() == 200 && p1.max_reverse_residual <= 1e-12;
    return Outcome{ok, "200 instances, max residual " + sci(p1.max_reverse_residual) + " (<= 1e-12)"};
  });

  criterion(4, "sine construction approximates random low-rank updates", 120, [] {
    theory::Prop2BatteryOptions o;  // d1 = 6, d2 = 4, r = 2, c_max = 1e4, grid step 1e-4
    const auto b = theory::run_prop2_battery(20, 3, o);
    std::size_t held = 0;
    for (const auto& t : b.trials) held += t.bound_holds ? 1 : 0;
    const bool ok = b.trials.size() == 20 && held == 20 && b.max_relative_error <= 0.1;
    return Outcome{ok, "20 instances, max relative Frobenius error " + sci(b.max_relative_error) +
                           " (<= 0.1), bound dominates on " + std::to_string(held) + "/20"};
  });

  criterion(5, "parameter accounting matches enumeration", 30, [] {
    std::mt19937_64 rng(55);
    std::uniform_int_distribution<std::size_t> dim(1, 40), rank(1, 8), depth(2, 6), coin(0, 1);
    std::size_t ok_count = 0;
    for (int i = 0; i < 50; ++i) {
      AdapterConfig cfg;
      cfg.kind = coin(rng) ? AdapterKind::lora : AdapterKind::neat;
      cfg.hidden = rank(rng);
      cfg.depth = cfg.kind == AdapterKind::lora ? 2 : depth(rng);
      const std::size_t d1 = dim(rng), d2 = dim(rng), r = cfg.hidden, L = cfg.depth;
      const Adapter a = init_adapter(cfg, d1, d2, static_cast<std::uint64_t>(i));
      const std::size_t closed = cfg.kind == AdapterKind::lora ? r * (d1 + d2) : 2 * r * d2 + (L - 2) * r * r;
      if (param_count(a) == enumerate(a) && param_count(cfg, d1, d2) == closed && closed == enumerate(a)) ++ok_count;
    }
    return Outcome{ok_count == 50, std::to_string(ok_count) + "/50 random configs agree"};
  });

  criterion(6, "zero-init identity and merge equivalence", 30, [] {
    std::mt19937_64 rng(66);
    std::uniform_int_distribution<std::size_t> dim(1, 12), rank(1, 5), depth(2, 5), coin(0, 1);
    double worst_identity = 0.0, worst_merge = 0.0;
    for (int i = 0; i < 50; ++i) {
      AdapterConfig cfg;
      cfg.kind = coin(rng) ? AdapterKind::lora : AdapterKind::neat;
      cfg.hidden = rank(rng);
      cfg.depth = cfg.kind == AdapterKind::lora ? 2 : depth(rng);
      cfg.activation = coin(rng) ? ad::Activation::sine : ad::Activation::relu;
      cfg.residual = coin(rng) == 1;
      cfg.scaling = 0.5 + static_cast<double>(i % 4);
      const std::size_t d1 = dim(rng), d2 = dim(rng);
      AdaptedLayer layer{FrozenLinear{gaussian(d1, d2, 1.0, rng)}, init_adapter(cfg, d1, d2, i), 0};
      const Matrix x = gaussian(d2, 5, 1.0, rng);
      const Matrix plain = matmul(layer.base.weight, x);
      worst_identity = std::max(worst_identity, max_abs(subtract(adapted_forward(layer, x, false), plain)));
      // Random, nonzero adapter parameters for the merge probe.
      for (Matrix* m : parameters(*layer.adapter)) *m = gaussian(m->rows(), m->cols(), 0.5, rng);
      const Matrix merged = matmul(merge(layer).weight, x);
      const Matrix live = adapted_forward(layer, x, false);
      worst_merge = std::max(worst_merge, max_abs(subtract(merged, live)) / std::max(1.0, max_abs(live)));
    }
    const bool ok = worst_identity <= 1e-12 && worst_merge <= 1e-12;
    return Outcome{ok, "50 probes each, identity deviation " + sci(worst_identity) + ", merge deviation " +
                           sci(worst_merge) + " (<= 1e-12)"};
  });

  criterion(7, "constructed NEAT tracks LoRA on invariant_shift (d1=64, d2=16, r=4)", 120, [] {
    ExperimentConfig c = default_experiment_config();
    c.experiment = ExperimentKind::compare;
    c.task.kind = train::TaskKind::invariant_shift;
    c.task.d_out = 64;
    c.task.d_in = 16;
    c.task.n_train = 128;
    c.task.n_val = 32;
    c.task.seed = 3;
    c.adapter.adapter.kind = AdapterKind::lora;
    c.adapter.adapter.hidden = 4;
    c.adapter.adapter.scaling = 1.0;
    c.adapter.adapter.dropout_p = 0.0;
    c.compare_rank = 4;
    c.train.epochs = 20;
    c.train.optimizer.lr = 1e-2;
    c.seeds = {0, 1, 2};
    const auto art = cli::run_experiment(c, scratch("compare").string());
    const json& cmp = art.record.at("comparison");
    const double gap = cmp.at("max_constructed_gap").get<double>();
    const bool ok = !cmp.at("exploratory").get<bool>() && gap <= 1e-9;
    return Outcome{ok, "3 seeds x 21 evaluations, max |L_constructed - L_lora| " + sci(gap) + " (<= 1e-9)"};
  });

  criterion(8, "frozen weights untouched and reruns byte-identical", 120, [] {
    ExperimentConfig c = teacher_experiment(ExperimentKind::finetune);
    const auto a = cli::run_experiment(c, scratch("rerun_a").string());
    const auto b = cli::run_experiment(c, scratch("rerun_b").string());
    const std::string ma = slurp(a.metrics_path), mb = slurp(b.metrics_path);
    const bool identical = !ma.empty() && ma == mb;
    const bool frozen = a.frozen_base_intact && b.frozen_base_intact;
    return Outcome{identical && frozen, std::string("W0 checksums ") + (frozen ? "unchanged" : "CHANGED") +
                                            ", metrics.csv (" + std::to_string(ma.size()) + " bytes) " +
                                            (identical ? "identical" : "DIFFERS") + " across reruns"};
  });

  struct Sweep {
    ExperimentKind kind;
    std::string name;
    std::size_t points;
  };
  for (const Sweep& s : {Sweep{ExperimentKind::depth_sweep, "depth {2,4,6}", 3},
                         Sweep{ExperimentKind::activation_sweep, "activation {relu,sine}", 2},
                         Sweep{ExperimentKind::targeting_sweep, "targeting full vs suffix", 2}}) {
    criterion(9, "sweep " + s.name + " end to end", 300, [&] {
      const auto art = cli::run_experiment(teacher_experiment(s.kind), scratch(to_string(s.kind)).string());
      std::size_t evals = 0;
      const bool finite = all_losses_finite(art.record, evals);
      const std::size_t points = art.record.at("sweep").at("points").size();
      return Outcome{finite && points == s.points && art.frozen_base_intact,
                     std::to_string(points) + " points, " + std::to_string(evals) + " evaluations, losses " +
                         (finite ? "finite" : "NOT FINITE")};
    });
  }

  std::printf("%s: %d failing line(s)\n", failures == 0 ? "ALL CRITERIA PASS" : "ACCEPTANCE FAILED", failures);
  return failures == 0 ? 0 : 1;
}
