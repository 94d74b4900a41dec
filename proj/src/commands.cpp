#include "neat/commands.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "neat/batteries.hpp"
#include "neat/checkpoint.hpp"
#include "neat/errors.hpp"
#include "neat/gradcheck.hpp"

namespace neat::cli {

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string sci(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.3e", v);
  return buf;
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IntegrityError("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw IntegrityError("failed writing '" + path.string() + "'");
}

std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json epochs_json(const std::vector<train::EpochRecord>& epochs) {
  json out = json::array();
  for (const auto& e : epochs) {
    json row = {{"epoch", e.epoch}, {"train_loss", e.train_loss}, {"val_loss", e.val_loss}};
    if (e.train_accuracy) row["train_accuracy"] = *e.train_accuracy;
    if (e.val_accuracy) row["val_accuracy"] = *e.val_accuracy;
    out.push_back(row);
  }
  return out;
}

json run_json(const std::string& name, const std::string& arm, std::uint64_t seed, std::size_t params,
              const std::vector<std::string>& warnings, const std::vector<train::EpochRecord>& epochs) {
  return {{"name", name},         {"arm", arm},           {"seed", seed},
          {"param_budget", params}, {"warnings", warnings}, {"epochs", epochs_json(epochs)}};
}

std::string seed_tag(std::uint64_t seed) { return "seed=" + std::to_string(seed); }

// Runs fn(seed) for every seed concurrently; results keep seed order.
template <class F>
auto per_seed(const std::vector<std::uint64_t>& seeds, F fn) {
  std::vector<std::future<decltype(fn(std::uint64_t{}))>> pending;
  for (std::uint64_t s : seeds) pending.push_back(std::async(std::launch::async, fn, s));
  std::vector<decltype(fn(std::uint64_t{}))> out;
  for (auto& f : pending) out.push_back(f.get());
  return out;
}

json shapes_json(const train::BaseModel& base) {
  json out = json::array();
  for (const auto& l : base.layers) out.push_back({l.weight.rows(), l.weight.cols()});
  return out;
}

}  // namespace

std::string resolve_output_dir(const std::optional<std::string>& flag, const std::string& configured) {
  if (flag && !flag->empty()) return *flag;
  if (!configured.empty()) return configured;
  if (const char* env = std::getenv(kOutputEnv); env && *env) return env;
  return "neat_lab_out";
}

std::string metrics_csv(const json& record) {
  std::string csv = "run,seed,epoch,split,loss,accuracy\n";
  for (const json& run : record.at("runs")) {
    const std::string name = run.at("name").get<std::string>();
    const std::string seed = std::to_string(run.at("seed").get<std::uint64_t>());
    for (const json& e : run.at("epochs")) {
      const std::string epoch = std::to_string(e.at("epoch").get<std::size_t>());
      for (const char* split : {"train", "val"}) {
        const std::string key = split;
        csv += name + "," + seed + "," + epoch + "," + key + "," + num(e.at(key + "_loss").get<double>()) + ",";
        if (e.contains(key + "_accuracy")) csv += num(e.at(key + "_accuracy").get<double>());
        csv += "\n";
      }
    }
  }
  return csv;
}

RunArtifacts run_experiment(const ExperimentConfig& config, const std::string& out_dir) {
  const auto started = std::chrono::steady_clock::now();
  RunArtifacts art;
  art.directory = out_dir;
  fs::create_directories(out_dir);

  const train::Dataset task = train::make_task(config.task);
  // The pretrained model learns the unshifted teacher; fine-tuning then has to
  // recover the shift. Other task kinds pretrain on their own data.
  train::TaskSpec pre_spec = task.spec;
  if (pre_spec.kind == train::TaskKind::teacher_regression) pre_spec.shift = 0.0;
  const train::Dataset pre_task =
      pre_spec.kind == train::TaskKind::teacher_regression ? train::make_task(pre_spec) : task;
  train::TrainConfig pre_cfg = config.pretrain;
  pre_cfg.seed = config.task.seed;
  const train::BaseModel base = train::pretrain(pre_task, config.model_hidden, pre_cfg);
  const std::uint64_t before = train::weights_checksum(base);

  json record;
  record["schema_version"] = kRecordSchemaVersion;
  record["tool_version"] = kToolVersion;
  record["config"] = to_json(config);
  record["task"] = {{"kind", train::to_string(task.spec.kind)}, {"d_in", task.train.inputs.rows()},
                    {"n_train", task.train.size()},            {"n_val", task.val.size()},
                    {"classes", task.classes}};
  record["base"] = {{"layers", shapes_json(base)}, {"weights_checksum", hex(before)}};
  json runs = json::array();
  json timing = json::array();
  bool intact = true;

  switch (config.experiment) {
    case ExperimentKind::finetune: {
      auto results = per_seed(config.seeds, [&](std::uint64_t seed) {
        train::TrainConfig cfg = config.train;
        cfg.seed = seed;
        return train::finetune(base, config.adapter, task, cfg);
      });
      for (std::size_t i = 0; i < results.size(); ++i) {
        const auto& r = results[i];
        const std::uint64_t seed = config.seeds[i];
        runs.push_back(run_json(seed_tag(seed), "finetune", seed, r.metrics.param_budget, r.metrics.warnings,
                                r.metrics.epochs));
        timing.push_back({{"name", seed_tag(seed)}, {"wall_seconds", r.metrics.wall_seconds}});
        intact = intact && train::weights_checksum(r.model) == before;
        const fs::path ck = fs::path(out_dir) / ("checkpoint_seed" + std::to_string(seed) + ".ckpt");
        save_checkpoint({r.model, seed, "finetune " + seed_tag(seed)}, ck.string());
        art.checkpoints.push_back(ck.string());
      }
      break;
    }
    case ExperimentKind::compare: {
      const train::ComparisonRecord cmp =
          train::compare_budget(base, task, config.compare_rank, config.adapter, config.train, config.seeds);
      for (const auto& arm : cmp.arms)
        runs.push_back(run_json(arm.arm + "/" + seed_tag(arm.seed), arm.arm, arm.seed, arm.params, {}, arm.epochs));
      const bool gated = !cmp.exploratory;
      record["comparison"] = {{"rank", cmp.rank},
                              {"exploratory", cmp.exploratory},
                              {"max_constructed_gap", cmp.max_constructed_gap},
                              {"tolerance", 1e-9},
                              {"construction_holds", gated ? json(cmp.max_constructed_gap <= 1e-9) : json(nullptr)},
                              {"warnings", cmp.warnings}};
      std::string summary = "arm,seed,params,final_train_loss,final_val_loss\n";
      for (const auto& arm : cmp.arms)
        summary += arm.arm + "," + std::to_string(arm.seed) + "," + std::to_string(arm.params) + "," +
                   num(arm.epochs.back().train_loss) + "," + num(arm.epochs.back().val_loss) + "\n";
      art.summary_path = (fs::path(out_dir) / "summary.csv").string();
      write_file(art.summary_path, summary);
      break;
    }
    case ExperimentKind::depth_sweep:
    case ExperimentKind::activation_sweep:
    case ExperimentKind::targeting_sweep: {
      const auto kind = config.experiment == ExperimentKind::depth_sweep        ? train::SweepKind::depth
                        : config.experiment == ExperimentKind::activation_sweep ? train::SweepKind::activation
                                                                               : train::SweepKind::targeting;
      const train::SweepRecord sweep =
          train::run_sweep(kind, base, task, config.adapter, config.train, config.seeds, config.sweep);
      json points = json::array();
      std::string summary = "point,seeds,params,mean_final_train_loss,mean_final_val_loss\n";
      for (const auto& p : sweep.points) {
        for (std::size_t i = 0; i < p.runs.size(); ++i) {
          const auto& m = p.runs[i];
          runs.push_back(run_json(p.label + "/" + seed_tag(m.seed), p.label, m.seed, m.param_budget, m.warnings,
                                  m.epochs));
          timing.push_back({{"name", p.label + "/" + seed_tag(m.seed)}, {"wall_seconds", m.wall_seconds}});
        }
        const std::size_t params = p.runs.empty() ? 0 : p.runs.front().param_budget;
        points.push_back({{"label", p.label},
                          {"param_budget", params},
                          {"mean_final_train_loss", p.mean_final_train_loss},
                          {"mean_final_val_loss", p.mean_final_val_loss}});
        summary += p.label + "," + std::to_string(p.runs.size()) + "," + std::to_string(params) + "," +
                   num(p.mean_final_train_loss) + "," + num(p.mean_final_val_loss) + "\n";
      }
      record["sweep"] = {{"kind", train::to_string(kind)}, {"points", points}};
      art.summary_path = (fs::path(out_dir) / "summary.csv").string();
      write_file(art.summary_path, summary);
      break;
    }
  }
  record["runs"] = runs;

  const fs::path base_ck = fs::path(out_dir) / "base.ckpt";
  save_checkpoint({train::without_adapters(base), config.task.seed, "pretrained base"}, base_ck.string());
  art.checkpoints.insert(art.checkpoints.begin(), base_ck.string());

  const std::uint64_t after = train::weights_checksum(base);
  intact = intact && after == before;
  art.frozen_base_intact = intact;
  record["frozen_base"] = {{"before", hex(before)}, {"after", hex(after)}, {"unchanged", intact}};

  const std::string csv = metrics_csv(record);
  art.metrics_path = (fs::path(out_dir) / "metrics.csv").string();
  write_file(art.metrics_path, csv);
  json hashes = {{"metrics.csv", hex(fnv1a(csv))}};
  if (!art.summary_path.empty()) hashes["summary.csv"] = hex(fnv1a(read_file(art.summary_path)));
  for (const auto& ck : art.checkpoints) hashes[fs::path(ck).filename().string()] = hex(fnv1a(read_file(ck)));
  record["artifacts"] = hashes;

  // Non-deterministic fields live only here.
  record["timing"] = {
      {"total_wall_seconds", std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count()},
      {"runs", timing}};
  record["timestamp"] = utc_timestamp();

  art.record_path = (fs::path(out_dir) / "run_record.json").string();
  write_file(art.record_path, record.dump(2) + "\n");
  art.record = std::move(record);
  return art;
}

int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err) {
  try {
    ExperimentConfig config = load_config(options.config_path);
    if (options.seed) config.seeds = {*options.seed};
    const std::string dir = resolve_output_dir(options.out_dir, config.output_dir);
    const RunArtifacts art = run_experiment(config, dir);
    out << "experiment " << to_string(config.experiment) << " on " << train::to_string(config.task.kind) << ", "
        << art.record.at("runs").size() << " run(s)\n";
    for (const json& run : art.record.at("runs")) {
      const json& last = run.at("epochs").back();
      out << "  " << run.at("name").get<std::string>() << ": params " << run.at("param_budget").get<std::size_t>()
          << ", final train loss " << sci(last.at("train_loss").get<double>()) << ", val loss "
          << sci(last.at("val_loss").get<double>()) << "\n";
      for (const json& w : run.at("warnings")) err << "warning: " << w.get<std::string>() << "\n";
    }
    if (art.record.contains("comparison")) {
      const json& c = art.record.at("comparison");
      for (const json& w : c.at("warnings")) err << "warning: " << w.get<std::string>() << "\n";
      out << "constructed NEAT vs trained LoRA: max train-loss gap " << sci(c.at("max_constructed_gap").get<double>())
          << (c.at("exploratory").get<bool>() ? " (exploratory task, not gated)\n" : "\n");
      if (!c.at("exploratory").get<bool>() && !c.at("construction_holds").get<bool>()) {
        err << "error: constructed NEAT loss differs from trained LoRA loss by more than 1e-9\n";
        return kExitAssertion;
      }
    }
    out << "wrote " << art.record_path << " and " << art.metrics_path << "\n";
    if (!art.frozen_base_intact) {
      err << "error: frozen base weights changed during the run\n";
      return kExitAssertion;
    }
    return kExitOk;
  } catch (const ConfigError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ParseError& e) {
    err << "input error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ShapeError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const ContractError& e) {
    err << "config error: " << e.what() << "\n";
    return kExitConfig;
  } catch (const DivergenceError& e) {
    err << "training diverged: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const NumericalError& e) {
    err << "numerical failure: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const IntegrityError& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "I/O error: " << e.what() << "\n";
    return kExitIo;
  }
}

int cmd_verify(const VerifyOptions& options, std::ostream& out, std::ostream& err) {
  const bool p1 = options.suite == "prop1" || options.suite == "all";
  const bool p2 = options.suite == "prop2" || options.suite == "all";
  if (!p1 && !p2) {
    err << "usage error: --suite must be prop1, prop2 or all (got '" << options.suite << "')\n";
    return kExitUsage;
  }
  if (options.trials && *options.trials == 0) {
    err << "usage error: --trials must be >= 1\n";
    return kExitUsage;
  }
  json report = {{"schema_version", kRecordSchemaVersion}, {"tool_version", kToolVersion}, {"seed", options.seed}};
  bool passed = true;

  if (p1) {
    const theory::Prop1Battery b = theory::run_prop1_battery(options.trials.value_or(200), options.seed);
    out << "prop1: " << b.trials.size() << " trials (" << b.rank_deficient << " rank-deficient), max residual "
        << sci(b.max_residual) << ", max loss gap " << sci(b.max_loss_gap) << ", max reverse residual "
        << sci(b.max_reverse_residual) << " -> " << (b.passed() ? "PASS" : "FAIL") << "\n";
    for (const auto& f : b.failures) err << "prop1 failure: " << f << "\n";
    json trials = json::array();
    for (const auto& t : b.trials)
      trials.push_back({{"d1", t.d1},
                        {"d2", t.d2},
                        {"r", t.r},
                        {"rank", t.rank},
                        {"rank_deficient", t.rank_deficient},
                        {"residual", t.forward.residual},
                        {"loss_gap", t.forward.loss_gap},
                        {"tolerance", t.forward.tolerance},
                        {"reverse_residual", t.reverse_residual}});
    report["prop1"] = {{"passed", b.passed()},
                       {"max_residual", b.max_residual},
                       {"max_loss_gap", b.max_loss_gap},
                       {"max_reverse_residual", b.max_reverse_residual},
                       {"failures", b.failures},
                       {"trials", trials}};
    passed = passed && b.passed();
  }

  if (p2) {
    theory::Prop2BatteryOptions o;
    o.planted = options.planted;
    const theory::Prop2Battery b = theory::run_prop2_battery(options.trials.value_or(20), options.seed, o);
    std::size_t holds = 0;
    for (const auto& t : b.trials) holds += t.bound_holds;
    out << "prop2" << (options.planted ? " (planted)" : "") << ": " << b.trials.size()
        << " trials, max relative error " << sci(b.max_relative_error) << ", bound holds on " << holds << "/"
        << b.trials.size() << " -> " << (b.passed() ? "PASS" : "FAIL") << "\n";
    for (const auto& f : b.failures) err << "prop2 failure: " << f << "\n";
    for (const auto& w : b.warnings) err << "prop2 warning: " << w << "\n";
    json trials = json::array();
    for (const auto& t : b.trials) {
      const auto& r = t.report;
      json cols = json::array();
      for (const auto& c : r.columns)
        cols.push_back({{"shift", c.shift},
                        {"sign", c.sign},
                        {"scale", c.scale},
                        {"frac_error", c.frac_error},
                        {"max_frac_error", c.max_frac_error},
                        {"sine_error", c.sine_error}});
      trials.push_back({{"column", r.column},
                        {"units", cols},
                        {"achieved_error", r.achieved_error},
                        {"construction_error", r.construction_error},
                        {"relative_error", r.relative_error},
                        {"bound", r.bound},
                        {"b_spectral_norm", r.b_spectral_norm},
                        {"converged", r.converged},
                        {"bound_holds", t.bound_holds},
                        {"grid_step", r.grid_step},
                        {"c_max", r.c_max},
                        {"budget", r.budget},
                        {"coarse_stride", r.coarse_stride},
                        {"used", r.used}});
    }
    report["prop2"] = {{"passed", b.passed()},
                       {"planted", options.planted},
                       {"max_relative_error", b.max_relative_error},
                       {"failures", b.failures},
                       {"warnings", b.warnings},
                       {"trials", trials}};
    passed = passed && b.passed();
  }

  if (options.out_dir) {
    try {
      fs::create_directories(*options.out_dir);
      write_file(fs::path(*options.out_dir) / "verify_report.json", report.dump(2) + "\n");
    } catch (const std::exception& e) {
      err << "I/O error: " << e.what() << "\n";
      return kExitIo;
    }
  }
  return passed ? kExitOk : kExitAssertion;
}

int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err) {
  if (options.rounds == 0 || options.max_dim == 0) {
    err << "usage error: --rounds and --max-dim must be >= 1\n";
    return kExitUsage;
  }
  ad::GradCheckOptions o;
  o.seed = options.seed;
  o.rounds = options.rounds;
  o.max_dim = options.max_dim;
  o.fault = options.corrupt;
  if (o.fault) err << "note: backward rule of op '" << ad::op_name(*o.fault) << "' is deliberately corrupted\n";
  const ad::GradCheckReport r = ad::run_gradcheck(o);
  out << "gradcheck: " << r.graphs << " graphs over " << r.graph_kinds.size() << " kinds, " << r.entries
      << " gradient entries, max relative error " << sci(r.max_error) << " -> " << (r.passed() ? "PASS" : "FAIL")
      << "\n";
  for (const auto& f : r.failures)
    err << "mismatch in graph '" << f.graph << "', leaf " << f.leaf << ", index " << f.index << ": autodiff "
        << num(f.autodiff) << ", finite difference " << num(f.numeric) << ", relative error " << sci(f.error) << "\n";
  return r.passed() ? kExitOk : kExitAssertion;
}

int cmd_inspect(const std::string& path, std::ostream& out, std::ostream& err) {
  try {
    out << checkpoint_summary(load_checkpoint(path));
    return kExitOk;
  } catch (const VersionError& e) {
    err << "version error: " << e.what() << "\n";
    return kExitIo;
  } catch (const IntegrityError& e) {
    err << "integrity error: " << e.what() << "\n";
    return kExitIo;
  }
}

}  // namespace neat::cli
