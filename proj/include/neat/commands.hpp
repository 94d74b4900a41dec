#pragma once

#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "neat/autodiff.hpp"
#include "neat/config.hpp"

namespace neat::cli {

inline constexpr const char* kToolVersion = "0.3.0";
inline constexpr int kRecordSchemaVersion = 1;
inline constexpr const char* kOutputEnv = "NEAT_LAB_OUT";

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitAssertion = 3,
  kExitDivergence = 4,
  kExitIo = 5,
};

/// --out, else the config's output_dir, else $NEAT_LAB_OUT, else ./neat_lab_out.
std::string resolve_output_dir(const std::optional<std::string>& flag, const std::string& configured);

struct RunArtifacts {
  std::string directory;
  std::string record_path;   // run_record.json
  std::string metrics_path;  // metrics.csv
  std::string summary_path;  // summary.csv (compare and sweeps only)
  std::vector<std::string> checkpoints;
  nlohmann::json record;
  bool frozen_base_intact = false;
};

/// Executes one experiment and writes its artifacts into `out_dir` (created
/// if needed). Throws the library's exception types on failure.
RunArtifacts run_experiment(const ExperimentConfig& config, const std::string& out_dir);

/// CSV with header run,seed,epoch,split,loss,accuracy; values printed with
/// 17 significant digits so reruns compare byte for byte.
std::string metrics_csv(const nlohmann::json& record);

struct RunOptions {
  std::string config_path;
  std::optional<std::uint64_t> seed;  // replaces the config's seed list
  std::optional<std::string> out_dir;
};

struct VerifyOptions {
  std::string suite = "all";              // prop1 | prop2 | all
  std::optional<std::size_t> trials;      // default: 200 for prop1, 20 for prop2
  std::uint64_t seed = 0;
  bool planted = false;                   // prop2 planted-solution mode
  std::optional<std::string> out_dir;     // writes verify_report.json when set
};

struct GradcheckOptions {
  std::uint64_t seed = 0;
  std::size_t rounds = 5;
  std::size_t max_dim = 6;
  std::optional<ad::Op> corrupt;  // negative-control hook
};

// Each command reports on `out` / `err` and maps failures to an ExitCode.
int cmd_run(const RunOptions& options, std::ostream& out, std::ostream& err);
int cmd_verify(const VerifyOptions& options, std::ostream& out, std::ostream& err);
int cmd_gradcheck(const GradcheckOptions& options, std::ostream& out, std::ostream& err);
int cmd_inspect(const std::string& checkpoint_path, std::ostream& out, std::ostream& err);

}  // namespace neat::cli
