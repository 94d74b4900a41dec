#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "neat/training.hpp"

namespace neat {

enum class ExperimentKind { finetune, compare, depth_sweep, activation_sweep, targeting_sweep };

std::string to_string(ExperimentKind k);
ExperimentKind parse_experiment_kind(const std::string& name);

/// Everything `neat_lab run` needs. Every field has a default; the JSON schema
/// is documented in the README.
struct ExperimentConfig {
  ExperimentKind experiment = ExperimentKind::finetune;
  train::TaskSpec task;

  std::vector<std::size_t> model_hidden{32};  // widths of the pretrained model
  train::TrainConfig pretrain;                // seed is task.seed

  /// adapter.scaling is resolved at parse time: an explicit "scaling", else
  /// "alpha" / r with alpha defaulting to 32.
  train::AdapterPlan adapter;

  train::TrainConfig train;  // seed is overridden per entry of `seeds`
  std::vector<std::uint64_t> seeds{0};

  std::size_t compare_rank = 4;
  train::SweepOptions sweep;

  std::string output_dir;  // empty: $NEAT_LAB_OUT, then ./neat_lab_out
};

ExperimentConfig default_experiment_config();

/// Strict parse: unknown keys, wrong types and out-of-range values throw
/// ConfigError naming the field path (for example "adapter.r").
ExperimentConfig parse_config(const nlohmann::json& doc);

/// Reads and parses a config file. A missing file is a ConfigError naming the path.
ExperimentConfig load_config(const std::string& path);

/// Fully resolved config; parse_config(to_json(c)) reproduces c.
nlohmann::json to_json(const ExperimentConfig& config);

}  // namespace neat
