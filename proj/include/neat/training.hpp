#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "neat/adapters.hpp"
#include "neat/optimizer.hpp"
#include "neat/tasks.hpp"

namespace neat::train {

/// A stack of frozen linear layers with an optional activation between
/// consecutive layers (none after the last).
struct BaseModel {
  std::vector<FrozenLinear> layers;
  std::optional<ad::Activation> hidden_activation = ad::Activation::relu;
};

struct AdaptedModel {
  std::vector<AdaptedLayer> layers;
  std::optional<ad::Activation> hidden_activation = ad::Activation::relu;
};

AdaptedModel without_adapters(const BaseModel& base);
/// Folds every adapter into its layer (evaluation-mode update).
BaseModel merge(const AdaptedModel& model);

Matrix predict(const BaseModel& model, const Matrix& inputs);
Matrix predict(const AdaptedModel& model, const Matrix& inputs);

struct EvalMetrics {
  double loss = 0.0;
  std::optional<double> accuracy;  // classification only
};

/// Evaluation mode (dropout off). Mean squared error for regression splits,
/// mean cross-entropy plus argmax accuracy for classification splits.
EvalMetrics evaluate(const BaseModel& model, const Split& split);
EvalMetrics evaluate(const AdaptedModel& model, const Split& split);
EvalMetrics evaluate_predictions(const Matrix& outputs, const Split& split);

struct TrainConfig {
  std::size_t epochs = 1;
  std::size_t batch_size = 16;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;
  /// Full-batch steps; always on for invariant_shift tasks.
  bool full_batch = false;
};

struct AdapterPlan {
  AdapterConfig adapter;
  std::vector<std::size_t> target_layers;  // empty: every layer
};

struct EpochRecord {
  std::size_t epoch = 0;  // 0 is the evaluation before any update
  double train_loss = 0.0;
  double val_loss = 0.0;
  std::optional<double> train_accuracy;
  std::optional<double> val_accuracy;
};

struct RunMetrics {
  std::vector<EpochRecord> epochs;
  double wall_seconds = 0.0;
  std::size_t param_budget = 0;
  std::uint64_t seed = 0;
  std::vector<std::string> warnings;
};

/// Uniform checksum over every frozen weight of a model.
std::uint64_t weights_checksum(const BaseModel& model);
std::uint64_t weights_checksum(const AdaptedModel& model);

/// Trains a fresh MLP (d_in -> hidden... -> d_out, ReLU between) from a seeded
/// random init and returns it frozen. For invariant_shift tasks the planted
/// pretrained layer and its fixed readout are returned unchanged instead.
/// Throws DivergenceError if the loss becomes non-finite.
BaseModel pretrain(const Dataset& task, const std::vector<std::size_t>& hidden, const TrainConfig& cfg);

using EpochCallback = std::function<void(std::size_t epoch, const AdaptedModel&)>;

struct FinetuneResult {
  RunMetrics metrics;
  AdaptedModel model;
};

/// Optimizes adapter parameters only; frozen weights are never written.
/// `initial` resumes from existing adapters instead of a fresh zero-output init.
FinetuneResult finetune(const BaseModel& base, const AdapterPlan& plan, const Dataset& task, const TrainConfig& cfg,
                        const EpochCallback& on_epoch = {}, const AdaptedModel* initial = nullptr);

std::vector<std::size_t> resolve_targets(const AdapterPlan& plan, std::size_t layer_count);

// Matched-budget comparison of LoRA rank r against NEAT with 2r hidden units.

struct ArmTrajectory {
  std::string arm;  // "lora", "neat", "neat_constructed"
  std::uint64_t seed = 0;
  std::size_t params = 0;
  std::vector<EpochRecord> epochs;
};

struct ComparisonRecord {
  bool exploratory = false;  // task does not satisfy the invariance hypothesis
  std::size_t rank = 0;
  std::vector<ArmTrajectory> arms;  // ordered by (seed, arm)
  /// max over seeds and epochs of |train loss(constructed NEAT) - train loss(LoRA)|.
  double max_constructed_gap = 0.0;
  std::vector<std::string> warnings;
};

ComparisonRecord compare_budget(const BaseModel& base, const Dataset& task, std::size_t r, const AdapterPlan& plan,
                                const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds);

/// NEAT parameters reproducing each LoRA layer's update projected onto col(W0).
AdaptedModel construct_neat_from_lora(const AdaptedModel& lora_model);

// Experiment-shape sweeps.

enum class SweepKind { depth, activation, targeting };

std::string to_string(SweepKind k);
SweepKind parse_sweep_kind(const std::string& name);

struct SweepPoint {
  std::string label;
  AdapterPlan plan;
  std::vector<RunMetrics> runs;  // one per seed, in seed order
  double mean_final_train_loss = 0.0;
  double mean_final_val_loss = 0.0;
};

struct SweepRecord {
  SweepKind kind = SweepKind::depth;
  std::vector<SweepPoint> points;
};

struct SweepOptions {
  std::vector<std::size_t> depths{2, 4, 6};
  std::vector<ad::Activation> activations{ad::Activation::relu, ad::Activation::sine};
  /// Suffix targeting adapts layers [suffix_from, n); default n / 3.
  std::optional<std::size_t> suffix_from;
};

SweepRecord run_sweep(SweepKind kind, const BaseModel& base, const Dataset& task, const AdapterPlan& plan,
                      const TrainConfig& cfg, const std::vector<std::uint64_t>& seeds, const SweepOptions& options = {});

}  // namespace neat::train
