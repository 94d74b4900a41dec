#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neat/matrix.hpp"

namespace neat::train {

enum class TaskKind { teacher_regression, invariant_shift, csv_classification };

std::string to_string(TaskKind k);
TaskKind parse_task_kind(const std::string& name);

struct TaskSpec {
  TaskKind kind = TaskKind::teacher_regression;
  std::size_t d_in = 16;
  std::size_t d_out = 8;
  std::vector<std::size_t> hidden{32};  // teacher widths; invariant_shift uses d_out as d1
  std::size_t n_train = 256;
  std::size_t n_val = 64;
  double noise = 0.0;
  double shift = 0.5;  // teacher_regression: relative perturbation of the fine-tuning teacher
  std::uint64_t seed = 0;
  std::string csv_path;  // csv_classification only
};

/// Columns are samples: inputs are d_in x n, regression targets d_out x n.
struct Split {
  Matrix inputs;
  Matrix targets;                   // regression only
  std::vector<std::size_t> labels;  // classification only

  std::size_t size() const { return inputs.cols(); }
  bool classification() const { return !labels.empty(); }
};

/// The frozen weights a teacher or an invariant-shift task was generated from.
struct Teacher {
  std::vector<Matrix> weights;  // layer l maps width l to width l+1
  bool relu_between = true;
};

struct Dataset {
  TaskSpec spec;
  Split train;
  Split val;
  std::size_t classes = 0;  // classification only
  /// teacher_regression: the (shifted) teacher generating the targets.
  /// invariant_shift: {W0, U^T}, the planted pretrained layer and the fixed readout.
  std::optional<Teacher> reference;
  Matrix generator;  // invariant_shift: G in Z = U^T (W0 + G) X
};

/// Deterministic given the TaskSpec. Throws ParseError (with line number) for
/// malformed CSV input and ConfigError for invalid dimensions.
Dataset make_task(const TaskSpec& spec);

/// Rows of a classification CSV: header, decimal features, integer label last.
struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> features;
  std::vector<std::size_t> labels;
};

CsvTable read_classification_csv(const std::string& path);

}  // namespace neat::train
