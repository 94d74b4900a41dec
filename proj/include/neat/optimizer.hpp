#pragma once

#include <cstddef>
#include <vector>

#include "neat/matrix.hpp"

namespace neat::train {

struct OptimizerConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  std::size_t warmup_steps = 100;
};

/// Learning rate for the 1-based step `t` of `total`: linear warmup from zero
/// over warmup_steps, then linear decay reaching zero at step `total`.
double scheduled_lr(const OptimizerConfig& cfg, std::size_t t, std::size_t total);

/// Adaptive moments with decoupled weight decay.
class AdamW {
 public:
  AdamW(OptimizerConfig cfg, std::size_t total_steps);

  /// One update of every parameter from its gradient. Parameters must keep the
  /// same shapes across calls.
  void step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads);

  std::size_t steps_taken() const { return t_; }
  double last_lr() const { return last_lr_; }
  const std::vector<Matrix>& first_moments() const { return m_; }
  const std::vector<Matrix>& second_moments() const { return v_; }

 private:
  OptimizerConfig cfg_;
  std::size_t total_;
  std::size_t t_ = 0;
  double last_lr_ = 0.0;
  std::vector<Matrix> m_;
  std::vector<Matrix> v_;
};

}  // namespace neat::train
