#include "neat/optimizer.hpp"

#include <algorithm>
#include <cmath>

#include "neat/errors.hpp"

namespace neat::train {

double scheduled_lr(const OptimizerConfig& cfg, std::size_t t, std::size_t total) {
  if (t == 0) return 0.0;
  const auto w = static_cast<double>(cfg.warmup_steps);
  const auto td = static_cast<double>(t);
  if (cfg.warmup_steps > 0 && (t <= cfg.warmup_steps || total <= cfg.warmup_steps))
    return cfg.lr * std::min(td, w) / w;
  if (t >= total) return 0.0;
  const double remaining = static_cast<double>(total - t);
  const double span = static_cast<double>(total - cfg.warmup_steps);
  return cfg.lr * remaining / span;
}

AdamW::AdamW(OptimizerConfig cfg, std::size_t total_steps) : cfg_(cfg), total_(total_steps) {
  if (!(cfg_.lr >= 0.0)) throw ConfigError("optimizer.lr must be >= 0");
  if (!(cfg_.beta1 >= 0.0 && cfg_.beta1 < 1.0) || !(cfg_.beta2 >= 0.0 && cfg_.beta2 < 1.0))
    throw ConfigError("optimizer betas must be in [0, 1)");
  if (!(cfg_.eps > 0.0)) throw ConfigError("optimizer.eps must be > 0");
  if (!(cfg_.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay must be >= 0");
}

void AdamW::step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads) {
  if (params.size() != grads.size()) throw ContractError("AdamW: parameter and gradient counts differ");
  if (m_.empty()) {
    for (const Matrix* p : params) {
      m_.emplace_back(p->rows(), p->cols());
      v_.emplace_back(p->rows(), p->cols());
    }
  }
  if (m_.size() != params.size()) throw ContractError("AdamW: parameter list changed between steps");

  ++t_;
  const double lr = scheduled_lr(cfg_, t_, total_);
  last_lr_ = lr;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
  for (std::size_t p = 0; p < params.size(); ++p) {
    Matrix& w = *params[p];
    const Matrix& g = grads[p];
    if (w.rows() != g.rows() || w.cols() != g.cols() || w.rows() != m_[p].rows() || w.cols() != m_[p].cols())
      throw ShapeError("AdamW: parameter " + std::to_string(p) + " " + w.shape_string() + " vs gradient " +
                       g.shape_string());
    Matrix& m = m_[p];
    Matrix& v = v_[p];
    for (std::size_t i = 0; i < w.size(); ++i) {
      m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g[i];
      v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g[i] * g[i];
      if (lr == 0.0) continue;
      const double mhat = m[i] / bc1;
      const double vhat = v[i] / bc2;
      w[i] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w[i]);
    }
  }
}

}  // namespace neat::train
