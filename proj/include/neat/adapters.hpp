#pragma once

// NEAT and LoRA weight-update adapters on top of a frozen linear layer.
//
// Orientation follows y = W x with W of shape d_out x d_in (d1 x d2) and
// inputs stored column-wise (d_in x batch).
//
// NEAT computes the update from the frozen weight itself:
//   H0      = act(W0 * theta_in)                       (d1 x r)
//   H(k+1)  = H(k) + act(H(k) * theta_k)  (residual)    or act(H(k) * theta_k)
//   dW      = s * (H_last * theta_out)                  (d1 x d2)
// with an optional activation on H_last * theta_out before scaling. In
// training mode, inverted dropout is applied to H0.
//
// LoRA computes dW = s * A * B; its training-mode dropout acts on the layer
// input of the adapter path only.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "neat/autodiff.hpp"
#include "neat/matrix.hpp"

namespace neat {

struct FrozenLinear {
  Matrix weight;  // d_out x d_in

  std::size_t out_dim() const { return weight.rows(); }
  std::size_t in_dim() const { return weight.cols(); }
};

struct NeatAdapter {
  Matrix theta_in;                  // d_in x r
  std::vector<Matrix> intermediates;  // (depth - 2) matrices, r x r
  Matrix theta_out;                 // r x d_in
  ad::Activation activation = ad::Activation::relu;
  double scaling = 1.0;
  bool residual = false;
  double dropout_p = 0.0;
  bool output_activation = false;

  std::size_t hidden() const { return theta_in.cols(); }
  std::size_t depth() const { return 2 + intermediates.size(); }
};

struct LoraAdapter {
  Matrix A;  // d_out x r
  Matrix B;  // r x d_in
  double scaling = 1.0;
  double dropout_p = 0.0;

  std::size_t rank() const { return A.cols(); }
};

using Adapter = std::variant<NeatAdapter, LoraAdapter>;

enum class AdapterKind { neat, lora };

std::string to_string(AdapterKind k);

struct AdaptedLayer {
  FrozenLinear base;
  std::optional<Adapter> adapter;
  std::size_t layer_index = 0;
};

/// Hyperparameters needed to create an adapter for a given layer.
struct AdapterConfig {
  AdapterKind kind = AdapterKind::neat;
  std::size_t hidden = 32;  // r
  std::size_t depth = 2;    // L; must be 2 for LoRA
  ad::Activation activation = ad::Activation::relu;
  double scaling = 1.0;
  bool residual = false;
  double dropout_p = 0.0;
  bool output_activation = false;
};

/// Trainable matrices in canonical order: NEAT (theta_in, intermediates..., theta_out), LoRA (A, B).
std::vector<const Matrix*> parameters(const Adapter& adapter);
std::vector<Matrix*> parameters(Adapter& adapter);

/// LoRA: r(d1 + d2). NEAT: 2 r d2 + (L - 2) r^2. Frozen weights excluded.
std::size_t param_count(const Adapter& adapter);
std::size_t param_count(const AdapterConfig& cfg, std::size_t d_out, std::size_t d_in);

/// Zero-output initialization: dW is exactly zero for any seed. Gaussian
/// layers use std = 1/sqrt(fan_in). Throws ConfigError for invalid dims.
Adapter init_adapter(const AdapterConfig& cfg, std::size_t d_out, std::size_t d_in, std::uint64_t seed);

/// Non-fatal configuration warnings (e.g. r >= min(d1, d2)).
std::vector<std::string> adapter_warnings(const AdapterConfig& cfg, std::size_t d_out, std::size_t d_in);

/// Throws ShapeError naming the offending stage when the adapter does not fit the base.
void check_compatible(const FrozenLinear& base, const Adapter& adapter);

/// Dropout draws come from `rng`; required when training with dropout_p > 0.
Matrix neat_delta(const FrozenLinear& base, const NeatAdapter& adapter, bool training,
                  std::mt19937_64* rng = nullptr);
Matrix lora_delta(const LoraAdapter& adapter);

/// y = (W0 + dW) x, or W0 x without an adapter. x is d_in x batch.
Matrix adapted_forward(const AdaptedLayer& layer, const Matrix& x, bool training, std::mt19937_64* rng = nullptr);

/// New frozen layer W0 + dW (evaluation-mode dW). Throws ContractError without an adapter.
FrozenLinear merge(const AdaptedLayer& layer);

// Graph-building forms used for training and gradient checks.

struct LayerVars {
  ad::Var weight;               // constant W0
  std::vector<ad::Var> params;  // canonical order, empty without an adapter
};

/// Records W0 as a constant and adapter matrices as parameters (or constants
/// when `trainable` is false).
LayerVars bind_layer(ad::Tape& tape, const AdaptedLayer& layer, bool trainable = true);

ad::Var record_neat_delta(ad::Tape& tape, ad::Var weight, const NeatAdapter& adapter,
                          const std::vector<ad::Var>& params, bool training, std::mt19937_64* rng);
ad::Var record_lora_delta(ad::Tape& tape, const LoraAdapter& adapter, const std::vector<ad::Var>& params);
ad::Var record_adapted_forward(ad::Tape& tape, const AdaptedLayer& layer, const LayerVars& vars, ad::Var x,
                               bool training, std::mt19937_64* rng);

}  // namespace neat
