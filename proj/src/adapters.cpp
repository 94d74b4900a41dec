#include "neat/adapters.hpp"

#include <cmath>

#include "neat/errors.hpp"

namespace neat {

std::string to_string(AdapterKind k) { return k == AdapterKind::neat ? "neat" : "lora"; }

std::vector<const Matrix*> parameters(const Adapter& adapter) {
  std::vector<const Matrix*> out;
  if (const auto* n = std::get_if<NeatAdapter>(&adapter)) {
    out.push_back(&n->theta_in);
    for (const auto& m : n->intermediates) out.push_back(&m);
    out.push_back(&n->theta_out);
  } else {
    const auto& l = std::get<LoraAdapter>(adapter);
    out = {&l.A, &l.B};
  }
  return out;
}

std::vector<Matrix*> parameters(Adapter& adapter) {
  std::vector<Matrix*> out;
  for (const Matrix* m : parameters(static_cast<const Adapter&>(adapter))) out.push_back(const_cast<Matrix*>(m));
  return out;
}

std::size_t param_count(const Adapter& adapter) {
  if (const auto* n = std::get_if<NeatAdapter>(&adapter)) {
    const std::size_t r = n->hidden();
    return 2 * r * n->theta_in.rows() + (n->depth() - 2) * r * r;
  }
  const auto& l = std::get<LoraAdapter>(adapter);
  return l.rank() * (l.A.rows() + l.B.cols());
}

std::size_t param_count(const AdapterConfig& cfg, std::size_t d_out, std::size_t d_in) {
  const std::size_t r = cfg.hidden;
  if (cfg.kind == AdapterKind::lora) return r * (d_out + d_in);
  return 2 * r * d_in + (cfg.depth - 2) * r * r;
}

std::vector<std::string> adapter_warnings(const AdapterConfig& cfg, std::size_t d_out, std::size_t d_in) {
  std::vector<std::string> out;
  if (cfg.hidden >= std::min(d_out, d_in))
    out.push_back("hidden dimension r=" + std::to_string(cfg.hidden) + " is not below min(d1, d2)=" +
                  std::to_string(std::min(d_out, d_in)) + " for a " + shape_string(d_out, d_in) + " layer");
  return out;
}

Adapter init_adapter(const AdapterConfig& cfg, std::size_t d_out, std::size_t d_in, std::uint64_t seed) {
  if (d_out == 0 || d_in == 0) throw ConfigError("adapter: layer dimensions must be positive");
  if (cfg.hidden == 0) throw ConfigError("adapter: hidden dimension r must be >= 1");
  if (cfg.depth < 2) throw ConfigError("adapter: depth must be >= 2");
  if (!(cfg.scaling > 0.0) || !std::isfinite(cfg.scaling)) throw ConfigError("adapter: scaling must be positive");
  if (!(cfg.dropout_p >= 0.0 && cfg.dropout_p < 1.0)) throw ConfigError("adapter: dropout must be in [0, 1)");

  std::mt19937_64 rng(seed);
  const std::size_t r = cfg.hidden;
  if (cfg.kind == AdapterKind::lora) {
    if (cfg.depth != 2) throw ConfigError("adapter: LoRA has depth 2, got " + std::to_string(cfg.depth));
    LoraAdapter l;
    l.A = gaussian(d_out, r, 1.0 / std::sqrt(static_cast<double>(r)), rng);
    l.B = Matrix(r, d_in);
    l.scaling = cfg.scaling;
    l.dropout_p = cfg.dropout_p;
    return l;
  }
  NeatAdapter n;
  n.theta_in = gaussian(d_in, r, 1.0 / std::sqrt(static_cast<double>(d_in)), rng);
  for (std::size_t k = 2; k < cfg.depth; ++k)
    n.intermediates.push_back(gaussian(r, r, 1.0 / std::sqrt(static_cast<double>(r)), rng));
  n.theta_out = Matrix(r, d_in);
  n.activation = cfg.activation;
  n.scaling = cfg.scaling;
  n.residual = cfg.residual;
  n.dropout_p = cfg.dropout_p;
  n.output_activation = cfg.output_activation;
  return n;
}

void check_compatible(const FrozenLinear& base, const Adapter& adapter) {
  const std::size_t d1 = base.out_dim();
  const std::size_t d2 = base.in_dim();
  auto fail = [&](const std::string& stage, const Matrix& m, const std::string& expected) {
    throw ShapeError("adapter stage " + stage + " has shape " + m.shape_string() + ", expected " + expected +
                     " for base " + base.weight.shape_string());
  };
  if (const auto* n = std::get_if<NeatAdapter>(&adapter)) {
    const std::size_t r = n->theta_in.cols();
    if (n->theta_in.rows() != d2 || r == 0) fail("theta_in", n->theta_in, shape_string(d2, r ? r : 1));
    for (std::size_t k = 0; k < n->intermediates.size(); ++k)
      if (n->intermediates[k].rows() != r || n->intermediates[k].cols() != r)
        fail("intermediate[" + std::to_string(k) + "]", n->intermediates[k], shape_string(r, r));
    if (n->theta_out.rows() != r || n->theta_out.cols() != d2) fail("theta_out", n->theta_out, shape_string(r, d2));
  } else {
    const auto& l = std::get<LoraAdapter>(adapter);
    const std::size_t r = l.A.cols();
    if (l.A.rows() != d1 || r == 0) fail("A", l.A, shape_string(d1, r ? r : 1));
    if (l.B.rows() != r || l.B.cols() != d2) fail("B", l.B, shape_string(r, d2));
  }
}

LayerVars bind_layer(ad::Tape& tape, const AdaptedLayer& layer, bool trainable) {
  LayerVars vars;
  vars.weight = tape.constant(layer.base.weight);
  if (layer.adapter) {
    check_compatible(layer.base, *layer.adapter);
    for (const Matrix* m : parameters(*layer.adapter))
      vars.params.push_back(trainable ? tape.parameter(*m) : tape.constant(*m));
  }
  return vars;
}

namespace {

Matrix dropout_mask(std::size_t rows, std::size_t cols, double p, std::mt19937_64& rng) {
  std::bernoulli_distribution keep(1.0 - p);
  Matrix mask(rows, cols);
  const double kept = 1.0 / (1.0 - p);
  for (auto& v : mask.values()) v = keep(rng) ? kept : 0.0;
  return mask;
}

}  // namespace

ad::Var record_neat_delta(ad::Tape& tape, ad::Var weight, const NeatAdapter& adapter,
                          const std::vector<ad::Var>& params, bool training, std::mt19937_64* rng) {
  if (params.size() != adapter.depth())
    throw ContractError("neat: expected " + std::to_string(adapter.depth()) + " parameter handles, got " +
                        std::to_string(params.size()));
  const Matrix& w = weight.value();
  if (params.front().value().rows() != w.cols())
    throw ShapeError("neat stage theta_in: W0 " + w.shape_string() + " cannot multiply theta_in " +
                     params.front().value().shape_string());

  ad::Var h = ad::activate(ad::matmul(weight, params.front()), adapter.activation);
  if (training && adapter.dropout_p > 0.0) {
    if (rng == nullptr) throw ContractError("neat: training-mode dropout needs a random source");
    h = ad::hadamard(h, tape.constant(dropout_mask(h.value().rows(), h.value().cols(), adapter.dropout_p, *rng)));
  }
  for (std::size_t k = 1; k + 1 < params.size(); ++k) {
    if (params[k].value().rows() != h.value().cols() || params[k].value().cols() != h.value().cols())
      throw ShapeError("neat stage intermediate[" + std::to_string(k - 1) + "]: hidden " + h.value().shape_string() +
                       " vs layer " + params[k].value().shape_string());
    ad::Var z = ad::activate(ad::matmul(h, params[k]), adapter.activation);
    h = adapter.residual ? ad::add(h, z) : z;
  }
  const ad::Var& out_layer = params.back();
  if (out_layer.value().rows() != h.value().cols() || out_layer.value().cols() != w.cols())
    throw ShapeError("neat stage theta_out: hidden " + h.value().shape_string() + " vs theta_out " +
                     out_layer.value().shape_string() + " for W0 " + w.shape_string());
  ad::Var out = ad::matmul(h, out_layer);
  if (adapter.output_activation) out = ad::activate(out, adapter.activation);
  return ad::scale(out, adapter.scaling);
}

ad::Var record_lora_delta(ad::Tape&, const LoraAdapter& adapter, const std::vector<ad::Var>& params) {
  if (params.size() != 2) throw ContractError("lora: expected 2 parameter handles");
  return ad::scale(ad::matmul(params[0], params[1]), adapter.scaling);
}

ad::Var record_adapted_forward(ad::Tape& tape, const AdaptedLayer& layer, const LayerVars& vars, ad::Var x,
                               bool training, std::mt19937_64* rng) {
  const Matrix& xv = x.value();
  if (xv.rows() != layer.base.in_dim())
    throw ShapeError("adapted_forward: input " + xv.shape_string() + " does not match layer " +
                     layer.base.weight.shape_string());
  if (!layer.adapter) return ad::matmul(vars.weight, x);

  if (const auto* n = std::get_if<NeatAdapter>(&*layer.adapter)) {
    ad::Var delta = record_neat_delta(tape, vars.weight, *n, vars.params, training, rng);
    return ad::matmul(ad::add(vars.weight, delta), x);
  }
  const auto& l = std::get<LoraAdapter>(*layer.adapter);
  ad::Var delta = record_lora_delta(tape, l, vars.params);
  if (training && l.dropout_p > 0.0) {
    if (rng == nullptr) throw ContractError("lora: training-mode dropout needs a random source");
    ad::Var dropped = ad::hadamard(x, tape.constant(dropout_mask(xv.rows(), xv.cols(), l.dropout_p, *rng)));
    return ad::add(ad::matmul(vars.weight, x), ad::matmul(delta, dropped));
  }
  return ad::matmul(ad::add(vars.weight, delta), x);
}

Matrix neat_delta(const FrozenLinear& base, const NeatAdapter& adapter, bool training, std::mt19937_64* rng) {
  check_compatible(base, adapter);
  ad::Tape tape;
  const Adapter wrapped(adapter);
  std::vector<ad::Var> params;
  for (const Matrix* m : parameters(wrapped)) params.push_back(tape.constant(*m));
  return record_neat_delta(tape, tape.constant(base.weight), adapter, params, training, rng).value();
}

Matrix lora_delta(const LoraAdapter& adapter) {
  if (adapter.A.cols() != adapter.B.rows())
    throw ShapeError("lora: A " + adapter.A.shape_string() + " and B " + adapter.B.shape_string() + " do not chain");
  return scale(matmul(adapter.A, adapter.B), adapter.scaling);
}

Matrix adapted_forward(const AdaptedLayer& layer, const Matrix& x, bool training, std::mt19937_64* rng) {
  ad::Tape tape;
  const LayerVars vars = bind_layer(tape, layer, false);
  return record_adapted_forward(tape, layer, vars, tape.constant(x), training, rng).value();
}

FrozenLinear merge(const AdaptedLayer& layer) {
  if (!layer.adapter) throw ContractError("merge: layer " + std::to_string(layer.layer_index) + " has no adapter");
  check_compatible(layer.base, *layer.adapter);
  Matrix delta = std::holds_alternative<NeatAdapter>(*layer.adapter)
                     ? neat_delta(layer.base, std::get<NeatAdapter>(*layer.adapter), false)
                     : lora_delta(std::get<LoraAdapter>(*layer.adapter));
  return FrozenLinear{add(layer.base.weight, delta)};
}

}  // namespace neat
