#include "neat/batteries.hpp"

#include <cmath>
#include <future>
#include <numbers>
#include <random>
#include <sstream>

#include "neat/errors.hpp"
#include "neat/linalg.hpp"

namespace neat::theory {

namespace {

std::mt19937_64 instance_rng(std::uint64_t seed, std::size_t i) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(i)};
  return std::mt19937_64(seq);
}

std::size_t draw(std::mt19937_64& rng, std::size_t lo, std::size_t hi) {
  return std::uniform_int_distribution<std::size_t>(lo, hi)(rng);
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(3);
  os << std::scientific << v;
  return os.str();
}

Prop1Trial prop1_trial(std::uint64_t seed, std::size_t i, const Prop1Options& o) {
  auto rng = instance_rng(seed, i);
  Prop1Trial t;
  t.seed = seed + i;
  t.d1 = draw(rng, 1, o.max_d1);
  t.d2 = draw(rng, 1, o.max_d2);
  t.r = draw(rng, 1, o.max_rank);
  const std::size_t full = std::min(t.d1, t.d2);
  // Odd instances use a product of thin factors, so rank(W0) < min(d1, d2).
  t.rank_deficient = (i % 2 == 1) && full >= 2;
  Matrix W0;
  if (t.rank_deficient) {
    const std::size_t k = draw(rng, 1, full - 1);
    W0 = matmul(gaussian(t.d1, k, 1.0, rng), gaussian(k, t.d2, 1.0, rng));
  } else {
    W0 = gaussian(t.d1, t.d2, 1.0, rng);
  }
  const Matrix A = gaussian(t.d1, t.r, 1.0, rng);
  const Matrix B = gaussian(t.r, t.d2, 1.0, rng);

  const double tol = o.rank_rel_tol * linalg::spectral_norm(W0);
  t.rank = linalg::numerical_rank(linalg::svd(W0), tol);
  const InvariantLoss loss = build_invariant_loss(W0, o.n_probes, rng(), tol);
  t.forward = prop1_verify(W0, A, B, loss, tol);

  const Matrix T1 = gaussian(t.d2, t.r, 1.0, rng);
  const Matrix T2 = gaussian(t.r, t.d2, 1.0, rng);
  const LowRankPair back = prop1_reverse(W0, T1, T2);
  t.reverse_residual = distance(matmul(back.A, back.B), shallow_update(W0, T1, T2, ad::Activation::relu));
  return t;
}

Prop2Trial prop2_trial(std::uint64_t seed, std::size_t i, const Prop2BatteryOptions& o) {
  auto rng = instance_rng(seed, i);
  Prop2Trial t;
  t.seed = seed + i;
  const Matrix W0 = uniform(o.d1, o.d2, -1.0, 1.0, rng);
  Matrix A = gaussian(o.d1, o.r, 1.0, rng);
  const Matrix B = gaussian(o.r, o.d2, 1.0, rng);
  Prop2Options search = o.search;
  if (o.planted) {
    // A = sin(2 pi W0 T1) with every shift on the search grid, so an exact fit exists.
    const std::size_t j = draw(rng, 0, o.d2 - 1);
    const auto top = static_cast<std::uint64_t>(std::floor(o.planted_c_max / search.grid_step));
    std::vector<double> shifts(o.r);
    for (auto& c : shifts)
      c = static_cast<double>(std::uniform_int_distribution<std::uint64_t>(1, top)(rng)) * search.grid_step;
    for (std::size_t k = 0; k < o.r; ++k)
      for (std::size_t row = 0; row < o.d1; ++row)
        A(row, k) = std::sin(2.0 * std::numbers::pi * (W0(row, j) * shifts[k]));
    search.column = j;
  }
  t.report = prop2_search(W0, A, B, search);
  t.bound_holds = prop2_bound_check(t.report);
  return t;
}

}  // namespace

Prop1Battery run_prop1_battery(std::size_t trials, std::uint64_t seed, const Prop1Options& options) {
  if (trials == 0) throw ContractError("prop1 battery: trials must be >= 1");
  Prop1Battery b;
  for (std::size_t i = 0; i < trials; ++i) {
    Prop1Trial t = prop1_trial(seed, i, options);
    b.max_residual = std::max(b.max_residual, t.forward.residual);
    b.max_loss_gap = std::max(b.max_loss_gap, t.forward.loss_gap);
    b.max_reverse_residual = std::max(b.max_reverse_residual, t.reverse_residual);
    b.rank_deficient += t.rank_deficient;
    const std::string where = "trial " + std::to_string(i) + " (seed " + std::to_string(seed) + ", d1=" +
                              std::to_string(t.d1) + ", d2=" + std::to_string(t.d2) + ", r=" + std::to_string(t.r) +
                              ")";
    if (!t.forward.passed)
      b.failures.push_back(where + ": construction residual " + fmt(t.forward.residual) + ", loss gap " +
                           fmt(t.forward.loss_gap) + " exceed " + fmt(t.forward.tolerance));
    if (t.reverse_residual > 1e-12)
      b.failures.push_back(where + ": reverse residual " + fmt(t.reverse_residual) + " exceeds 1e-12");
    b.trials.push_back(std::move(t));
  }
  return b;
}

Prop2Battery run_prop2_battery(std::size_t trials, std::uint64_t seed, const Prop2BatteryOptions& options) {
  if (trials == 0) throw ContractError("prop2 battery: trials must be >= 1");
  Prop2Battery b;
  if (options.parallel) {
    std::vector<std::future<Prop2Trial>> pending;
    for (std::size_t i = 0; i < trials; ++i)
      pending.push_back(std::async(std::launch::async, prop2_trial, seed, i, std::cref(options)));
    for (auto& f : pending) b.trials.push_back(f.get());
  } else {
    for (std::size_t i = 0; i < trials; ++i) b.trials.push_back(prop2_trial(seed, i, options));
  }
  for (std::size_t i = 0; i < trials; ++i) {
    const Prop2SearchReport& r = b.trials[i].report;
    b.max_relative_error = std::max(b.max_relative_error, r.relative_error);
    b.max_achieved_error = std::max(b.max_achieved_error, r.achieved_error);
    const std::string where = "trial " + std::to_string(i);
    if (!b.trials[i].bound_holds)
      b.failures.push_back(where + ": achieved error " + fmt(r.achieved_error) + " exceeds bound " + fmt(r.bound));
    if (!r.converged)
      b.warnings.push_back(where + ": eps " + fmt(r.target_eps) + " not reached, achieved " +
                           fmt(r.achieved_error) + " (relative " + fmt(r.relative_error) + ")");
  }
  return b;
}

}  // namespace neat::theory
