#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "neat/theory.hpp"

namespace neat::theory {

// Seeded randomized batteries over the two expressivity checks. Instance i of a
// battery with base seed s draws everything from seed_seq{s, i}.

struct Prop1Options {
  std::size_t max_d1 = 32;
  std::size_t max_d2 = 16;
  std::size_t max_rank = 4;
  std::size_t n_probes = 8;
  /// Singular values at or below rank_rel_tol * sigma_max are treated as zero.
  /// Products of thin factors leave rounding-level singular values of order
  /// 1e-16 * sigma_max, which must not count toward the rank.
  double rank_rel_tol = 1e-10;
};

struct Prop1Trial {
  std::uint64_t seed = 0;
  std::size_t d1 = 0, d2 = 0, r = 0, rank = 0;
  bool rank_deficient = false;
  Prop1Report forward;
  double reverse_residual = 0.0;  // ||A B - relu(W0 T1) T2||_F
};

struct Prop1Battery {
  std::vector<Prop1Trial> trials;
  double max_residual = 0.0;
  double max_loss_gap = 0.0;
  double max_reverse_residual = 0.0;
  std::size_t rank_deficient = 0;
  std::vector<std::string> failures;  // one line per failing trial
  bool passed() const { return failures.empty(); }
};

/// Reverse residuals must not exceed 1e-12.
Prop1Battery run_prop1_battery(std::size_t trials, std::uint64_t seed, const Prop1Options& options = {});

struct Prop2BatteryOptions {
  std::size_t d1 = 6;
  std::size_t d2 = 4;
  std::size_t r = 2;
  Prop2Options search;
  /// Plant A = sin(2 pi W0 T1) for a T1 on the search grid, so an exact fit exists.
  bool planted = false;
  double planted_c_max = 10.0;
  bool parallel = true;  // run instances concurrently
};

struct Prop2Trial {
  std::uint64_t seed = 0;
  Prop2SearchReport report;
  bool bound_holds = false;
};

struct Prop2Battery {
  std::vector<Prop2Trial> trials;
  double max_relative_error = 0.0;
  double max_achieved_error = 0.0;
  std::vector<std::string> failures;  // bound violations (hard)
  std::vector<std::string> warnings;  // eps not reached (soft)
  bool passed() const { return failures.empty(); }
};

Prop2Battery run_prop2_battery(std::size_t trials, std::uint64_t seed, const Prop2BatteryOptions& options = {});

}  // namespace neat::theory
