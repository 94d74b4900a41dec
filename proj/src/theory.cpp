#include "neat/theory.hpp"

#include <algorithm>
#include <cmath>
#include <future>
#include <limits>
#include <numbers>
#include <queue>
#include <random>

#include "neat/errors.hpp"
#include "neat/linalg.hpp"

namespace neat::theory {

namespace {

constexpr double kTwoPi = 2.0 * std::numbers::pi;

void require_shape(const Matrix& m, std::size_t rows, std::size_t cols, const char* what) {
  if (m.rows() != rows || m.cols() != cols)
    throw ShapeError(std::string(what) + " has shape " + m.shape_string() + ", expected " + shape_string(rows, cols));
}

void require_low_rank_pair(const Matrix& W0, const Matrix& A, const Matrix& B) {
  if (A.rows() != W0.rows()) throw ShapeError("A " + A.shape_string() + " does not match W0 " + W0.shape_string());
  require_shape(B, A.cols(), W0.cols(), "B");
}

}  // namespace

double InvariantLoss::operator()(const Matrix& W) const {
  const Matrix r = subtract(matmul(transpose(U), matmul(W, X)), Z);
  double s = 0.0;
  for (double v : r.values()) s += v * v;
  return s;
}

InvariantLoss build_invariant_loss(const Matrix& W0, std::size_t n_probes, std::uint64_t seed,
                                   std::optional<double> rank_tol, double perturbation) {
  if (n_probes == 0) throw ContractError("build_invariant_loss: n_probes must be >= 1");
  InvariantLoss loss;
  loss.U = linalg::left_singular_basis(W0, rank_tol);
  if (loss.U.empty()) throw ContractError("build_invariant_loss: W0 has numerical rank 0");
  std::mt19937_64 rng(seed);
  loss.X = gaussian(W0.cols(), n_probes, 1.0, rng);
  loss.generator = gaussian(W0.rows(), W0.cols(), perturbation, rng);
  loss.Z = matmul(transpose(loss.U), matmul(add(W0, loss.generator), loss.X));
  return loss;
}

Matrix shallow_update(const Matrix& W0, const Matrix& theta_in, const Matrix& theta_out, ad::Activation act) {
  Matrix h = matmul(W0, theta_in);
  for (auto& v : h.values()) v = ad::activate(act, v);
  return matmul(h, theta_out);
}

NeatPair prop1_construct(const Matrix& W0, const Matrix& A, const Matrix& B, std::optional<double> rank_tol) {
  require_low_rank_pair(W0, A, B);
  const Matrix pa = matmul(linalg::pinv(W0, rank_tol), A);
  return {hstack(pa, scale(pa, -1.0)), vstack(B, scale(B, -1.0))};
}

Prop1Report prop1_verify(const Matrix& W0, const Matrix& A, const Matrix& B, const InvariantLoss& loss,
                         std::optional<double> rank_tol) {
  const NeatPair theta = prop1_construct(W0, A, B, rank_tol);
  const Matrix update = shallow_update(W0, theta.theta_in, theta.theta_out, ad::Activation::relu);
  const Matrix ab = matmul(A, B);
  const Matrix projected = matmul(linalg::left_projector(W0, rank_tol), ab);

  Prop1Report report;
  report.residual = distance(update, projected);
  report.loss_gap = std::abs(loss(add(W0, update)) - loss(add(W0, ab)));
  report.tolerance = 1e-9 * std::max(1.0, frobenius_norm(ab));
  report.passed = report.residual <= report.tolerance && report.loss_gap <= report.tolerance;
  return report;
}

LowRankPair prop1_reverse(const Matrix& W0, const Matrix& theta_in, const Matrix& theta_out) {
  require_shape(theta_in, W0.cols(), theta_in.cols(), "theta_in");
  require_shape(theta_out, theta_in.cols(), W0.cols(), "theta_out");
  Matrix a = matmul(W0, theta_in);
  for (auto& v : a.values()) v = ad::activate(ad::Activation::relu, v);
  return {std::move(a), theta_out};
}

std::size_t select_kronecker_column(const Matrix& W0) {
  std::size_t best = 0;
  double best_score = -1.0;
  for (std::size_t j = 0; j < W0.cols(); ++j) {
    double score = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < W0.rows(); ++i) {
      score = std::min(score, std::abs(W0(i, j)));
      for (std::size_t k = i + 1; k < W0.rows(); ++k) {
        score = std::min(score, std::abs(W0(i, j) - W0(k, j)));
        score = std::min(score, std::abs(W0(i, j) + W0(k, j)));
      }
    }
    if (score > best_score) {
      best_score = score;
      best = j;
    }
  }
  return best;
}

double fractional_target(double a) {
  const double t = std::asin(std::clamp(a, -1.0, 1.0)) / kTwoPi;
  const double f = t - std::floor(t);
  return f >= 1.0 ? 0.0 : f;
}

double circular_distance(double x, double y) {
  double d = std::abs(x - y);
  d -= std::floor(d);
  return std::min(d, 1.0 - d);
}

namespace {

constexpr std::size_t kBlock = 1024;

// The coarse lattice k = 1 + stride * t of the search grid c = k * step.
struct Lattice {
  double step = 0.0;
  std::uint64_t budget = 0;  // fine grid points, k = 1..budget
  std::uint64_t stride = 1;
  std::uint64_t size() const { return (budget - 1) / stride + 1; }
};

// Calls visit(first_k, count, s) for consecutive blocks of the lattice, where
// row i of s (stride kBlock) holds sin(2 pi c w_i) for the count lattice points
// starting at first_k. Each value is sin(a + b) from a per-block base angle a
// and a table of in-block offsets b, so no error accumulates across blocks.
template <class Visit>
void sweep(const std::vector<double>& w, const Lattice& g, Visit&& visit) {
  const std::size_t n = w.size();
  const double pitch = static_cast<double>(g.stride) * g.step;
  std::vector<double> cos_t(n * kBlock), sin_t(n * kBlock), s(n * kBlock);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t m = 0; m < kBlock; ++m) {
      const double y = w[i] * pitch * static_cast<double>(m);
      const double f = y - std::floor(y);
      sin_t[i * kBlock + m] = std::sin(kTwoPi * f);
      cos_t[i * kBlock + m] = std::cos(kTwoPi * f);
    }
  const std::uint64_t points = g.size();
  for (std::uint64_t t0 = 0; t0 < points; t0 += kBlock) {
    const std::size_t count = static_cast<std::size_t>(std::min<std::uint64_t>(kBlock, points - t0));
    const std::uint64_t first_k = 1 + g.stride * t0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = w[i] * (static_cast<double>(first_k) * g.step);
      const double f = x - std::floor(x);
      const double S = std::sin(kTwoPi * f);
      const double C = std::cos(kTwoPi * f);
      const double* ct = cos_t.data() + i * kBlock;
      const double* st = sin_t.data() + i * kBlock;
      double* row = s.data() + i * kBlock;
      for (std::size_t m = 0; m < count; ++m) row[m] = S * ct[m] + C * st[m];
    }
    visit(first_k, count, s.data());
  }
}

// The `capacity` highest-scoring lattice points seen so far.
class TopK {
 public:
  explicit TopK(std::size_t capacity) : capacity_(std::max<std::size_t>(1, capacity)) {}

  double threshold() const { return heap_.size() < capacity_ ? -std::numeric_limits<double>::infinity() : heap_.top().first; }

  void offer(double score, std::uint64_t k) {
    if (heap_.size() < capacity_) {
      heap_.emplace(score, k);
    } else if (score > heap_.top().first) {
      heap_.pop();
      heap_.emplace(score, k);
    }
  }

  std::vector<std::uint64_t> points() const {
    auto copy = heap_;
    std::vector<std::uint64_t> out;
    for (; !copy.empty(); copy.pop()) out.push_back(copy.top().second);
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  using Entry = std::pair<double, std::uint64_t>;
  std::size_t capacity_;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<Entry>> heap_;
};

// Exhaustive pass over the fine grid within one stride of each coarse candidate.
// Ties go to the smaller shift.
template <class Score>
std::uint64_t polish(const std::vector<std::uint64_t>& candidates, const Lattice& g, Score&& score,
                     std::uint64_t& used) {
  double best = -std::numeric_limits<double>::infinity();
  std::uint64_t best_k = 1;
  std::uint64_t done_to = 0;  // candidates are sorted, so overlapping windows are skipped
  for (std::uint64_t c : candidates) {
    const std::uint64_t lo = std::max(done_to + 1, c > g.stride ? c - g.stride + 1 : std::uint64_t{1});
    const std::uint64_t hi = std::min(g.budget, c + g.stride - 1);
    for (std::uint64_t k = lo; k <= hi; ++k) {
      const double v = score(k);
      ++used;
      if (v > best) {
        best = v;
        best_k = k;
      }
    }
    done_to = std::max(done_to, hi);
  }
  return best_k;
}

std::vector<double> sines(const std::vector<double>& w, double c) {
  std::vector<double> s(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) s[i] = ad::activate(ad::Activation::sine, w[i] * c);
  return s;
}

// Per-unit match of sin(2 pi c w) to a_k: by direction (d^2 / ss) when
// theta_out is refit afterwards, by Euclidean distance to +-a_k otherwise.
// ||a - sign * s||^2 = ||a||^2 + ss - 2 |d|, so that score is 2 |d| - ss.
double unit_score(double ss, double d, bool by_direction) {
  if (by_direction) return ss > 0.0 ? d * d / ss : 0.0;
  return 2.0 * std::abs(d) - ss;
}

std::vector<std::uint64_t> scan_units(const std::vector<double>& w, const Matrix& a_unit, bool by_direction,
                                      const Lattice& g, std::size_t candidates, std::uint64_t& used) {
  const std::size_t n = w.size();
  const std::size_t r = a_unit.cols();
  std::vector<TopK> top(r, TopK(candidates));
  std::vector<double> ss(kBlock), d(r * kBlock), score(kBlock);
  const double tiny = std::numeric_limits<double>::min();
  sweep(w, g, [&](std::uint64_t first_k, std::size_t count, const double* s) {
    std::fill(ss.begin(), ss.end(), 0.0);
    std::fill(d.begin(), d.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = s + i * kBlock;
      for (std::size_t m = 0; m < count; ++m) ss[m] += row[m] * row[m];
      for (std::size_t k = 0; k < r; ++k) {
        const double coef = a_unit(i, k);
        double* dk = d.data() + k * kBlock;
        for (std::size_t m = 0; m < count; ++m) dk[m] += coef * row[m];
      }
    }
    for (std::size_t k = 0; k < r; ++k) {
      const double* dk = d.data() + k * kBlock;
      if (by_direction)
        for (std::size_t m = 0; m < count; ++m) score[m] = dk[m] * dk[m] / (ss[m] + tiny);
      else
        for (std::size_t m = 0; m < count; ++m) score[m] = 2.0 * std::abs(dk[m]) - ss[m];
      double bar = top[k].threshold();
      for (std::size_t m = 0; m < count; ++m)
        if (score[m] > bar) {
          top[k].offer(score[m], first_k + g.stride * m);
          bar = top[k].threshold();
        }
    }
  });
  used += g.size();

  std::vector<std::uint64_t> best(r);
  for (std::size_t k = 0; k < r; ++k) {
    best[k] = polish(top[k].points(), g, [&](std::uint64_t kk) {
      const std::vector<double> s = sines(w, static_cast<double>(kk) * g.step);
      double ss2 = 0.0, dot = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        ss2 += s[i] * s[i];
        dot += a_unit(i, k) * s[i];
      }
      return unit_score(ss2, dot, by_direction);
    }, used);
  }
  return best;
}

// Re-searches the shift of one unit against the joint least-squares residual
// ||(I - P) M||_F^2, where P projects onto span(q_1..q_p, s) and Q holds an
// orthonormal basis of the other units' sine vectors. Maximizes the captured
// part sum_c (s'^T m_c)^2 / ||s'||^2 with s' = (I - Q Q^T) s.
std::uint64_t refine_unit(const std::vector<double>& w, const Matrix& M, const Matrix& Q, const Lattice& g,
                          std::size_t candidates, std::uint64_t& used) {
  const std::size_t n = w.size();
  const std::size_t q = M.cols();
  const std::size_t p = Q.empty() ? 0 : Q.cols();
  const Matrix qm = p ? matmul(transpose(Q), M) : Matrix();
  TopK top(candidates);
  std::vector<double> ss(kBlock), qs(p * kBlock), sm(q * kBlock), denom(kBlock), gain(kBlock);
  sweep(w, g, [&](std::uint64_t first_k, std::size_t count, const double* s) {
    std::fill(ss.begin(), ss.end(), 0.0);
    std::fill(qs.begin(), qs.end(), 0.0);
    std::fill(sm.begin(), sm.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const double* row = s + i * kBlock;
      for (std::size_t m = 0; m < count; ++m) ss[m] += row[m] * row[m];
      for (std::size_t l = 0; l < p; ++l) {
        const double coef = Q(i, l);
        double* out = qs.data() + l * kBlock;
        for (std::size_t m = 0; m < count; ++m) out[m] += coef * row[m];
      }
      for (std::size_t c = 0; c < q; ++c) {
        const double coef = M(i, c);
        double* out = sm.data() + c * kBlock;
        for (std::size_t m = 0; m < count; ++m) out[m] += coef * row[m];
      }
    }
    std::copy(ss.begin(), ss.end(), denom.begin());
    for (std::size_t l = 0; l < p; ++l) {
      const double* ql = qs.data() + l * kBlock;
      for (std::size_t m = 0; m < count; ++m) denom[m] -= ql[m] * ql[m];
      for (std::size_t c = 0; c < q; ++c) {
        const double coef = qm(l, c);
        double* out = sm.data() + c * kBlock;
        for (std::size_t m = 0; m < count; ++m) out[m] -= coef * ql[m];
      }
    }
    std::fill(gain.begin(), gain.end(), 0.0);
    for (std::size_t c = 0; c < q; ++c) {
      const double* v = sm.data() + c * kBlock;
      for (std::size_t m = 0; m < count; ++m) gain[m] += v[m] * v[m];
    }
    double bar = top.threshold();
    for (std::size_t m = 0; m < count; ++m) {
      if (!(denom[m] > 1e-12 * ss[m])) continue;  // s already lies in span(Q)
      const double v = gain[m] / denom[m];
      if (v > bar) {
        top.offer(v, first_k + g.stride * m);
        bar = top.threshold();
      }
    }
  });
  used += g.size();

  return polish(top.points(), g, [&](std::uint64_t kk) {
    const std::vector<double> s = sines(w, static_cast<double>(kk) * g.step);
    double ss2 = 0.0;
    std::vector<double> qsv(p, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      ss2 += s[i] * s[i];
      for (std::size_t l = 0; l < p; ++l) qsv[l] += Q(i, l) * s[i];
    }
    double den = ss2;
    for (double v : qsv) den -= v * v;
    if (!(den > 1e-12 * ss2)) return -std::numeric_limits<double>::infinity();
    double total = 0.0;
    for (std::size_t c = 0; c < q; ++c) {
      double v = 0.0;
      for (std::size_t i = 0; i < n; ++i) v += M(i, c) * s[i];
      for (std::size_t l = 0; l < p; ++l) v -= qsv[l] * qm(l, c);
      total += v * v;
    }
    return total / den;
  }, used);
}

Matrix sine_features(const std::vector<double>& w, const std::vector<double>& shifts) {
  Matrix out(w.size(), shifts.size());
  for (std::size_t i = 0; i < w.size(); ++i)
    for (std::size_t k = 0; k < shifts.size(); ++k) out(i, k) = ad::activate(ad::Activation::sine, w[i] * shifts[k]);
  return out;
}

// Orthonormal basis of the columns of m except `skip` (modified Gram-Schmidt).
Matrix basis_without(const Matrix& m, std::size_t skip) {
  std::vector<std::vector<double>> cols;
  for (std::size_t k = 0; k < m.cols(); ++k) {
    if (k == skip) continue;
    std::vector<double> v(m.rows());
    for (std::size_t i = 0; i < m.rows(); ++i) v[i] = m(i, k);
    for (const auto& u : cols) {
      double dot = 0.0;
      for (std::size_t i = 0; i < v.size(); ++i) dot += u[i] * v[i];
      for (std::size_t i = 0; i < v.size(); ++i) v[i] -= dot * u[i];
    }
    double norm = 0.0;
    for (double x : v) norm += x * x;
    norm = std::sqrt(norm);
    if (norm <= 1e-12) continue;
    for (double& x : v) x /= norm;
    cols.push_back(std::move(v));
  }
  if (cols.empty()) return Matrix();
  Matrix q(m.rows(), cols.size());
  for (std::size_t l = 0; l < cols.size(); ++l)
    for (std::size_t i = 0; i < m.rows(); ++i) q(i, l) = cols[l][i];
  return q;
}

std::vector<double> column_of(const Matrix& m, std::size_t j) {
  std::vector<double> w(m.rows());
  for (std::size_t i = 0; i < m.rows(); ++i) w[i] = m(i, j);
  return w;
}

struct Fit {
  std::size_t column = 0;
  std::uint64_t used = 0;
  std::vector<double> shifts;
  double error = std::numeric_limits<double>::infinity();
};

}  // namespace

Prop2SearchReport prop2_search(const Matrix& W0, const Matrix& A, const Matrix& B, const Prop2Options& options) {
  require_low_rank_pair(W0, A, B);
  if (!(options.grid_step > 0.0) || !(options.c_max >= options.grid_step))
    throw ContractError("prop2_search: need 0 < grid_step <= c_max");
  if (!(options.eps > 0.0)) throw ContractError("prop2_search: eps must be positive");

  const std::size_t d1 = W0.rows();
  const std::size_t d2 = W0.cols();
  const std::size_t r = A.cols();
  const double step = options.grid_step;

  Prop2SearchReport report;
  report.grid_step = step;
  report.c_max = options.c_max;
  report.target_eps = options.eps;
  report.budget = static_cast<std::uint64_t>(std::floor(options.c_max / step + 1e-9));

  // Move each unit's scale into B so that max_i |a_ik| = 1.
  report.columns.resize(r);
  Matrix a_unit(d1, r);
  for (std::size_t k = 0; k < r; ++k) {
    double m = 0.0;
    for (std::size_t i = 0; i < d1; ++i) m = std::max(m, std::abs(A(i, k)));
    report.columns[k].scale = m > 0.0 ? m : 1.0;
    for (std::size_t i = 0; i < d1; ++i) a_unit(i, k) = A(i, k) / report.columns[k].scale;
  }

  const Matrix ab = matmul(A, B);
  // ||X A B||_F = ||X A B V||_F when V spans the row space of B.
  const Matrix M = matmul(ab, linalg::svd(B).V);
  auto fit_error = [&](const std::vector<double>& w, const std::vector<double>& shifts) {
    const Matrix S = sine_features(w, shifts);
    if (options.refit_output) return distance(ab, matmul(S, matmul(linalg::pinv(S), ab)));
    Matrix theta_out(r, d2);
    for (std::size_t k = 0; k < r; ++k) {
      // Sign chosen per unit to match a_k / scale_k.
      double dot = 0.0;
      for (std::size_t i = 0; i < d1; ++i) dot += a_unit(i, k) * S(i, k);
      const double f = (dot < 0.0 ? -1.0 : 1.0) * report.columns[k].scale;
      for (std::size_t c = 0; c < d2; ++c) theta_out(k, c) = f * B(k, c);
    }
    return distance(ab, matmul(S, theta_out));
  };

  std::vector<std::size_t> candidates;
  if (options.column) {
    if (*options.column >= d2) throw ContractError("prop2_search: column index out of range");
    candidates.push_back(*options.column);
  } else if (options.scan_all_columns) {
    for (std::size_t j = 0; j < d2; ++j) candidates.push_back(j);
  } else {
    candidates.push_back(select_kronecker_column(W0));
  }
  report.columns_scanned = candidates.size();

  // Coarse stride per column: phases advance by at most coarse_phase radians
  // between neighbouring lattice points.
  auto lattice_for = [&](const std::vector<double>& w) {
    Lattice g{step, report.budget, 1};
    double wmax = 0.0;
    for (double v : w) wmax = std::max(wmax, std::abs(v));
    if (options.coarse_phase > 0.0) {
      const double ratio = wmax > 0.0 ? options.coarse_phase / (kTwoPi * step * wmax) : static_cast<double>(report.budget);
      g.stride = static_cast<std::uint64_t>(std::clamp(std::floor(ratio), 1.0, static_cast<double>(report.budget)));
    }
    return g;
  };
  auto scan = [&](std::size_t j) {
    Fit fit;
    fit.column = j;
    const std::vector<double> w = column_of(W0, j);
    const Lattice g = lattice_for(w);
    for (std::uint64_t k : scan_units(w, a_unit, options.refit_output, g, options.candidates, fit.used))
      fit.shifts.push_back(static_cast<double>(k) * step);
    fit.error = fit_error(w, fit.shifts);
    if (!options.refit_output) return fit;
    // Second start: greedy forward selection against the joint residual. With
    // a refit output the sines only need to span col(A B), not match each a_k.
    std::vector<double> greedy;
    for (std::size_t k = 0; k < r; ++k) {
      const Matrix Q = k == 0 ? Matrix() : basis_without(sine_features(w, greedy), k);
      greedy.push_back(static_cast<double>(refine_unit(w, M, Q, g, options.candidates, fit.used)) * step);
    }
    const double e = fit_error(w, greedy);
    if (e < fit.error) {
      fit.error = e;
      fit.shifts = std::move(greedy);
    }
    return fit;
  };
  std::vector<Fit> fits;
  if (options.parallel && candidates.size() > 1) {
    std::vector<std::future<Fit>> pending;
    for (std::size_t j : candidates) pending.push_back(std::async(std::launch::async, scan, j));
    for (auto& f : pending) fits.push_back(f.get());
  } else {
    for (std::size_t j : candidates) fits.push_back(scan(j));
  }
  Fit best = fits.front();
  for (const Fit& f : fits) {
    report.used += f.used;
    if (f.error < best.error) best = f;
  }

  if (options.refit_output && r > 0) {
    const std::vector<double> w = column_of(W0, best.column);
    const Lattice g = lattice_for(w);
    for (std::size_t round = 0; round < options.refine_rounds; ++round) {
      for (std::size_t k = 0; k < r; ++k) {
        const Matrix Q = basis_without(sine_features(w, best.shifts), k);
        std::vector<double> trial = best.shifts;
        trial[k] = static_cast<double>(refine_unit(w, M, Q, g, options.candidates, report.used)) * step;
        const double e = fit_error(w, trial);
        if (e < best.error) {
          best.error = e;
          best.shifts = trial;
        }
      }
    }
  }

  report.column = best.column;
  const std::vector<double> w = column_of(W0, best.column);
  report.coarse_stride = lattice_for(w).stride;
  report.theta_in = Matrix(d2, r);
  for (std::size_t k = 0; k < r; ++k) report.theta_in(best.column, k) = best.shifts[k];
  // The forward pass forms W0 * theta_in; every product is exactly w_i * c_k.
  const Matrix S = sine_features(w, best.shifts);

  report.construction_theta_out = Matrix(r, d2);
  double max_eps = 0.0;
  for (std::size_t k = 0; k < r; ++k) {
    Prop2Column& col = report.columns[k];
    col.shift = best.shifts[k];
    // Pick the sign whose targets the chosen shift matches more closely.
    for (double sign : {1.0, -1.0}) {
      double sq = 0.0, mx = 0.0, sine_sq = 0.0;
      for (std::size_t i = 0; i < d1; ++i) {
        const double x = w[i] * col.shift;
        const double d = circular_distance(x - std::floor(x), fractional_target(sign * a_unit(i, k)));
        sq += d * d;
        mx = std::max(mx, d);
        const double e = sign * a_unit(i, k) - S(i, k);
        sine_sq += e * e;
      }
      if (sign > 0.0 || std::sqrt(sq) < col.frac_error) {
        col.sign = sign;
        col.frac_error = std::sqrt(sq);
        col.max_frac_error = mx;
        col.sine_error = std::sqrt(sine_sq);
      }
    }
    for (std::size_t c = 0; c < d2; ++c) report.construction_theta_out(k, c) = col.sign * col.scale * B(k, c);
    max_eps = std::max(max_eps, col.frac_error);
  }

  report.construction_error = distance(ab, matmul(S, report.construction_theta_out));
  report.theta_out = options.refit_output ? matmul(linalg::pinv(S), ab) : report.construction_theta_out;
  report.achieved_error = distance(ab, shallow_update(W0, report.theta_in, report.theta_out, ad::Activation::sine));
  const double ab_norm = frobenius_norm(ab);
  report.relative_error = ab_norm > 0.0 ? report.achieved_error / ab_norm : report.achieved_error;
  report.b_spectral_norm = linalg::spectral_norm(report.construction_theta_out);
  report.bound = kTwoPi * report.b_spectral_norm * std::sqrt(static_cast<double>(r)) * max_eps;
  report.converged = report.achieved_error <= options.eps;
  return report;
}

bool prop2_bound_check(const Prop2SearchReport& report) {
  const double r = static_cast<double>(report.columns.size());
  const double slack = 1e-12 * std::max(1.0, report.b_spectral_norm * std::sqrt(r));
  return report.achieved_error <= report.bound + slack && report.construction_error <= report.bound + slack;
}

}  // namespace neat::theory
