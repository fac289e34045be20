#pragma once

// Empirical stochastic-order checks between two score samples, and an
// estimate of the level below which a pseudo score's upper quantiles stay
// above the oracle score's.
//
// Orientation: check(a, b) asks whether a dominates b.
//   fosd: F_a(x) <= F_b(x) for all x
//   sosd: E(x - a)+ <= E(x - b)+ for all x   (integrated cdf of a below b's)
//   mcx : E(a - t)+ >= E(b - t)+ for all t   (stop-loss transforms)

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <iterator>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "itepi/dgp.hpp"
#include "itepi/rng.hpp"

namespace itepi {

struct OrderResult {
  bool holds = false;
  // max over the grid of (dominance requirement violation); <= 0 means the
  // inequality held everywhere on the grid.
  double max_violation = 0.0;
  double tolerance = 0.0;
};

struct ScorePair {
  std::vector<double> v_pseudo;
  std::vector<double> v_oracle;

  void validate() const {
    if (v_pseudo.empty() || v_oracle.empty()) throw std::invalid_argument("score pair: empty sample");
    for (double v : v_pseudo)
      if (!std::isfinite(v)) throw std::invalid_argument("score pair: non-finite pseudo score");
    for (double v : v_oracle)
      if (!std::isfinite(v)) throw std::invalid_argument("score pair: non-finite oracle score");
  }
};

// DKW band half-width at confidence 1 - delta.
inline double dkw_epsilon(std::size_t n, double delta = 0.05) {
  return std::sqrt(std::log(2.0 / delta) / (2.0 * static_cast<double>(n)));
}

// Sorted sample with prefix sums, for O(log n) cdf and stop-loss queries.
class EmpiricalDist {
 public:
  explicit EmpiricalDist(std::vector<double> sample) : s_(std::move(sample)) {
    if (s_.empty()) throw std::invalid_argument("empirical distribution: empty sample");
    std::sort(s_.begin(), s_.end());
    prefix_.resize(s_.size() + 1, 0.0);
    for (std::size_t i = 0; i < s_.size(); ++i) prefix_[i + 1] = prefix_[i] + s_[i];
    const double n = static_cast<double>(s_.size());
    mean_ = prefix_.back() / n;
    double ss = 0.0;
    for (double v : s_) ss += (v - mean_) * (v - mean_);
    var_ = s_.size() > 1 ? ss / (n - 1.0) : 0.0;
  }

  std::size_t size() const { return s_.size(); }
  const std::vector<double>& sorted() const { return s_; }
  double mean() const { return mean_; }
  double variance() const { return var_; }

  double cdf(double x) const {
    auto k = std::upper_bound(s_.begin(), s_.end(), x) - s_.begin();
    return static_cast<double>(k) / static_cast<double>(s_.size());
  }

  // E(x - S)+ = integral of the empirical cdf up to x.
  double lower_partial(double x) const {
    auto k = static_cast<std::size_t>(std::upper_bound(s_.begin(), s_.end(), x) - s_.begin());
    return (static_cast<double>(k) * x - prefix_[k]) / static_cast<double>(s_.size());
  }

  // E(S - t)+.
  double stop_loss(double t) const {
    auto k = static_cast<std::size_t>(std::upper_bound(s_.begin(), s_.end(), t) - s_.begin());
    const double above = prefix_.back() - prefix_[k];
    return (above - static_cast<double>(s_.size() - k) * t) / static_cast<double>(s_.size());
  }

  // Inverse ecdf: smallest sample value v with F(v) >= p.
  double quantile(double p) const {
    const double n = static_cast<double>(s_.size());
    auto k = static_cast<std::size_t>(std::ceil(p * n - 1e-9));
    k = std::clamp<std::size_t>(k, 1, s_.size());
    return s_[k - 1];
  }

 private:
  std::vector<double> s_;
  std::vector<double> prefix_;
  double mean_ = 0.0;
  double var_ = 0.0;
};

namespace detail {

// Evaluation points: the pooled sorted sample, thinned to `grid` evenly
// spaced ranks when grid > 0 (the extremes are always kept).
inline std::vector<double> pooled_grid(const EmpiricalDist& a, const EmpiricalDist& b, std::size_t grid) {
  std::vector<double> pool;
  pool.reserve(a.size() + b.size());
  std::merge(a.sorted().begin(), a.sorted().end(), b.sorted().begin(), b.sorted().end(),
             std::back_inserter(pool));
  pool.erase(std::unique(pool.begin(), pool.end()), pool.end());
  if (grid == 0 || grid >= pool.size()) return pool;
  std::vector<double> out;
  out.reserve(grid);
  if (grid == 1) return {pool.back()};
  for (std::size_t i = 0; i < grid; ++i) {
    auto k = static_cast<std::size_t>(std::llround(static_cast<double>(i) *
                                                   static_cast<double>(pool.size() - 1) /
                                                   static_cast<double>(grid - 1)));
    out.push_back(pool[k]);
  }
  return out;
}

inline double integrated_tolerance(const EmpiricalDist& a, const EmpiricalDist& b) {
  return 3.0 * std::sqrt(a.variance() / static_cast<double>(a.size()) +
                         b.variance() / static_cast<double>(b.size()));
}

}  // namespace detail

inline OrderResult fosd_check(const std::vector<double>& a, const std::vector<double>& b,
                              std::size_t grid = 0) {
  EmpiricalDist da(a), db(b);
  OrderResult r;
  r.max_violation = -1.0;
  for (double x : detail::pooled_grid(da, db, grid))
    r.max_violation = std::max(r.max_violation, da.cdf(x) - db.cdf(x));
  r.tolerance = 2.0 * dkw_epsilon(std::min(da.size(), db.size()));
  r.holds = r.max_violation <= r.tolerance;
  return r;
}

inline OrderResult sosd_check(const std::vector<double>& a, const std::vector<double>& b,
                              std::size_t grid = 0) {
  EmpiricalDist da(a), db(b);
  OrderResult r;
  r.max_violation = -std::numeric_limits<double>::infinity();
  // Both integrated cdfs are piecewise linear between pooled sample points,
  // so checking at those points is exact for the empirical distributions.
  for (double x : detail::pooled_grid(da, db, grid))
    r.max_violation = std::max(r.max_violation, da.lower_partial(x) - db.lower_partial(x));
  r.tolerance = detail::integrated_tolerance(da, db);
  r.holds = r.max_violation <= r.tolerance;
  return r;
}

// thresholds empty -> pooled sample points.
inline OrderResult mcx_check(const std::vector<double>& a, const std::vector<double>& b,
                             const std::vector<double>& thresholds = {}) {
  EmpiricalDist da(a), db(b);
  OrderResult r;
  r.max_violation = -std::numeric_limits<double>::infinity();
  const auto grid = thresholds.empty() ? detail::pooled_grid(da, db, 0) : thresholds;
  for (double t : grid) r.max_violation = std::max(r.max_violation, db.stop_loss(t) - da.stop_loss(t));
  r.tolerance = detail::integrated_tolerance(da, db);
  r.holds = r.max_violation <= r.tolerance;
  return r;
}

inline std::vector<double> default_alpha_grid() {
  std::vector<double> g;
  g.reserve(999);
  for (int i = 1; i <= 999; ++i) g.push_back(i / 1000.0);
  return g;
}

// Largest grid level alpha such that the (1 - a)-quantile of the pseudo score
// is at least the oracle's for every grid a <= alpha. 1 when that holds on
// the whole grid, 0 when it already fails at the smallest level.
inline double estimate_alpha_star(const ScorePair& pair, std::vector<double> alpha_grid = {}) {
  pair.validate();
  if (pair.v_pseudo.size() < 100 || pair.v_oracle.size() < 100)
    throw std::invalid_argument("estimate_alpha_star: need at least 100 points per sample");
  if (alpha_grid.empty()) alpha_grid = default_alpha_grid();
  std::sort(alpha_grid.begin(), alpha_grid.end());
  EmpiricalDist p(pair.v_pseudo), o(pair.v_oracle);
  double best = 0.0;
  for (double a : alpha_grid) {
    if (p.quantile(1.0 - a) < o.quantile(1.0 - a)) return best;
    best = a;
  }
  return 1.0;
}

// DR pseudo score against the true score when mu_0, mu_1 and a constant
// propensity p are known: V_phi = |phi - tau(X)|, V* = |Delta - tau(X)|.
inline ScorePair known_nuisance_dr_scores(double rho, double p, std::size_t n, RngStream rng,
                                          NoiseKind noise = NoiseKind::homoscedastic) {
  ScenarioConfig sc;
  sc.outcome.rho = rho;
  sc.outcome.noise = noise;
  sc.propensity = {PropensityKind::constant, p};
  sc.validate();
  const auto d = gen_dataset(sc, n, std::move(rng));
  ScorePair out;
  out.v_pseudo.reserve(n);
  out.v_oracle.reserve(n);
  for (std::size_t i = 0; i < d.size(); ++i) {
    const auto& x = d.x[i];
    const double mu1 = outcome_mean(1, x), mu0 = outcome_mean(0, x);
    const double tau = mu1 - mu0;
    const double phi = d.t[i] ? mu1 - mu0 + (d.y_obs[i] - mu1) / p
                              : mu1 - mu0 - (d.y_obs[i] - mu0) / (1.0 - p);
    out.v_pseudo.push_back(std::abs(phi - tau));
    out.v_oracle.push_back(std::abs(d.delta(i) - tau));
  }
  return out;
}

}  // namespace itepi
