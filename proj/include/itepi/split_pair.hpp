#pragma once

// Split-and-pair ITE intervals.
//
// Under an additive model with errors independent of X and
// Y(1) independent of Y(0) given X, the ITE is tau(X) + xi with xi independent
// of X. The treated and control arms are split separately: the first parts
// fit mu_1 and mu_0, the second parts give residuals, which are randomly
// paired across arms. Differences of paired residuals are draws of xi, and
// their empirical quantiles are added to tau_hat(x).

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "itepi/conformal.hpp"
#include "itepi/dgp.hpp"
#include "itepi/interval.hpp"
#include "itepi/learners.hpp"
#include "itepi/parallel.hpp"
#include "itepi/rng.hpp"

namespace itepi {

struct SplitPairConfig {
  double alpha = 0.1;
  double split_ratio = 0.5;  // fraction of each arm used to fit the means
  LearnerConfig learner;
};

struct StratifiedSplit {
  std::vector<std::size_t> fit_rows;     // T1 u C1
  std::vector<std::size_t> treated_cal;  // T2
  std::vector<std::size_t> control_cal;  // C2

  std::size_t m() const { return std::min(treated_cal.size(), control_cal.size()); }
};

inline StratifiedSplit stratified_split(const ObservedData& data, double split_ratio, RngStream& rng) {
  if (!(split_ratio > 0.0 && split_ratio < 1.0))
    throw std::domain_error("stratified_split: split ratio must lie in (0, 1)");
  auto treated = detail::arm_rows(data, 1);
  auto control = detail::arm_rows(data, 0);
  if (treated.empty() || control.empty())
    throw MethodError("stratified_split: both treatment arms must be nonempty");

  StratifiedSplit out;
  auto take = [&](std::vector<std::size_t>& arm, std::vector<std::size_t>& cal) {
    rng.shuffle(arm);
    const auto k = static_cast<std::size_t>(std::floor(split_ratio * static_cast<double>(arm.size())));
    out.fit_rows.insert(out.fit_rows.end(), arm.begin(), arm.begin() + static_cast<std::ptrdiff_t>(k));
    cal.assign(arm.begin() + static_cast<std::ptrdiff_t>(k), arm.end());
    std::sort(cal.begin(), cal.end());
  };
  take(treated, out.treated_cal);
  take(control, out.control_cal);
  std::sort(out.fit_rows.begin(), out.fit_rows.end());
  return out;
}

struct PairedResiduals {
  std::vector<double> w;                                 // treated minus control residual
  std::vector<std::pair<std::size_t, std::size_t>> pairs;  // (treated row, control row)
  StratifiedSplit split;
};

// 1-based order-statistic ranks: lower floor(a m) + 1, upper ceil((1 - a) m),
// with a = alpha / 2.
inline std::pair<std::size_t, std::size_t> split_pair_ranks(std::size_t m, double alpha) {
  const double half = alpha / 2.0;
  const double md = static_cast<double>(m);
  auto lower = static_cast<std::size_t>(std::floor(half * md + 1e-9)) + 1;
  auto upper = static_cast<std::size_t>(std::ceil((1.0 - half) * md - 1e-9));
  lower = std::clamp<std::size_t>(lower, 1, m);
  upper = std::clamp<std::size_t>(upper, 1, m);
  return {lower, upper};
}

using MeanFn = std::function<double(const Covariate&)>;

struct SplitPairFit {
  MeanFn mu1;
  MeanFn mu0;
  PairedResiduals residuals;
  double q_lo = 0.0;
  double q_hi = 0.0;
  IntervalMap map;
};

namespace detail {

inline SplitPairFit finish_split_pair(const ObservedData& data, const SplitPairConfig& cfg,
                                      StratifiedSplit split, MeanFn mu1, MeanFn mu0, RngStream& rng) {
  const std::size_t m = split.m();
  if (m == 0) throw MethodError("split_pair: no residual pairs (m_n = 0)");

  SplitPairFit fit;
  fit.mu1 = std::move(mu1);
  fit.mu0 = std::move(mu0);

  auto treated = split.treated_cal;
  auto control = split.control_cal;
  auto pair_rng = rng.derive(3);
  pair_rng.shuffle(treated);
  pair_rng.shuffle(control);

  auto& res = fit.residuals;
  res.w.resize(m);
  res.pairs.resize(m);
  for (std::size_t k = 0; k < m; ++k) {
    const auto i = treated[k];
    const auto j = control[k];
    const double r1 = data.y[i] - fit.mu1(data.x[i]);
    const double r0 = data.y[j] - fit.mu0(data.x[j]);
    res.w[k] = r1 - r0;
    res.pairs[k] = {i, j};
  }
  res.split = std::move(split);

  std::vector<double> sorted = res.w;
  std::sort(sorted.begin(), sorted.end());
  const auto [lo_rank, hi_rank] = split_pair_ranks(m, cfg.alpha);
  fit.q_lo = sorted[lo_rank - 1];
  fit.q_hi = sorted[hi_rank - 1];

  fit.map = IntervalMap([mu1 = fit.mu1, mu0 = fit.mu0, lo = fit.q_lo, hi = fit.q_hi](const Covariate& x) {
    const double tau = mu1(x) - mu0(x);
    return Interval{tau + lo, tau + hi};
  });
  fit.map.set_meta("m_n", std::to_string(m));
  fit.map.set_meta("q_lo", fmt(fit.q_lo));
  fit.map.set_meta("q_hi", fmt(fit.q_hi));
  const auto floor_m = static_cast<std::size_t>(std::ceil(2.0 / cfg.alpha - 1e-9));
  if (m < floor_m)
    fit.map.set_meta("warning", "m_n=" + std::to_string(m) + " below ceil(2/alpha)=" + std::to_string(floor_m));
  return fit;
}

}  // namespace detail

// Full algorithm: means fitted by boosted trees on the first split.
inline SplitPairFit fit_split_pair(const ObservedData& data, const SplitPairConfig& cfg, RngStream rng) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw std::domain_error("split_pair: alpha in (0,1)");
  auto split_rng = rng.derive(1);
  auto split = stratified_split(data, cfg.split_ratio, split_rng);

  std::vector<std::size_t> t1, c1;
  for (auto i : split.fit_rows) (data.t[i] ? t1 : c1).push_back(i);
  if (t1.empty() || c1.empty())
    throw MethodError("split_pair: first split leaves an arm empty; cannot fit the means");
  const auto d1 = detail::subset(data, t1);
  const auto d0 = detail::subset(data, c1);
  auto m1 = std::make_shared<const FittedModel>(fit_mean(d1.x, d1.y, detail::seeded(cfg.learner, rng, 21)));
  auto m0 = std::make_shared<const FittedModel>(fit_mean(d0.x, d0.y, detail::seeded(cfg.learner, rng, 20)));
  return detail::finish_split_pair(
      data, cfg, std::move(split), [m1](const Covariate& x) { return m1->predict(x); },
      [m0](const Covariate& x) { return m0->predict(x); }, rng);
}

// Same calibration with caller-supplied mean functions (e.g. the true ones).
inline SplitPairFit fit_split_pair_with_means(const ObservedData& data, const SplitPairConfig& cfg,
                                              MeanFn mu1, MeanFn mu0, RngStream rng) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw std::domain_error("split_pair: alpha in (0,1)");
  auto split_rng = rng.derive(1);
  auto split = stratified_split(data, cfg.split_ratio, split_rng);
  return detail::finish_split_pair(data, cfg, std::move(split), std::move(mu1), std::move(mu0), rng);
}

inline IntervalMap build_interval(const ObservedData& data, const SplitPairConfig& cfg, RngStream rng) {
  return fit_split_pair(data, cfg, rng).map;
}

// ---------------------------------------------------------------------------
// Coverage-error decay experiment.

struct RateOptions {
  ScenarioConfig scenario;           // n_train is overridden by the grid
  std::vector<std::size_t> n_grid{500, 2000, 8000};
  std::size_t reps = 40;
  std::size_t n_test = 10000;
  SplitPairConfig cfg;
  bool oracle_means = false;
  std::uint64_t seed = 1;
  std::size_t parallelism = 1;
};

struct RateRow {
  std::size_t n = 0;
  double mean_m = 0.0;
  double mean_abs_error = 0.0;
  double mean_coverage = 0.0;
  std::size_t reps = 0;
};

inline std::vector<RateRow> rate_experiment(const RateOptions& opts) {
  const std::size_t cells = opts.n_grid.size() * opts.reps;
  struct Cell {
    double coverage = 0.0;
    double m = 0.0;
  };
  std::vector<Cell> out(cells);
  const RngStream master(opts.seed);

  auto run_cell = [&](std::size_t c) {
    const std::size_t gi = c / opts.reps;
    const std::size_t rep = c % opts.reps;
    ScenarioConfig sc = opts.scenario;
    sc.n_train = opts.n_grid[gi];
    sc.n_test = opts.n_test;
    const auto stream = master.derive({opts.n_grid[gi], rep});
    const auto data = gen_train_test(sc, stream);
    const auto obs = data.train.observed();
    SplitPairFit fit = opts.oracle_means
                           ? fit_split_pair_with_means(
                                 obs, opts.cfg, [](const Covariate& x) { return outcome_mean(1, x); },
                                 [](const Covariate& x) { return outcome_mean(0, x); }, stream.derive(7))
                           : fit_split_pair(obs, opts.cfg, stream.derive(7));
    std::size_t hit = 0;
    for (std::size_t i = 0; i < data.test.size(); ++i)
      if (fit.map(data.test.x[i]).contains(data.test.delta(i))) ++hit;
    out[c] = {static_cast<double>(hit) / static_cast<double>(data.test.size()),
              static_cast<double>(fit.residuals.split.m())};
  };

  parallel_for(cells, opts.parallelism, run_cell);

  std::vector<RateRow> rows;
  const double target = 1.0 - opts.cfg.alpha;
  for (std::size_t gi = 0; gi < opts.n_grid.size(); ++gi) {
    RateRow row;
    row.n = opts.n_grid[gi];
    row.reps = opts.reps;
    for (std::size_t rep = 0; rep < opts.reps; ++rep) {
      const auto& cell = out[gi * opts.reps + rep];
      row.mean_abs_error += std::abs(cell.coverage - target);
      row.mean_coverage += cell.coverage;
      row.mean_m += cell.m;
    }
    const auto r = static_cast<double>(opts.reps);
    row.mean_abs_error /= r;
    row.mean_coverage /= r;
    row.mean_m /= r;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace itepi
