#pragma once

// Conformal ITE interval baselines.
//
//  * counterfactual_interval: weighted split-CQR for one potential outcome,
//    with likelihood-ratio weights built from the (oracle or estimated)
//    propensity score. The test point's own weight is the atom at +inf.
//  * naive_ite: Minkowski difference of the two arm intervals (Bonferroni).
//  * nested_inexact_ite / nested_exact_ite: in-study ITE intervals from
//    counterfactual intervals, then either endpoint regression or a second
//    conformal step over the interval-valued data.
//  * metalearner_interval: split-CQR on DR or IPW pseudo-outcomes.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "itepi/dgp.hpp"
#include "itepi/interval.hpp"
#include "itepi/learners.hpp"
#include "itepi/rng.hpp"

namespace itepi {

// ---------------------------------------------------------------------------
// Scores and weighted quantiles.

inline double cqr_score(double y, double lo, double hi) { return std::max(lo - y, y - hi); }

namespace detail {
// Relative slack when comparing cumulative mass against level * total, so that
// exact rational thresholds like (n+1)(1-alpha) are not lost to rounding.
inline constexpr double kMassSlack = 1e-12;
}  // namespace detail

// Sorted scores with cumulative weights, for repeated quantile queries with a
// varying mass at +inf.
class WeightedScores {
 public:
  WeightedScores() = default;

  WeightedScores(std::span<const double> values, std::span<const double> weights) {
    if (values.size() != weights.size())
      throw std::invalid_argument("weighted_quantile: values and weights differ in length");
    std::vector<std::size_t> idx(values.size());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    for (double w : weights) {
      if (!(w >= 0.0)) throw std::domain_error("weighted_quantile: weights must be nonnegative");
    }
    std::stable_sort(idx.begin(), idx.end(),
                     [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
    sorted_.reserve(idx.size());
    cum_.reserve(idx.size());
    double c = 0.0;
    for (auto i : idx) {
      c += weights[i];
      sorted_.push_back(values[i]);
      cum_.push_back(c);
    }
  }

  std::size_t size() const { return sorted_.size(); }
  double total() const { return cum_.empty() ? 0.0 : cum_.back(); }

  // Smallest v whose normalized cumulative weight reaches level, with an
  // extra atom of mass tail_mass at +inf.
  double quantile(double level, double tail_mass = 0.0) const {
    if (!(tail_mass >= 0.0)) throw std::domain_error("weighted_quantile: tail mass must be nonnegative");
    const double total_mass = total() + tail_mass;
    if (!(total_mass > 0.0)) throw std::invalid_argument("weighted_quantile: total mass must be positive");
    const double target = level * total_mass * (1.0 - detail::kMassSlack);
    const auto it = std::lower_bound(cum_.begin(), cum_.end(), target);
    if (it == cum_.end()) return kInf;
    return sorted_[static_cast<std::size_t>(it - cum_.begin())];
  }

 private:
  std::vector<double> sorted_;
  std::vector<double> cum_;
};

inline double weighted_quantile(std::span<const double> values, std::span<const double> weights,
                                double level, double tail_mass = 0.0) {
  return WeightedScores(values, weights).quantile(level, tail_mass);
}

// Split-conformal threshold with exchangeable (unit) weights: the
// ceil((1 - alpha)(n + 1))-th smallest score, or +inf if that exceeds n.
inline double conformal_threshold(std::span<const double> scores, double alpha) {
  if (scores.empty()) return kInf;
  const std::vector<double> ones(scores.size(), 1.0);
  return weighted_quantile(scores, ones, 1.0 - alpha, 1.0);
}

// ---------------------------------------------------------------------------
// Shared configuration.

enum class PropensityMode { oracle, estimated };
using PropensityFn = std::function<double(const Covariate&)>;

// Population: calibrate Y(t) on arm-t units toward the covariate law of the
// whole population (new units). Missing: toward the opposite arm's covariate
// law (in-study counterfactuals).
enum class CounterfactualTarget { population, missing };

struct ConformalOptions {
  LearnerConfig outcome;     // quantile / mean learners
  LearnerConfig propensity;  // propensity learner (estimated mode)
  PropensityMode mode = PropensityMode::estimated;
  PropensityFn oracle;       // required in oracle mode
};

namespace detail {

inline ObservedData subset(const ObservedData& d, std::span<const std::size_t> rows) {
  ObservedData out;
  out.x.reserve(rows.size());
  out.t.reserve(rows.size());
  out.y.reserve(rows.size());
  for (auto i : rows) {
    out.x.push_back(d.x[i]);
    out.t.push_back(d.t[i]);
    out.y.push_back(d.y[i]);
  }
  return out;
}

inline std::vector<std::size_t> arm_rows(const ObservedData& d, int arm) {
  std::vector<std::size_t> rows;
  for (std::size_t i = 0; i < d.size(); ++i)
    if (d.t[i] == arm) rows.push_back(i);
  return rows;
}

struct Halves {
  std::vector<std::size_t> first;
  std::vector<std::size_t> second;
};

// Random split with floor(ratio * n) rows in the first part. Both parts come
// back in increasing row order.
inline Halves random_split(std::size_t n, double ratio, RngStream& rng) {
  auto perm = rng.permutation(n);
  const auto k = static_cast<std::size_t>(std::floor(ratio * static_cast<double>(n)));
  Halves h{{perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(k)},
           {perm.begin() + static_cast<std::ptrdiff_t>(k), perm.end()}};
  std::sort(h.first.begin(), h.first.end());
  std::sort(h.second.begin(), h.second.end());
  return h;
}

inline LearnerConfig seeded(LearnerConfig cfg, RngStream& rng, std::uint64_t role) {
  cfg.seed = rng.derive(role).key();
  return cfg;
}

inline void require_both_arms(const ObservedData& d, const char* who) {
  const auto treated = d.treated_count();
  if (treated == 0 || treated == d.size())
    throw MethodError(std::string(who) + ": both treatment arms must be present");
}

inline std::string fmt(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Propensity function for a fold: oracle pass-through or a fitted learner.
inline PropensityFn propensity_for(const ObservedData& fold, const ConformalOptions& opts,
                                   RngStream& rng, std::uint64_t role) {
  if (opts.mode == PropensityMode::oracle) {
    if (!opts.oracle) throw std::invalid_argument("oracle propensity mode needs a propensity function");
    return [fn = opts.oracle](const Covariate& x) {
      return std::clamp(fn(x), kPropensityClip, 1.0 - kPropensityClip);
    };
  }
  auto model = std::make_shared<const FittedModel>(
      fit_propensity(fold.x, fold.t, seeded(opts.propensity, rng, role)));
  return [model](const Covariate& x) { return model->predict(x); };
}

inline double likelihood_ratio(int arm, CounterfactualTarget target, double e) {
  if (target == CounterfactualTarget::population) return arm == 1 ? 1.0 / e : 1.0 / (1.0 - e);
  return arm == 1 ? (1.0 - e) / e : e / (1.0 - e);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Weighted split-CQR for Y(arm).

inline IntervalMap counterfactual_interval(const ObservedData& train, int arm, double alpha,
                                           const ConformalOptions& opts, RngStream rng,
                                           CounterfactualTarget target = CounterfactualTarget::population) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("counterfactual_interval: alpha in (0,1)");
  detail::require_both_arms(train, "counterfactual_interval");

  auto split_rng = rng.derive(1);
  const auto halves = detail::random_split(train.size(), 0.5, split_rng);
  const auto proper = detail::subset(train, halves.first);
  const auto calib = detail::subset(train, halves.second);

  const auto proper_arm = detail::subset(proper, detail::arm_rows(proper, arm));
  const auto calib_rows = detail::arm_rows(calib, arm);
  if (proper_arm.size() == 0 || calib_rows.empty())
    return IntervalMap::trivial("arm has no units in the proper-training or calibration fold");

  PropensityFn e_hat;
  try {
    e_hat = detail::propensity_for(proper, opts, rng, 2);
  } catch (const FitError& err) {
    return IntervalMap::trivial(err.what());
  }

  struct State {
    QuantileBand band;
    WeightedScores scores;
    PropensityFn e_hat;
    int arm;
    CounterfactualTarget target;
    double alpha;
  };
  auto state = std::make_shared<State>();
  state->band = fit_quantile_band(proper_arm.x, proper_arm.y, alpha / 2.0, 1.0 - alpha / 2.0,
                                  detail::seeded(opts.outcome, rng, 3));
  state->e_hat = e_hat;
  state->arm = arm;
  state->target = target;
  state->alpha = alpha;

  std::vector<double> scores;
  std::vector<double> weights;
  double min_w = kInf;
  for (auto i : calib_rows) {
    const auto [lo, hi] = state->band.predict(calib.x[i]);
    scores.push_back(cqr_score(calib.y[i], lo, hi));
    weights.push_back(detail::likelihood_ratio(arm, target, e_hat(calib.x[i])));
    min_w = std::min(min_w, weights.back());
  }
  state->scores = WeightedScores(scores, weights);

  IntervalMap map([state](const Covariate& x) {
    const double w = detail::likelihood_ratio(state->arm, state->target, state->e_hat(x));
    const double q = state->scores.quantile(1.0 - state->alpha, w);
    if (!std::isfinite(q)) return Interval::whole();
    const auto [lo, hi] = state->band.predict(x);
    return Interval{lo - q, hi + q};
  });
  if (!std::isfinite(state->scores.quantile(1.0 - alpha, min_w)))
    map.mark_degenerate("calibration set too small for the requested level");
  map.set_meta("level", detail::fmt(1.0 - alpha));
  map.set_meta("n_calibration", std::to_string(calib_rows.size()));
  map.set_meta("n_proper", std::to_string(proper_arm.size()));
  return map;
}

// ---------------------------------------------------------------------------
// Naive Bonferroni combination.

inline IntervalMap naive_ite(IntervalMap c1, IntervalMap c0) {
  const bool degenerate = c1.degenerate() || c0.degenerate();
  IntervalMap map([c1 = std::move(c1), c0 = std::move(c0)](const Covariate& x) {
    return minkowski_difference(c1(x), c0(x));
  });
  if (degenerate) map.mark_degenerate("a first-stage arm interval is degenerate");
  return map;
}

inline IntervalMap naive_method(const ObservedData& train, double alpha, const ConformalOptions& opts,
                                RngStream rng) {
  auto c1 = counterfactual_interval(train, 1, alpha / 2.0, opts, rng.derive(11));
  auto c0 = counterfactual_interval(train, 0, alpha / 2.0, opts, rng.derive(10));
  auto map = naive_ite(std::move(c1), std::move(c0));
  map.set_meta("first_stage_level", detail::fmt(1.0 - alpha / 2.0));
  map.set_meta("nominal", detail::fmt(1.0 - alpha));
  return map;
}

// ---------------------------------------------------------------------------
// Nested methods.

namespace detail {

struct InStudyIntervals {
  ObservedData fold;  // the units carrying in-study intervals
  std::vector<double> lower;
  std::vector<double> upper;
};

// In-study ITE intervals for `fold`: observed outcome against the
// opposite arm's counterfactual interval.
inline InStudyIntervals in_study_from_arms(const ObservedData& fold, const IntervalMap& c1,
                                           const IntervalMap& c0) {
  InStudyIntervals out;
  out.fold = fold;
  for (std::size_t i = 0; i < fold.size(); ++i) {
    const auto& x = fold.x[i];
    const double y = fold.y[i];
    if (fold.t[i]) {
      const auto c = c0(x);
      out.lower.push_back(y - c.hi);
      out.upper.push_back(y - c.lo);
    } else {
      const auto c = c1(x);
      out.lower.push_back(c.lo - y);
      out.upper.push_back(c.hi - y);
    }
  }
  return out;
}

// Counterfactual intervals trained on one half, applied to the other half's
// missing potential outcomes.
inline InStudyIntervals in_study_ite(const ObservedData& train, double first_stage_alpha,
                                     const ConformalOptions& opts, RngStream& rng) {
  auto split_rng = rng.derive(21);
  const auto halves = random_split(train.size(), 0.5, split_rng);
  const auto fold_a = subset(train, halves.first);
  require_both_arms(fold_a, "nested first stage");
  const auto c1 = counterfactual_interval(fold_a, 1, first_stage_alpha, opts, rng.derive(22),
                                          CounterfactualTarget::missing);
  const auto c0 = counterfactual_interval(fold_a, 0, first_stage_alpha, opts, rng.derive(23),
                                          CounterfactualTarget::missing);
  return in_study_from_arms(subset(train, halves.second), c1, c0);
}

inline IntervalMap regress_endpoints(const InStudyIntervals& ins, const LearnerConfig& cfg, RngStream& rng) {
  std::vector<Covariate> xs;
  std::vector<double> lo, hi;
  for (std::size_t i = 0; i < ins.fold.size(); ++i) {
    if (!std::isfinite(ins.lower[i]) || !std::isfinite(ins.upper[i])) continue;
    xs.push_back(ins.fold.x[i]);
    lo.push_back(ins.lower[i]);
    hi.push_back(ins.upper[i]);
  }
  if (xs.empty()) return IntervalMap::trivial("no finite in-study ITE intervals to regress");

  auto lower = std::make_shared<const FittedModel>(fit_mean(xs, lo, seeded(cfg, rng, 31)));
  auto upper = std::make_shared<const FittedModel>(fit_mean(xs, hi, seeded(cfg, rng, 32)));
  IntervalMap map([lower, upper](const Covariate& x) {
    const double a = lower->predict(x);
    const double b = upper->predict(x);
    return Interval{std::min(a, b), std::max(a, b)};
  });
  map.set_meta("n_regressed", std::to_string(xs.size()));
  map.set_meta("guarantee", "none");
  return map;
}

}  // namespace detail

// Endpoint regression of in-study ITE intervals. No coverage guarantee.
inline IntervalMap nested_inexact_ite(const ObservedData& train, double alpha,
                                      const ConformalOptions& opts, RngStream rng) {
  detail::require_both_arms(train, "nested_inexact_ite");
  const auto ins = detail::in_study_ite(train, alpha, opts, rng);
  auto map = detail::regress_endpoints(ins, opts.outcome, rng);
  map.set_meta("first_stage_level", detail::fmt(1.0 - alpha));
  return map;
}

// Same endpoint regression, with the counterfactual interval maps supplied
// (for example the true conditional quantile bands) and every unit of
// `train` carrying an in-study interval.
inline IntervalMap nested_inexact_from_arms(const ObservedData& train, const IntervalMap& c1,
                                            const IntervalMap& c0, const LearnerConfig& cfg,
                                            RngStream rng) {
  return detail::regress_endpoints(detail::in_study_from_arms(train, c1, c0), cfg, rng);
}

// Score of an interval-valued observation against fitted endpoint maps:
// the smallest inflation s with [lo_i, hi_i] inside [L(x) - s, U(x) + s].
inline double interval_score(double fitted_lo, double fitted_hi, double lo_i, double hi_i) {
  return std::max(fitted_lo - lo_i, hi_i - fitted_hi);
}

// Second conformal step over in-study intervals. First stage at level
// 1 - alpha1, containment at level 1 - gamma; nominal ITE coverage 1 - alpha1 - gamma.
inline IntervalMap nested_exact_ite(const ObservedData& train, double alpha1, double gamma,
                                    const ConformalOptions& opts, RngStream rng) {
  if (!(gamma > 0.0 && gamma < 1.0)) throw std::domain_error("nested_exact_ite: gamma in (0,1)");
  detail::require_both_arms(train, "nested_exact_ite");
  const auto ins = detail::in_study_ite(train, alpha1, opts, rng);

  auto split_rng = rng.derive(41);
  const auto halves = detail::random_split(ins.fold.size(), 0.5, split_rng);

  std::vector<Covariate> xs;
  std::vector<double> lo, hi;
  for (auto i : halves.first) {
    if (!std::isfinite(ins.lower[i]) || !std::isfinite(ins.upper[i])) continue;
    xs.push_back(ins.fold.x[i]);
    lo.push_back(ins.lower[i]);
    hi.push_back(ins.upper[i]);
  }
  if (xs.empty() || halves.second.empty())
    return IntervalMap::trivial("insufficient folds for the second conformal step");

  auto lower = std::make_shared<const FittedModel>(fit_mean(xs, lo, detail::seeded(opts.outcome, rng, 42)));
  auto upper = std::make_shared<const FittedModel>(fit_mean(xs, hi, detail::seeded(opts.outcome, rng, 43)));

  std::vector<double> scores;
  for (auto i : halves.second) {
    const auto& x = ins.fold.x[i];
    scores.push_back(interval_score(lower->predict(x), upper->predict(x), ins.lower[i], ins.upper[i]));
  }
  const double q = conformal_threshold(scores, gamma);
  if (!std::isfinite(q)) {
    auto map = IntervalMap::trivial("calibration fold too small for the containment level");
    map.set_meta("first_stage_level", detail::fmt(1.0 - alpha1));
    map.set_meta("gamma", detail::fmt(gamma));
    return map;
  }
  IntervalMap map([lower, upper, q](const Covariate& x) {
    const double a = lower->predict(x);
    const double b = upper->predict(x);
    return Interval{std::min(a, b) - q, std::max(a, b) + q};
  });
  map.set_meta("first_stage_level", detail::fmt(1.0 - alpha1));
  map.set_meta("gamma", detail::fmt(gamma));
  map.set_meta("nominal", detail::fmt(1.0 - alpha1 - gamma));
  map.set_meta("n_calibration", std::to_string(scores.size()));
  return map;
}

// ---------------------------------------------------------------------------
// Pseudo-outcome meta-learners.

enum class PseudoKind { dr, ipw };
enum class MetaScore { cqr, absolute };

inline double pseudo_outcome_ipw(int t, double y, double e_hat) {
  return (t / e_hat - (1 - t) / (1.0 - e_hat)) * y;
}

inline double pseudo_outcome_dr(int t, double y, double e_hat, double mu1_hat, double mu0_hat) {
  return (mu1_hat - mu0_hat) + t * (y - mu1_hat) / e_hat - (1 - t) * (y - mu0_hat) / (1.0 - e_hat);
}

struct Nuisances {
  PropensityFn e_hat;
  std::function<double(const Covariate&)> mu1;
  std::function<double(const Covariate&)> mu0;
};

inline double pseudo_outcome(PseudoKind kind, const Nuisances& nu, const Covariate& x, int t, double y) {
  const double e = std::clamp(nu.e_hat(x), kPropensityClip, 1.0 - kPropensityClip);
  if (kind == PseudoKind::ipw) return pseudo_outcome_ipw(t, y, e);
  return pseudo_outcome_dr(t, y, e, nu.mu1(x), nu.mu0(x));
}

// Calibration stage of the meta-learner with the nuisances supplied: a band
// fit to pseudo-outcomes on fold_a, conformalized on fold_b.
inline IntervalMap metalearner_from_nuisances(const ObservedData& fold_a, const ObservedData& fold_b,
                                              PseudoKind kind, const Nuisances& nu, double alpha,
                                              const LearnerConfig& outcome, RngStream rng,
                                              MetaScore score = MetaScore::cqr) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("metalearner_interval: alpha in (0,1)");
  if (fold_a.size() == 0 || fold_b.size() == 0) return IntervalMap::trivial("empty fold");
  std::vector<double> pseudo_a(fold_a.size());
  for (std::size_t i = 0; i < fold_a.size(); ++i)
    pseudo_a[i] = pseudo_outcome(kind, nu, fold_a.x[i], fold_a.t[i], fold_a.y[i]);

  // Fitted band: quantile pair for CQR, a single mean fit (lo == hi) otherwise.
  std::shared_ptr<const QuantileBand> band;
  if (score == MetaScore::cqr) {
    band = std::make_shared<const QuantileBand>(fit_quantile_band(
        fold_a.x, pseudo_a, alpha / 2.0, 1.0 - alpha / 2.0, detail::seeded(outcome, rng, 55)));
  } else {
    auto m = fit_mean(fold_a.x, pseudo_a, detail::seeded(outcome, rng, 55));
    band = std::make_shared<const QuantileBand>(QuantileBand{m, m});
  }

  std::vector<double> scores(fold_b.size());
  for (std::size_t i = 0; i < fold_b.size(); ++i) {
    const double y_tilde = pseudo_outcome(kind, nu, fold_b.x[i], fold_b.t[i], fold_b.y[i]);
    const auto [lo, hi] = band->predict(fold_b.x[i]);
    scores[i] = cqr_score(y_tilde, lo, hi);
  }
  const double q = conformal_threshold(scores, alpha);
  if (!std::isfinite(q)) return IntervalMap::trivial("calibration fold too small for the level");

  IntervalMap map([band, q](const Covariate& x) {
    const auto [lo, hi] = band->predict(x);
    return Interval{lo - q, hi + q};
  });
  map.set_meta("pseudo", kind == PseudoKind::dr ? "dr" : "ipw");
  map.set_meta("score", score == MetaScore::cqr ? "cqr" : "absolute");
  map.set_meta("n_calibration", std::to_string(fold_b.size()));
  map.set_meta("threshold", detail::fmt(q));
  return map;
}

inline IntervalMap metalearner_interval(const ObservedData& train, PseudoKind kind, double alpha,
                                        const ConformalOptions& opts, RngStream rng,
                                        MetaScore score = MetaScore::cqr) {
  if (!(alpha > 0.0 && alpha < 1.0)) throw std::domain_error("metalearner_interval: alpha in (0,1)");
  detail::require_both_arms(train, "metalearner_interval");

  auto split_rng = rng.derive(51);
  const auto halves = detail::random_split(train.size(), 0.5, split_rng);
  const auto fold_a = detail::subset(train, halves.first);
  const auto fold_b = detail::subset(train, halves.second);
  if (fold_b.size() == 0) return IntervalMap::trivial("empty calibration fold");

  Nuisances nu;
  try {
    nu.e_hat = detail::propensity_for(fold_a, opts, rng, 52);
    if (kind == PseudoKind::dr) {
      const auto a1 = detail::subset(fold_a, detail::arm_rows(fold_a, 1));
      const auto a0 = detail::subset(fold_a, detail::arm_rows(fold_a, 0));
      auto m1 = std::make_shared<const FittedModel>(fit_mean(a1.x, a1.y, detail::seeded(opts.outcome, rng, 53)));
      auto m0 = std::make_shared<const FittedModel>(fit_mean(a0.x, a0.y, detail::seeded(opts.outcome, rng, 54)));
      nu.mu1 = [m1](const Covariate& x) { return m1->predict(x); };
      nu.mu0 = [m0](const Covariate& x) { return m0->predict(x); };
    }
  } catch (const FitError& err) {
    return IntervalMap::trivial(std::string("nuisance fit failed: ") + err.what());
  }

  return metalearner_from_nuisances(fold_a, fold_b, kind, nu, alpha, opts.outcome, rng, score);
}

}  // namespace itepi
