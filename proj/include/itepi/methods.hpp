#pragma once

// One entry point for the six ITE interval methods, keyed by MethodConfig.

#include <optional>
#include <stdexcept>
#include <string>

#include "itepi/conformal.hpp"
#include "itepi/dgp.hpp"
#include "itepi/interval.hpp"
#include "itepi/split_pair.hpp"

namespace itepi {

enum class MethodKind { naive, nested_inexact, nested_exact, dr, ipw, split_pair };

inline constexpr MethodKind kAllMethods[] = {MethodKind::naive, MethodKind::nested_inexact,
                                             MethodKind::nested_exact, MethodKind::dr,
                                             MethodKind::ipw, MethodKind::split_pair};

inline const char* to_string(MethodKind m) {
  switch (m) {
    case MethodKind::naive: return "naive";
    case MethodKind::nested_inexact: return "nested_inexact";
    case MethodKind::nested_exact: return "nested_exact";
    case MethodKind::dr: return "dr";
    case MethodKind::ipw: return "ipw";
    case MethodKind::split_pair: return "split_pair";
  }
  return "?";
}

inline MethodKind parse_method_kind(const std::string& s) {
  for (auto m : kAllMethods)
    if (s == to_string(m)) return m;
  throw std::invalid_argument("unknown method '" + s + "'");
}

struct MethodConfig {
  MethodKind method = MethodKind::split_pair;
  double alpha = 0.1;
  // Nested-exact containment level; defaults to alpha / 2, with the first
  // stage run at alpha - gamma.
  std::optional<double> gamma;
  LearnerConfig outcome;
  LearnerConfig propensity;
  PropensityMode propensity_mode = PropensityMode::estimated;
  MetaScore meta_score = MetaScore::cqr;
  double split_ratio = 0.5;  // split-pair only
  std::string name;

  std::string id() const { return name.empty() ? to_string(method) : name; }

  MethodConfig at_alpha(double a) const {
    MethodConfig c = *this;
    c.alpha = a;
    return c;
  }
};

// Builds the method's interval map from observed data only. `oracle` is the
// true propensity function, consulted only in oracle mode.
inline IntervalMap build_method(const ObservedData& train, const MethodConfig& cfg,
                                const PropensityFn& oracle, RngStream rng) {
  if (!(cfg.alpha > 0.0 && cfg.alpha < 1.0)) throw std::domain_error("method alpha must lie in (0, 1)");
  ConformalOptions opts{cfg.outcome, cfg.propensity, cfg.propensity_mode, oracle};
  switch (cfg.method) {
    case MethodKind::naive:
      return naive_method(train, cfg.alpha, opts, rng);
    case MethodKind::nested_inexact:
      return nested_inexact_ite(train, cfg.alpha, opts, rng);
    case MethodKind::nested_exact: {
      const double gamma = cfg.gamma.value_or(cfg.alpha / 2.0);
      if (!(gamma > 0.0 && gamma < cfg.alpha))
        throw std::domain_error("nested_exact: gamma must lie in (0, alpha)");
      return nested_exact_ite(train, cfg.alpha - gamma, gamma, opts, rng);
    }
    case MethodKind::dr:
      return metalearner_interval(train, PseudoKind::dr, cfg.alpha, opts, rng, cfg.meta_score);
    case MethodKind::ipw:
      return metalearner_interval(train, PseudoKind::ipw, cfg.alpha, opts, rng, cfg.meta_score);
    case MethodKind::split_pair: {
      SplitPairConfig sp{cfg.alpha, cfg.split_ratio, cfg.outcome};
      return build_interval(train, sp, rng);
    }
  }
  throw std::logic_error("unreachable method kind");
}

inline PropensityFn oracle_propensity(const ScenarioConfig& sc) {
  return [regime = sc.propensity](const Covariate& x) { return propensity_eval(regime, x); };
}

}  // namespace itepi
