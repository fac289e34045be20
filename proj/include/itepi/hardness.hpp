#pragma once

// Constructions behind the ITE impossibility argument, made executable:
//   mirror  - keep the observed triples, rewrite the missing potential
//             outcome so every unit has delta == y
//   mixing  - T_eps = (1 - A) T + A B with A ~ Bern(eps), B ~ Bern(1/2),
//             giving propensity (1 - eps) e(x) + eps / 2
//   probe   - how often a method's interval at a fresh covariate contains
//             each y on a grid

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "itepi/dgp.hpp"
#include "itepi/methods.hpp"
#include "itepi/parallel.hpp"
#include "itepi/rng.hpp"

namespace itepi {

struct MirrorSpec {
  double y_target = 0.0;
};

struct MixSpec {
  double epsilon = 0.0;
};

namespace detail {

// b with fl(a - b) == y when one exists, else fl(a - y). When ulp(b) is
// coarser than ulp(y) the attainable differences can step over y.
inline double mirror_subtrahend(double a, double y) {
  const double start = a - y;
  for (double dir : {kInf, -kInf}) {
    double b = start;
    for (int step = 0; step < 4; ++step, b = std::nextafter(b, dir))
      if (a - b == y) return b;
  }
  return start;
}

// a with fl(a - b) == y when one exists, else fl(b + y).
inline double mirror_minuend(double b, double y) {
  const double start = b + y;
  for (double dir : {kInf, -kInf}) {
    double a = start;
    for (int step = 0; step < 4; ++step, a = std::nextafter(a, dir))
      if (a - b == y) return a;
  }
  return start;
}

}  // namespace detail

// Observed columns (x, t, y_obs) are left untouched; the counterfactual
// column is rewritten to the nearest double consistent with the effect, and
// the stored ITE is y exactly.
inline Dataset construct_mirror(const Dataset& data, double y) {
  if (!std::isfinite(y)) throw std::domain_error("construct_mirror: y must be finite");
  Dataset out = data;
  for (std::size_t i = 0; i < out.size(); ++i) {
    if (out.t[i])
      out.y0[i] = detail::mirror_subtrahend(out.y1[i], y);
    else
      out.y1[i] = detail::mirror_minuend(out.y0[i], y);
    out.ite[i] = y;
  }
  return out;
}

inline Dataset construct_mirror(const Dataset& data, const MirrorSpec& spec) {
  return construct_mirror(data, spec.y_target);
}

inline double implied_propensity(double e, double epsilon) { return (1.0 - epsilon) * e + epsilon / 2.0; }

inline PropensityFn mixed_propensity(PropensityFn base, double epsilon) {
  return [base = std::move(base), epsilon](const Covariate& x) { return implied_propensity(base(x), epsilon); };
}

inline Dataset mix_propensity(const Dataset& data, double epsilon, RngStream rng) {
  if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::domain_error("mix_propensity: epsilon must lie in [0, 1]");
  Dataset out = data;
  if (epsilon == 0.0) return out;
  for (std::size_t i = 0; i < out.size(); ++i) {
    const bool a = epsilon == 1.0 || rng.bernoulli(epsilon);
    const bool b = rng.bernoulli(0.5);
    if (a) out.t[i] = b ? 1 : 0;
  }
  out.refresh_observed();
  return out;
}

inline Dataset mix_propensity(const Dataset& data, const MixSpec& spec, RngStream rng) {
  return mix_propensity(data, spec.epsilon, std::move(rng));
}

// FNV-1a over the raw bytes of the observed columns.
inline std::uint64_t observed_hash(const Dataset& d) {
  std::uint64_t h = 1469598103934665603ULL;
  auto eat = [&h](const void* p, std::size_t n) {
    const auto* b = static_cast<const unsigned char*>(p);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= b[i];
      h *= 1099511628211ULL;
    }
  };
  eat(d.x.data(), d.x.size() * sizeof(Covariate));
  eat(d.t.data(), d.t.size());
  eat(d.y_obs.data(), d.y_obs.size() * sizeof(double));
  return h;
}

struct ProbeRow {
  double y = 0.0;
  double containment = 0.0;  // fraction of (rep, test covariate) draws with y in C(X)
  std::size_t draws = 0;
};

struct ProbeOptions {
  std::size_t reps = 20;
  std::size_t covariates_per_rep = 200;
  std::uint64_t seed = 1;
  std::size_t parallelism = 1;
};

// For each rep: draw training data from the scenario, build the method, then
// evaluate its interval at fresh covariates and record whether each y on the
// grid falls inside. Failed builds count as the whole real line.
inline std::vector<ProbeRow> triviality_probe(const MethodConfig& method, const ScenarioConfig& scenario,
                                              const std::vector<double>& y_grid, const ProbeOptions& opts = {}) {
  scenario.validate();
  if (opts.reps < 1 || opts.covariates_per_rep < 1) throw std::invalid_argument("probe: reps and covariates must be >= 1");
  const RngStream master(opts.seed);
  std::vector<std::vector<std::size_t>> hits(opts.reps, std::vector<std::size_t>(y_grid.size(), 0));
  const auto oracle = oracle_propensity(scenario);

  parallel_for(opts.reps, opts.parallelism, [&](std::size_t rep) {
    const auto stream = master.derive({0x9e0bu, rep});
    const auto train = gen_dataset(scenario, scenario.n_train, stream.derive(1));
    IntervalMap map;
    try {
      map = build_method(train.observed(), method, oracle, stream.derive(2));
    } catch (const MethodError&) {
    } catch (const FitError&) {
    }
    RngStream cov_rng = stream.derive(3);
    const auto xs = scenario.checkerboard() ? gen_uniform_covariates(opts.covariates_per_rep, cov_rng)
                                            : gen_covariates(scenario.covariates, opts.covariates_per_rep, cov_rng);
    for (const auto& x : xs) {
      const Interval c = map(x);
      for (std::size_t j = 0; j < y_grid.size(); ++j)
        if (c.contains(y_grid[j])) ++hits[rep][j];
    }
  });

  std::vector<ProbeRow> rows;
  const std::size_t draws = opts.reps * opts.covariates_per_rep;
  for (std::size_t j = 0; j < y_grid.size(); ++j) {
    std::size_t total = 0;
    for (const auto& h : hits) total += h[j];
    rows.push_back({y_grid[j], static_cast<double>(total) / static_cast<double>(draws), draws});
  }
  return rows;
}

}  // namespace itepi
