#pragma once

// Synthetic populations for ITE interval benchmarking.
//
// Main design: X_j = Phi(X'_j) with X' bivariate normal (independent, or
// shared-factor correlated with rho_x = 0.9), mu_1(x) = f(x1) f(x2),
// mu_0 = 0, common noise scale sigma(x) (1, or -log x1), error correlation
// rho between the two arms, and treatment drawn from one of three
// propensity regimes.
//
// Checkerboard design: X uniform on the unit square, a 10x10 board with
// e(x) = 0.95 on even cells and 0.05 on odd cells, and cell-dependent noise
// sigma_0 = 1 + 9 R_0, sigma_1 = 1 + 9 R_1 where R_0 marks the high-propensity
// cells.
//
// Both potential outcomes are retained so the realized ITE can be scored.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "itepi/interval.hpp"
#include "itepi/normal.hpp"
#include "itepi/rng.hpp"

namespace itepi {

enum class CovariateKind { independent, correlated };
enum class NoiseKind { homoscedastic, heteroscedastic };
enum class PropensityKind { beta24, constant, checkerboard };

struct CovariateDesign {
  CovariateKind kind = CovariateKind::independent;
  double rho_x = 0.9;  // used only by the correlated design
};

struct OutcomeModel {
  NoiseKind noise = NoiseKind::homoscedastic;
  double rho = 0.0;          // Corr(eps_0, eps_1)
  double log_offset = 1e-12; // sigma(x) = -log(max(x1, log_offset))
};

struct PropensityRegime {
  PropensityKind kind = PropensityKind::beta24;
  double p = 0.5;  // constant regime only
};

struct ScenarioConfig {
  CovariateDesign covariates;
  OutcomeModel outcome;
  PropensityRegime propensity;
  std::size_t n_train = 1000;
  std::size_t n_test = 2000;
  std::uint64_t seed = 0;
  std::string name;  // optional label; id() derives one when empty

  void validate() const {
    if (n_train < 4) throw std::invalid_argument("scenario: n_train must be >= 4");
    if (n_test < 1) throw std::invalid_argument("scenario: n_test must be >= 1");
    if (!(outcome.rho >= -1.0 && outcome.rho <= 1.0))
      throw std::invalid_argument("scenario: rho must lie in [-1, 1]");
    if (!(covariates.rho_x >= 0.0 && covariates.rho_x < 1.0))
      throw std::invalid_argument("scenario: rho_x must lie in [0, 1)");
    if (!(outcome.log_offset > 0.0))
      throw std::invalid_argument("scenario: log_offset must be positive");
    if (propensity.kind == PropensityKind::constant &&
        !(propensity.p > 0.0 && propensity.p < 1.0))
      throw std::invalid_argument("scenario: constant propensity p must lie in (0, 1)");
  }

  bool checkerboard() const { return propensity.kind == PropensityKind::checkerboard; }

  std::string id() const;
};

struct FullUnit {
  Covariate x{};
  double y1 = 0.0;
  double y0 = 0.0;
  std::uint8_t t = 0;
  double y_obs = 0.0;

  double delta() const { return y1 - y0; }
};

// What an interval method is allowed to see.
struct ObservedData {
  std::vector<Covariate> x;
  std::vector<std::uint8_t> t;
  std::vector<double> y;

  std::size_t size() const { return x.size(); }
  std::size_t treated_count() const {
    return static_cast<std::size_t>(std::count(t.begin(), t.end(), std::uint8_t{1}));
  }
};

// Columnar collection of full units plus provenance.
struct Dataset {
  std::vector<Covariate> x;
  std::vector<std::uint8_t> t;
  std::vector<double> y_obs;
  std::vector<double> y1;
  std::vector<double> y0;
  // Realized ITE. fl(y1 - y0) for generated data; constructions that fix the
  // effect exactly (the mirror) store it here, since y0 + y need not be a
  // double.
  std::vector<double> ite;
  ScenarioConfig config;
  std::uint64_t stream_key = 0;

  std::size_t size() const { return x.size(); }
  double delta(std::size_t i) const { return ite[i]; }

  FullUnit unit(std::size_t i) const { return {x[i], y1[i], y0[i], t[i], y_obs[i]}; }

  void push_back(const FullUnit& u) {
    x.push_back(u.x);
    t.push_back(u.t);
    y_obs.push_back(u.y_obs);
    y1.push_back(u.y1);
    y0.push_back(u.y0);
    ite.push_back(u.delta());
  }

  ObservedData observed() const { return {x, t, y_obs}; }

  // Recompute y_obs from the potential outcomes and t.
  void refresh_observed() {
    for (std::size_t i = 0; i < size(); ++i) y_obs[i] = t[i] ? y1[i] : y0[i];
  }
};

// ---------------------------------------------------------------------------
// Closed-form pieces of the design.

// Beta(2,4) cdf: integral of 20 t (1-t)^3 over [0, x].
inline double beta24_cdf(double x) {
  if (!(x >= 0.0 && x <= 1.0)) throw std::domain_error("beta24_cdf: x must lie in [0, 1]");
  // 10x^2 - 20x^3 + 15x^4 - 4x^5 in Horner form.
  return x * x * (10.0 + x * (-20.0 + x * (15.0 - 4.0 * x)));
}

inline double link_f(double x) { return 2.0 / (1.0 + std::exp(-12.0 * (x - 0.5))); }

inline std::pair<int, int> checkerboard_cell(const Covariate& x) {
  auto cell = [](double v) {
    return std::clamp(static_cast<int>(std::floor(10.0 * v)), 0, 9);
  };
  return {cell(x[0]), cell(x[1])};
}

inline bool checkerboard_high(const Covariate& x) {
  const auto [i, j] = checkerboard_cell(x);
  return (i + j) % 2 == 0;
}

inline double propensity_eval(const PropensityRegime& regime, const Covariate& x) {
  switch (regime.kind) {
    case PropensityKind::beta24:
      return 0.25 * (1.0 + beta24_cdf(std::clamp(x[0], 0.0, 1.0)));
    case PropensityKind::constant:
      return regime.p;
    case PropensityKind::checkerboard:
      return checkerboard_high(x) ? 0.95 : 0.05;
  }
  return 0.5;
}

// E[Y(arm) | X = x].
inline double outcome_mean(int arm, const Covariate& x) {
  return arm == 1 ? link_f(x[0]) * link_f(x[1]) : 0.0;
}

inline double cate(const Covariate& x) { return outcome_mean(1, x) - outcome_mean(0, x); }

// Noise scale of Y(arm) at x.
inline double noise_scale(const ScenarioConfig& config, int arm, const Covariate& x) {
  if (config.checkerboard()) {
    const bool high = checkerboard_high(x);  // R_0(x)
    const double r = arm == 0 ? (high ? 1.0 : 0.0) : (high ? 0.0 : 1.0);
    return 1.0 + 9.0 * r;
  }
  if (config.outcome.noise == NoiseKind::homoscedastic) return 1.0;
  return -std::log(std::max(x[0], config.outcome.log_offset));
}

// ---------------------------------------------------------------------------
// Sampling.

inline std::vector<Covariate> gen_covariates(const CovariateDesign& design, std::size_t n,
                                             RngStream& rng) {
  constexpr double lo = std::numeric_limits<double>::denorm_min();
  const double hi = std::nextafter(1.0, 0.0);
  std::vector<Covariate> out(n);
  for (auto& x : out) {
    double z1 = rng.normal();
    double z2 = rng.normal();
    if (design.kind == CovariateKind::correlated) {
      const double z0 = rng.normal();
      const double a = std::sqrt(1.0 - design.rho_x);
      const double b = std::sqrt(design.rho_x);
      z1 = a * z1 + b * z0;
      z2 = a * z2 + b * z0;
    }
    x = {std::clamp(normal_cdf(z1), lo, hi), std::clamp(normal_cdf(z2), lo, hi)};
  }
  return out;
}

inline std::vector<Covariate> gen_uniform_covariates(std::size_t n, RngStream& rng) {
  std::vector<Covariate> out(n);
  for (auto& x : out) {
    const double a = rng.uniform();
    const double b = rng.uniform();
    x = {a, b};
  }
  return out;
}

// Standard-normal error pair with correlation rho; rho = -1 gives eps1 = -eps0.
inline std::pair<double, double> draw_errors(double rho, RngStream& rng) {
  const double e0 = rng.normal();
  const double eta = rng.normal();
  if (rho == -1.0) return {e0, -e0};
  return {e0, rho * e0 + std::sqrt(1.0 - rho * rho) * eta};
}

inline Dataset gen_dataset(const ScenarioConfig& config, std::size_t n, RngStream rng) {
  config.validate();
  Dataset ds;
  ds.config = config;
  ds.stream_key = rng.key();

  RngStream cov_rng = rng.derive(1);
  RngStream err_rng = rng.derive(2);
  RngStream trt_rng = rng.derive(3);

  ds.x = config.checkerboard() ? gen_uniform_covariates(n, cov_rng)
                               : gen_covariates(config.covariates, n, cov_rng);
  ds.t.resize(n);
  ds.y_obs.resize(n);
  ds.y1.resize(n);
  ds.y0.resize(n);
  ds.ite.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const Covariate& x = ds.x[i];
    const auto [e0, e1] = draw_errors(config.outcome.rho, err_rng);
    ds.y1[i] = outcome_mean(1, x) + noise_scale(config, 1, x) * e1;
    ds.y0[i] = outcome_mean(0, x) + noise_scale(config, 0, x) * e0;
    ds.t[i] = trt_rng.bernoulli(propensity_eval(config.propensity, x)) ? 1 : 0;
    ds.y_obs[i] = ds.t[i] ? ds.y1[i] : ds.y0[i];
    ds.ite[i] = ds.y1[i] - ds.y0[i];
  }
  return ds;
}

// Training sample of size n_train drawn from the config's own seed.
inline Dataset gen_dataset(const ScenarioConfig& config) {
  return gen_dataset(config, config.n_train, RngStream(config.seed));
}

// Covariates carry no information: X uniform, Y(1), Y(0) iid N(0, 1),
// T ~ Bernoulli(p). Delta ~ N(0, 2).
inline Dataset gen_uninformative_dataset(std::size_t n, double p, RngStream rng) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("uninformative dataset: p must lie in (0, 1)");
  auto cov_rng = rng.derive(1);
  auto err_rng = rng.derive(2);
  auto t_rng = rng.derive(3);
  Dataset d;
  d.config.propensity = {PropensityKind::constant, p};
  d.config.name = "uninformative";
  d.stream_key = rng.key();
  const auto xs = gen_uniform_covariates(n, cov_rng);
  for (std::size_t i = 0; i < n; ++i) {
    FullUnit u;
    u.x = xs[i];
    u.y1 = err_rng.normal();
    u.y0 = err_rng.normal();
    u.t = t_rng.bernoulli(p) ? 1 : 0;
    u.y_obs = u.t ? u.y1 : u.y0;
    d.push_back(u);
  }
  return d;
}

struct TrainTest {
  Dataset train;
  Dataset test;
};

inline TrainTest gen_train_test(const ScenarioConfig& config, RngStream rng) {
  return {gen_dataset(config, config.n_train, rng.derive(101)),
          gen_dataset(config, config.n_test, rng.derive(102))};
}

// ---------------------------------------------------------------------------
// key=value text format.

namespace detail {

inline std::string fmt_real(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string trim(std::string s) {
  const auto* ws = " \t\r\n";
  const auto b = s.find_first_not_of(ws);
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(ws);
  return s.substr(b, e - b + 1);
}

inline double parse_real(const std::string& key, const std::string& v) {
  std::size_t pos = 0;
  double out = 0.0;
  try {
    out = std::stod(v, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad real for '" + key + "': " + v);
  }
  if (pos != v.size()) throw std::invalid_argument("bad real for '" + key + "': " + v);
  return out;
}

inline std::uint64_t parse_count(const std::string& key, const std::string& v) {
  if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
    throw std::invalid_argument("bad count for '" + key + "': " + v);
  try {
    return std::stoull(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("bad count for '" + key + "': " + v);
  }
}

}  // namespace detail

inline const char* to_string(CovariateKind k) {
  return k == CovariateKind::independent ? "independent" : "correlated";
}
inline const char* to_string(NoiseKind k) {
  return k == NoiseKind::homoscedastic ? "homoscedastic" : "heteroscedastic";
}
inline const char* to_string(PropensityKind k) {
  switch (k) {
    case PropensityKind::beta24: return "beta24";
    case PropensityKind::constant: return "constant";
    case PropensityKind::checkerboard: return "checkerboard";
  }
  return "?";
}

inline std::string ScenarioConfig::id() const {
  if (!name.empty()) return name;
  std::string out;
  switch (propensity.kind) {
    case PropensityKind::beta24: out = "beta24"; break;
    case PropensityKind::constant: {
      char buf[32];
      std::snprintf(buf, sizeof buf, "const%g", propensity.p);
      out = buf;
      break;
    }
    case PropensityKind::checkerboard: out = "checkerboard"; break;
  }
  if (!checkerboard()) {
    out += outcome.noise == NoiseKind::homoscedastic ? "_homo" : "_hetero";
    out += covariates.kind == CovariateKind::independent ? "_ind" : "_corr";
  }
  char buf[32];
  std::snprintf(buf, sizeof buf, "_rho%g", outcome.rho);
  return out + buf;
}

// Apply one key=value pair to a scenario. Returns false for unknown keys.
inline bool apply_scenario_key(ScenarioConfig& cfg, const std::string& key,
                               const std::string& value) {
  if (key == "covariates") {
    if (value == "independent") cfg.covariates.kind = CovariateKind::independent;
    else if (value == "correlated") cfg.covariates.kind = CovariateKind::correlated;
    else throw std::invalid_argument("covariates must be independent|correlated");
  } else if (key == "noise") {
    if (value == "homoscedastic") cfg.outcome.noise = NoiseKind::homoscedastic;
    else if (value == "heteroscedastic") cfg.outcome.noise = NoiseKind::heteroscedastic;
    else throw std::invalid_argument("noise must be homoscedastic|heteroscedastic");
  } else if (key == "rho") {
    cfg.outcome.rho = detail::parse_real(key, value);
  } else if (key == "propensity") {
    if (value == "beta24") cfg.propensity.kind = PropensityKind::beta24;
    else if (value == "constant") cfg.propensity.kind = PropensityKind::constant;
    else if (value == "checkerboard") cfg.propensity.kind = PropensityKind::checkerboard;
    else throw std::invalid_argument("propensity must be beta24|constant|checkerboard");
  } else if (key == "p") {
    cfg.propensity.p = detail::parse_real(key, value);
  } else if (key == "n_train") {
    cfg.n_train = detail::parse_count(key, value);
  } else if (key == "n_test") {
    cfg.n_test = detail::parse_count(key, value);
  } else if (key == "seed") {
    cfg.seed = detail::parse_count(key, value);
  } else if (key == "rho_x") {
    cfg.covariates.rho_x = detail::parse_real(key, value);
  } else if (key == "log_offset") {
    cfg.outcome.log_offset = detail::parse_real(key, value);
  } else if (key == "name") {
    cfg.name = value;
  } else {
    return false;
  }
  return true;
}

inline std::string to_kv(const ScenarioConfig& cfg) {
  std::ostringstream os;
  if (!cfg.name.empty()) os << "name=" << cfg.name << '\n';
  os << "covariates=" << to_string(cfg.covariates.kind) << '\n'
     << "noise=" << to_string(cfg.outcome.noise) << '\n'
     << "rho=" << detail::fmt_real(cfg.outcome.rho) << '\n'
     << "propensity=" << to_string(cfg.propensity.kind) << '\n'
     << "p=" << detail::fmt_real(cfg.propensity.p) << '\n'
     << "n_train=" << cfg.n_train << '\n'
     << "n_test=" << cfg.n_test << '\n'
     << "seed=" << cfg.seed << '\n';
  if (cfg.covariates.rho_x != 0.9) os << "rho_x=" << detail::fmt_real(cfg.covariates.rho_x) << '\n';
  if (cfg.outcome.log_offset != 1e-12)
    os << "log_offset=" << detail::fmt_real(cfg.outcome.log_offset) << '\n';
  return os.str();
}

// Parse a flat key=value scenario description. Blank lines and '#' comments
// are ignored; unknown keys are an error.
inline ScenarioConfig parse_scenario(const std::string& text) {
  ScenarioConfig cfg;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    line = detail::trim(line.substr(0, line.find('#')));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("line " + std::to_string(lineno) + ": expected key=value");
    const auto key = detail::trim(line.substr(0, eq));
    const auto value = detail::trim(line.substr(eq + 1));
    if (!apply_scenario_key(cfg, key, value))
      throw std::invalid_argument("line " + std::to_string(lineno) + ": unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

}  // namespace itepi
