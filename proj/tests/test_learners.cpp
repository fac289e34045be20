#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "itepi/dgp.hpp"
#include "itepi/learners.hpp"

using namespace itepi;

namespace {

std::vector<Covariate> grid50() {
  std::vector<Covariate> g;
  for (int i = 0; i < 50; ++i)
    for (int j = 0; j < 50; ++j) g.push_back({(i + 0.5) / 50.0, (j + 0.5) / 50.0});
  return g;
}

std::vector<Covariate> uniform_x(std::size_t n, RngStream& r) {
  std::vector<Covariate> x(n);
  for (auto& c : x) c = {r.uniform(), r.uniform()};
  return x;
}

double surface(const Covariate& x) { return link_f(x[0]) * link_f(x[1]); }

double sup_error(const FittedModel& m) {
  double e = 0.0;
  for (const auto& g : grid50()) e = std::max(e, std::abs(m.predict(g) - surface(g)));
  return e;
}

// Damped settings for fitting pure noise; the default 300 rounds chase it.
LearnerConfig smooth_cfg() {
  LearnerConfig c;
  c.n_rounds = 50;
  c.learning_rate = 0.05;
  c.min_leaf = 50;
  return c;
}

}  // namespace

TEST(FitMean, ConstantTarget) {
  RngStream r(1);
  const auto x = uniform_x(500, r);
  std::vector<double> y(500, 3.25);
  const auto m = fit_mean(x, y, {});
  for (const auto& g : grid50()) EXPECT_NEAR(m.predict(g), 3.25, 1e-9);
}

TEST(FitMean, EmptyDataThrows) {
  std::vector<Covariate> x;
  std::vector<double> y;
  EXPECT_THROW(fit_mean(x, y, {}), FitError);
}

TEST(FitMean, NoiselessSurfaceSupError) {
  RngStream r(2);
  const auto x = uniform_x(1000, r);
  std::vector<double> y;
  for (const auto& c : x) y.push_back(surface(c));
  // Threshold frozen from a tuning run over 12 seeds (deeper trees, smaller
  // leaves): median 0.23, worst 0.31.
  LearnerConfig tuned;
  tuned.max_depth = 3;
  tuned.min_leaf = 5;
  EXPECT_LE(sup_error(fit_mean(x, y, tuned)), 0.32);
}

TEST(FitMean, IdentityMapRmse) {
  RngStream r(4);
  const auto x = uniform_x(2000, r);
  std::vector<double> y;
  for (const auto& c : x) y.push_back(c[0] + 0.1 * r.normal());
  const auto m = fit_mean(x, y, {});
  double ss = 0.0;
  const auto g = grid50();
  for (const auto& c : g) ss += std::pow(m.predict(c) - c[0], 2);
  EXPECT_LE(std::sqrt(ss / static_cast<double>(g.size())), 0.05);
}

TEST(FitMean, LossTraceNonincreasing) {
  RngStream r(5);
  const auto x = uniform_x(800, r);
  std::vector<double> y;
  for (const auto& c : x) y.push_back(surface(c) + r.normal());
  const auto m = fit_mean(x, y, {});
  const auto& trace = m.loss_trace();
  ASSERT_EQ(trace.size(), 301u);
  for (std::size_t i = 1; i < trace.size(); ++i) EXPECT_LE(trace[i], trace[i - 1]) << i;
}

TEST(FitMean, Deterministic) {
  RngStream r(6);
  const auto x = uniform_x(600, r);
  std::vector<double> y;
  for (const auto& c : x) y.push_back(surface(c) + r.normal());
  LearnerConfig cfg;
  cfg.seed = 77;
  const auto a = fit_mean(x, y, cfg), b = fit_mean(x, y, cfg);
  EXPECT_EQ(a.fingerprint(), b.fingerprint());
  for (const auto& g : grid50()) EXPECT_EQ(a.predict(g), b.predict(g));
}

TEST(FitMean, FingerprintTracksConfigAndData) {
  RngStream r(7);
  const auto x = uniform_x(100, r);
  std::vector<double> y(100, 1.0);
  LearnerConfig a, b;
  b.seed = 1;
  EXPECT_NE(fit_mean(x, y, a).fingerprint(), fit_mean(x, y, b).fingerprint());
  y[3] = 2.0;
  EXPECT_NE(fit_mean(x, y, a).fingerprint(), fit_mean(x, std::vector<double>(100, 1.0), a).fingerprint());
}

TEST(FitQuantile, LevelOutOfRange) {
  std::vector<Covariate> x{{0.1, 0.2}};
  std::vector<double> y{1.0};
  EXPECT_THROW(fit_quantile(x, y, 0.0, {}), std::domain_error);
  EXPECT_THROW(fit_quantile(x, y, 1.0, {}), std::domain_error);
}

TEST(FitQuantile, ConstantTarget) {
  RngStream r(8);
  const auto x = uniform_x(400, r);
  std::vector<double> y(400, -2.0);
  const auto m = fit_quantile(x, y, 0.9, {});
  for (const auto& g : grid50()) EXPECT_NEAR(m.predict(g), -2.0, 1e-9);
}

TEST(FitQuantile, MedianMatchesMeanUnderSymmetricNoise) {
  RngStream r(9);
  const auto x = uniform_x(2000, r);
  std::vector<double> y;
  for (const auto& c : x) y.push_back(surface(c) + r.normal());
  const auto mean = fit_mean(x, y, smooth_cfg());
  const auto med = fit_quantile(x, y, 0.5, smooth_cfg());
  double ss = 0.0;
  const auto g = grid50();
  for (const auto& c : g) ss += std::pow(mean.predict(c) - med.predict(c), 2);
  EXPECT_LE(std::sqrt(ss / static_cast<double>(g.size())), 0.1);
}

TEST(FitQuantile, UpperQuantileOfStandardNormal) {
  RngStream r(10);
  const auto x = uniform_x(2000, r);
  std::vector<double> y;
  for (std::size_t i = 0; i < x.size(); ++i) y.push_back(r.normal());
  const auto q = fit_quantile(x, y, 0.95, smooth_cfg());
  double s = 0.0;
  const auto g = grid50();
  for (const auto& c : g) s += q.predict(c);
  EXPECT_NEAR(s / static_cast<double>(g.size()), 1.6448536269514722, 0.1);
}

TEST(FitQuantile, LossTraceNonincreasing) {
  RngStream r(11);
  const auto x = uniform_x(800, r);
  std::vector<double> y;
  for (const auto& c : x) y.push_back(surface(c) + r.normal());
  for (double level : {0.05, 0.5, 0.95}) {
    const auto model = fit_quantile(x, y, level, {});
    const auto& trace = model.loss_trace();
    for (std::size_t i = 1; i < trace.size(); ++i) ASSERT_LE(trace[i], trace[i - 1]) << level << " " << i;
  }
}

TEST(QuantileBand, OrderedEverywhere) {
  RngStream r(12);
  const auto x = uniform_x(300, r);
  std::vector<double> y;
  for (const auto& c : x) y.push_back(surface(c) + 0.3 * r.normal());
  // Levels close together so the raw fits cross somewhere.
  const auto band = fit_quantile_band(x, y, 0.49, 0.51, {});
  bool crossed = false;
  for (const auto& g : grid50()) {
    const auto [lo, hi] = band.predict(g);
    EXPECT_LE(lo, hi);
    if (band.lower.predict(g) > band.upper.predict(g)) crossed = true;
  }
  EXPECT_TRUE(crossed);
}

TEST(FitPropensity, SingleClassThrows) {
  RngStream r(13);
  const auto x = uniform_x(50, r);
  std::vector<std::uint8_t> t(50, 1);
  EXPECT_THROW(fit_propensity(x, t, {}), FitError);
  std::vector<Covariate> none;
  std::vector<std::uint8_t> tn;
  EXPECT_THROW(fit_propensity(none, tn, {}), FitError);
}

TEST(FitPropensity, IndependentTreatmentRate) {
  RngStream r(14);
  const auto x = uniform_x(4000, r);
  std::vector<std::uint8_t> t;
  for (std::size_t i = 0; i < x.size(); ++i) t.push_back(r.bernoulli(0.3));
  const auto m = fit_propensity(x, t, {});
  double s = 0.0;
  for (const auto& c : x) s += m.predict(c);
  EXPECT_NEAR(s / static_cast<double>(x.size()), 0.3, 0.03);
}

TEST(FitPropensity, ConstantFeaturesGiveClassRate) {
  std::vector<Covariate> x(200, Covariate{0.4, 0.6});
  std::vector<std::uint8_t> t(200, 0);
  for (int i = 0; i < 70; ++i) t[static_cast<std::size_t>(i)] = 1;
  const auto m = fit_propensity(x, t, {});
  EXPECT_NEAR(m.predict({0.4, 0.6}), 0.35, 1e-9);
  EXPECT_NEAR(m.predict({0.9, 0.1}), 0.35, 1e-9);
}

TEST(FitPropensity, SeparableCheckerboard) {
  RngStream r(15);
  const auto x = uniform_x(4000, r);
  std::vector<std::uint8_t> t;
  for (const auto& c : x) t.push_back(checkerboard_high(c) ? 1 : 0);
  LearnerConfig deep;
  deep.max_depth = 8;
  deep.n_rounds = 1000;
  deep.learning_rate = 0.5;
  deep.min_leaf = 2;
  const auto m = fit_propensity(x, t, deep);
  int correct = 0, at_clip = 0;
  for (int i = 0; i < 10; ++i) {
    for (int j = 0; j < 10; ++j) {
      const Covariate c{(i + 0.5) / 10.0, (j + 0.5) / 10.0};
      const double p = m.predict(c);
      const bool high = checkerboard_high(c);
      if ((p > 0.5) == high) ++correct;
      if (std::abs(p - (high ? 1.0 - kPropensityClip : kPropensityClip)) < 1e-9) ++at_clip;
    }
  }
  EXPECT_GT(correct, 50);
  EXPECT_GT(at_clip, 50);
}

TEST(FitPropensity, DefaultDepthOnCheckerboardStillClipped) {
  RngStream r(16);
  const auto x = uniform_x(2000, r);
  std::vector<std::uint8_t> t;
  for (const auto& c : x) t.push_back(r.bernoulli(checkerboard_high(c) ? 0.95 : 0.05));
  const auto m = fit_propensity(x, t, {});
  for (const auto& g : grid50()) {
    const double p = m.predict(g);
    EXPECT_GE(p, kPropensityClip);
    EXPECT_LE(p, 1.0 - kPropensityClip);
  }
  const auto& trace = m.loss_trace();
  for (std::size_t i = 1; i < trace.size(); ++i) ASSERT_LE(trace[i], trace[i - 1]);
}

TEST(LearnerConfig, Validation) {
  LearnerConfig c;
  c.subsample = 0.0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.n_rounds = 0;
  EXPECT_THROW(c.validate(), std::invalid_argument);
  c = {};
  c.learning_rate = -1;
  EXPECT_THROW(c.validate(), std::invalid_argument);
}
