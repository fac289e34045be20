#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "itepi/bench.hpp"
#include "itepi/normal.hpp"

using namespace itepi;

namespace {

ExperimentGrid small_grid() {
  ExperimentGrid g;
  ScenarioConfig sc;
  sc.n_train = 300;
  sc.n_test = 200;
  g.scenarios = {sc};
  ScenarioConfig c9;
  c9.propensity = {PropensityKind::constant, 0.9};
  c9.outcome.rho = -1.0;
  c9.n_train = 300;
  c9.n_test = 200;
  g.scenarios.push_back(c9);
  for (auto k : {MethodKind::split_pair, MethodKind::naive, MethodKind::dr}) {
    MethodConfig m;
    m.method = k;
    m.outcome.n_rounds = 40;
    m.propensity.n_rounds = 40;
    g.methods.push_back(m);
  }
  g.target_levels = {0.5, 0.9};
  g.reps = 3;
  g.master_seed = 11;
  return g;
}

std::size_t count(const std::string& s, const std::string& needle) {
  std::size_t n = 0;
  for (auto pos = s.find(needle); pos != std::string::npos; pos = s.find(needle, pos + 1)) ++n;
  return n;
}

std::size_t lines(const std::string& s) { return count(s, "\n"); }

EvalSummary row(std::string scenario, std::string method, double target, double cov) {
  EvalSummary r;
  r.scenario = std::move(scenario);
  r.method = std::move(method);
  r.target = target;
  r.coverage = cov;
  r.cov_se = 0.0123456789;
  r.mean_length = 4.123456789;
  r.inf_fraction = 0.0;
  r.reps = 20;
  return r;
}

}  // namespace

TEST(Evaluate, WholeLine) {
  const auto test = gen_dataset(ScenarioConfig{}, 300, RngStream(1));
  const auto r = evaluate_intervals(IntervalMap{}, test);
  EXPECT_EQ(r.coverage, 1.0);
  EXPECT_EQ(r.inf_fraction, 1.0);
  EXPECT_EQ(r.mean_length, 0.0);
  EXPECT_EQ(r.n, 300u);
}

TEST(Evaluate, PointAtZero) {
  const auto test = gen_dataset(ScenarioConfig{}, 300, RngStream(2));
  for (std::size_t i = 0; i < test.size(); ++i) ASSERT_NE(test.delta(i), 0.0);
  const IntervalMap zero([](const Covariate&) { return Interval{0.0, 0.0}; });
  const auto r = evaluate_intervals(zero, test);
  EXPECT_EQ(r.coverage, 0.0);
  EXPECT_EQ(r.mean_length, 0.0);
  EXPECT_EQ(r.inf_fraction, 0.0);
}

TEST(Evaluate, EmptyTestThrows) { EXPECT_THROW(evaluate_intervals(IntervalMap{}, Dataset{}), std::invalid_argument); }

// Delta ~ N(0, 2) and tau = 0: the band +-sqrt(2) z_{0.95} covers 90%.
TEST(Evaluate, OracleBandUninformative) {
  const auto test = gen_uninformative_dataset(10000, 0.5, RngStream(3));
  const double h = std::sqrt(2.0) * normal_quantile(0.95);
  const IntervalMap band([h](const Covariate&) { return Interval{-h, h}; });
  const auto r = evaluate_intervals(band, test);
  EXPECT_NEAR(r.coverage, 0.90, 0.01);
  EXPECT_NEAR(r.mean_length, 2.0 * h, 1e-9);
}

TEST(Experiment, SingleCellBookkeeping) {
  ExperimentGrid g;
  ScenarioConfig sc;
  sc.n_train = 300;
  sc.n_test = 100;
  g.scenarios = {sc};
  g.methods = {MethodConfig{}};
  g.target_levels = {0.9};
  g.reps = 2;
  const auto rows = run_experiment(g);
  ASSERT_EQ(rows.size(), 1u);
  EXPECT_EQ(rows[0].reps, 2u);
  EXPECT_EQ(rows[0].failed_reps, 0u);
  EXPECT_EQ(rows[0].rep_coverages.size(), 2u);
  EXPECT_EQ(rows[0].n_test, 100u);
  EXPECT_EQ(rows[0].method, "split_pair");
  EXPECT_EQ(rows[0].target, 0.9);
}

TEST(Experiment, ParallelismInvariant) {
  const auto g = small_grid();
  const auto a = to_csv(run_experiment(g, 1));
  const auto b = to_csv(run_experiment(g, 8));
  EXPECT_EQ(a, b);
  EXPECT_EQ(lines(a), 1u + 2 * 3 * 2);
}

TEST(Experiment, RowsWithinRange) {
  for (const auto& r : run_experiment(small_grid(), 2)) {
    EXPECT_GE(r.coverage, 0.0);
    EXPECT_LE(r.coverage, 1.0);
    EXPECT_GE(r.inf_fraction, 0.0);
    EXPECT_LE(r.inf_fraction, 1.0);
    EXPECT_EQ(r.reps, 3u);
  }
}

TEST(Experiment, CoverageSeMatchesRecomputation) {
  for (const auto& r : run_experiment(small_grid(), 2)) {
    double c = 0.0;
    for (double v : r.rep_coverages) c += v;
    c /= static_cast<double>(r.rep_coverages.size());
    EXPECT_NEAR(r.coverage, c, 1e-12);
    EXPECT_NEAR(r.cov_se, std::sqrt(c * (1.0 - c) / (3.0 * 200.0)), 1e-9);
  }
}

TEST(Experiment, FailedCellsRecorded) {
  ExperimentGrid g;
  ScenarioConfig sc;
  sc.n_train = 200;
  sc.n_test = 50;
  g.scenarios = {sc};
  MethodConfig bad;
  bad.split_ratio = 0.001;
  bad.name = "tiny_split";
  g.methods = {bad, MethodConfig{}};
  g.target_levels = {0.9};
  g.reps = 2;
  const auto rows = sorted_for_output(run_experiment(g));
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0].method, "split_pair");
  EXPECT_EQ(rows[0].reps, 2u);
  EXPECT_EQ(rows[1].method, "tiny_split");
  EXPECT_EQ(rows[1].reps, 0u);
  EXPECT_EQ(rows[1].failed_reps, 2u);
  EXPECT_FALSE(rows[1].failure.empty());
  EXPECT_TRUE(std::isnan(rows[1].coverage));
  EXPECT_NE(to_csv(rows).find("tiny_split,0.900000,nan,nan,nan,nan,0\n"), std::string::npos);
}

TEST(Experiment, InvalidGrid) {
  ExperimentGrid g;
  EXPECT_THROW(run_experiment(g), std::invalid_argument);
  g = small_grid();
  g.target_levels = {1.0};
  EXPECT_THROW(run_experiment(g), std::invalid_argument);
  g = small_grid();
  g.reps = 0;
  EXPECT_THROW(run_experiment(g), std::invalid_argument);
}

TEST(Csv, EmptyIsHeaderOnly) { EXPECT_EQ(to_csv({}), std::string(kCsvHeader) + "\n"); }

TEST(Csv, OneRow) {
  const auto s = to_csv({row("s", "naive", 0.9, 0.987654321)});
  EXPECT_EQ(s, std::string(kCsvHeader) + "\ns,naive,0.900000,0.987654,0.012346,4.123457,0.000000,20\n");
}

TEST(Csv, SortedAndRoundTrips) {
  const std::vector<EvalSummary> rows{row("b", "naive", 0.9, 0.5), row("a", "split_pair", 0.5, 1.0 / 3.0),
                                      row("a", "naive", 0.9, 0.25), row("a", "naive", 0.5, -0.0)};
  const auto text = to_csv(rows);
  const auto back = parse_csv(text);
  ASSERT_EQ(back.size(), 4u);
  EXPECT_EQ(back[0].scenario + back[0].method, "anaive");
  EXPECT_EQ(back[0].target, 0.5);
  EXPECT_EQ(back[1].target, 0.9);
  EXPECT_EQ(back[2].method, "split_pair");
  EXPECT_EQ(back[3].scenario, "b");
  EXPECT_EQ(to_csv(back), text);
  EXPECT_EQ(back[2].coverage, 0.333333);
  EXPECT_EQ(text.find("-0.000000"), std::string::npos);
}

TEST(Csv, ExperimentRoundTrip) {
  const auto rows = run_experiment(small_grid());
  const auto text = to_csv(rows);
  const auto back = parse_csv(text);
  const auto sorted = sorted_for_output(rows);
  ASSERT_EQ(back.size(), sorted.size());
  for (std::size_t i = 0; i < back.size(); ++i) {
    EXPECT_EQ(back[i].method, sorted[i].method);
    EXPECT_EQ(back[i].coverage, std::stod(detail::fixed6(sorted[i].coverage)));
    EXPECT_NEAR(back[i].coverage, sorted[i].coverage, 5e-7);
    EXPECT_NEAR(back[i].mean_length, sorted[i].mean_length, 5e-7);
    EXPECT_EQ(back[i].reps, sorted[i].reps);
  }
}

TEST(Csv, BadInput) {
  EXPECT_THROW(parse_csv("nope\n"), std::invalid_argument);
  EXPECT_THROW(parse_csv(std::string(kCsvHeader) + "\na,b,0.5\n"), std::invalid_argument);
}

TEST(Csv, UnwritablePath) {
  EXPECT_THROW(emit_csv({}, "/nonexistent-dir/x/out.csv"), std::runtime_error);
}

TEST(Csv, EmitWritesBytes) {
  const auto path = std::filesystem::temp_directory_path() / "itepi_test_emit.csv";
  const std::vector<EvalSummary> rows{row("s", "naive", 0.9, 0.5)};
  emit_csv(rows, path.string());
  std::ifstream f(path, std::ios::binary);
  std::stringstream ss;
  ss << f.rdbuf();
  EXPECT_EQ(ss.str(), to_csv(rows));
  std::filesystem::remove(path);
}

TEST(Grid, Parses) {
  const auto g = parse_grid(R"(# demo
targets = 0.5, 0.9
reps = 4
seed = 9
[scenario]
propensity = constant
p = 0.9
rho = -1
n_train = 500
[method]
method = dr
propensity_mode = oracle
outcome.max_depth = 3
[method]
method = nested_exact
gamma = 0.02
)");
  EXPECT_EQ(g.target_levels, (std::vector<double>{0.5, 0.9}));
  EXPECT_EQ(g.reps, 4u);
  EXPECT_EQ(g.master_seed, 9u);
  ASSERT_EQ(g.scenarios.size(), 1u);
  EXPECT_EQ(g.scenarios[0].propensity.kind, PropensityKind::constant);
  EXPECT_EQ(g.scenarios[0].propensity.p, 0.9);
  EXPECT_EQ(g.scenarios[0].outcome.rho, -1.0);
  EXPECT_EQ(g.scenarios[0].n_train, 500u);
  ASSERT_EQ(g.methods.size(), 2u);
  EXPECT_EQ(g.methods[0].method, MethodKind::dr);
  EXPECT_EQ(g.methods[0].propensity_mode, PropensityMode::oracle);
  EXPECT_EQ(g.methods[0].outcome.max_depth, 3u);
  EXPECT_EQ(g.methods[1].method, MethodKind::nested_exact);
  EXPECT_EQ(g.methods[1].gamma, 0.02);
}

TEST(Grid, DefaultsAndShorthand) {
  const auto g = parse_grid("methods = naive, split_pair\n[scenario]\n");
  EXPECT_EQ(g.target_levels, (std::vector<double>{0.5, 0.6, 0.7, 0.8, 0.9}));
  EXPECT_EQ(g.reps, 20u);
  ASSERT_EQ(g.methods.size(), 2u);
  EXPECT_EQ(g.methods[1].method, MethodKind::split_pair);
}

TEST(Grid, ErrorsCarryLineNumber) {
  auto message = [](const std::string& text) {
    try {
      parse_grid(text);
    } catch (const std::invalid_argument& e) {
      return std::string(e.what());
    }
    return std::string();
  };
  EXPECT_EQ(message("methods = naive\n[scenario]\nbogus = 1\n").rfind("grid line 3", 0), 0u);
  EXPECT_EQ(message("[method]\nmethod = magic\n").rfind("grid line 2", 0), 0u);
  EXPECT_EQ(message("[wat]\n").rfind("grid line 1", 0), 0u);
  EXPECT_EQ(message("[scenario]\nrho\n").rfind("grid line 2", 0), 0u);
  EXPECT_EQ(message("reps = two\n").rfind("grid line 1", 0), 0u);
  EXPECT_FALSE(message("methods = naive\n").empty());  // no scenario
  EXPECT_FALSE(message("[scenario]\n").empty());       // no method
}

TEST(Plot, CoveragePolylineAndIdentity) {
  std::vector<EvalSummary> rows;
  for (double t : {0.5, 0.6, 0.7, 0.8, 0.9}) rows.push_back(row("s", "naive", t, t - 0.05));
  const auto svg = summary_plot_svg(rows, PlotKind::coverage_vs_target);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_EQ(count(svg, "<polyline"), 1u);
  EXPECT_EQ(count(svg, "<circle"), 5u);
  EXPECT_EQ(count(svg, "stroke-dasharray"), 1u);
  const auto pts_at = svg.find("points=\"");
  const auto pts = svg.substr(pts_at + 8, svg.find('"', pts_at + 8) - pts_at - 8);
  EXPECT_EQ(count(pts, ","), 5u);
  EXPECT_EQ(summary_plot_svg(rows, PlotKind::coverage_vs_target), svg);
}

TEST(Plot, LengthHasNoIdentity) {
  std::vector<EvalSummary> rows;
  for (double t : {0.5, 0.9}) {
    rows.push_back(row("s", "naive", t, t));
    rows.push_back(row("s", "dr", t, t));
  }
  const auto svg = summary_plot_svg(rows, PlotKind::length_vs_target);
  EXPECT_EQ(count(svg, "<polyline"), 2u);
  EXPECT_EQ(count(svg, "stroke-dasharray"), 0u);
}

TEST(Plot, PanelPerScenario) {
  const auto svg = summary_plot_svg({row("a", "naive", 0.9, 0.9), row("b", "naive", 0.9, 0.8)},
                                    PlotKind::coverage_vs_target);
  EXPECT_EQ(count(svg, "stroke-dasharray"), 2u);
}

TEST(Plot, ScoreCdfTwoSteps) {
  ScorePair p;
  RngStream r(4);
  for (int i = 0; i < 150; ++i) {
    p.v_pseudo.push_back(std::abs(r.normal()));
    p.v_oracle.push_back(std::abs(r.normal()));
  }
  const auto svg = score_cdf_svg(p);
  EXPECT_EQ(count(svg, "<polyline"), 2u);
  EXPECT_EQ(count(svg, "<circle"), 0u);
  EXPECT_NE(svg.find("pseudo score"), std::string::npos);
  EXPECT_NE(svg.find("oracle score"), std::string::npos);
}

TEST(Plot, Errors) {
  EXPECT_THROW(parse_plot_kind("histogram"), std::invalid_argument);
  EXPECT_EQ(parse_plot_kind("score_cdf"), PlotKind::score_cdf);
  EXPECT_THROW(summary_plot_svg({}, PlotKind::coverage_vs_target), std::invalid_argument);
  EXPECT_THROW(summary_plot_svg({row("s", "m", 0.9, 0.9)}, PlotKind::score_cdf), std::invalid_argument);
}

TEST(DatasetCsv, Columns) {
  ScenarioConfig sc;
  const auto d = gen_dataset(sc, 10, RngStream(5));
  const auto s = dataset_csv(d);
  EXPECT_EQ(s.rfind("x1,x2,t,y_obs,y1,y0\n", 0), 0u);
  EXPECT_EQ(lines(s), 11u);
  EXPECT_EQ(s, dataset_csv(gen_dataset(sc, 10, RngStream(5))));
  // Full precision: the first y_obs parses back to the same double.
  std::istringstream is(s);
  std::string line;
  std::getline(is, line);
  std::getline(is, line);
  const auto f = detail::split(line, ',');
  ASSERT_EQ(f.size(), 6u);
  EXPECT_EQ(std::stod(f[3]), d.y_obs[0]);
  EXPECT_EQ(std::stoi(f[2]), d.t[0]);
}

TEST(ScoreFile, Parses) {
  std::string text = "pseudo,oracle\n";
  for (int i = 0; i < 120; ++i) text += std::to_string(i) + (i % 2 ? "," : " ") + std::to_string(2 * i) + "\n";
  text += "# trailing comment\n\n";
  const auto p = parse_score_pair(text);
  ASSERT_EQ(p.v_pseudo.size(), 120u);
  EXPECT_EQ(p.v_pseudo[7], 7.0);
  EXPECT_EQ(p.v_oracle[7], 14.0);
}

TEST(ScoreFile, Errors) {
  EXPECT_THROW(parse_score_pair("1 2 3\n"), std::invalid_argument);
  EXPECT_THROW(parse_score_pair("1 2\nx y\n"), std::invalid_argument);
  EXPECT_THROW(parse_score_pair("a b\n"), std::invalid_argument);  // header only
}
