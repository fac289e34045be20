// itepi: command-line front end for the benchmark, probe, order and rate
// experiments, and dataset dumps.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "itepi/itepi.hpp"

namespace {

using namespace itepi;

std::string read_file(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

void write_out(const std::string& path, const std::string& text) {
  if (path.empty() || path == "-") {
    std::cout << text;
    std::cout.flush();
  } else {
    write_text_file(path, text);
  }
}

// Raised for bad option values that CLI11 cannot validate by itself.
struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

ScenarioConfig load_scenario(const std::string& file, const std::vector<std::string>& sets) {
  ScenarioConfig sc = file.empty() ? ScenarioConfig{} : parse_scenario(read_file(file));
  for (const auto& kv : sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw UsageError("--set expects key=value, got '" + kv + "'");
    if (!apply_scenario_key(sc, detail::trim(kv.substr(0, eq)), detail::trim(kv.substr(eq + 1))))
      throw UsageError("unknown scenario key in --set '" + kv + "'");
  }
  sc.validate();
  return sc;
}

std::optional<PropensityMode> parse_mode(const std::string& s) {
  if (s.empty()) return std::nullopt;
  return s == "oracle" ? PropensityMode::oracle : PropensityMode::estimated;
}

struct Common {
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> reps, n_train, n_test;
  std::size_t parallelism = 1;
  std::string propensity;
  std::string out = "-";

  void add_to(CLI::App* app, bool with_propensity = true) {
    app->add_option("--seed", seed, "master seed");
    app->add_option("--reps", reps, "replicates");
    app->add_option("--n-train", n_train, "training sample size");
    app->add_option("--n-test", n_test, "test sample size");
    app->add_option("--parallelism", parallelism, "worker threads")->check(CLI::PositiveNumber);
    if (with_propensity)
      app->add_option("--propensity", propensity, "propensity mode for all methods")
          ->check(CLI::IsMember({"oracle", "estimated"}));
    app->add_option("--out", out, "output path ('-' for stdout)");
  }
};

int run_bench(const Common& c, const std::string& grid_file, const std::string& plot_dir) {
  auto grid = parse_grid(read_file(grid_file));
  if (c.seed) grid.master_seed = *c.seed;
  if (c.reps) grid.reps = *c.reps;
  for (auto& s : grid.scenarios) {
    if (c.n_train) s.n_train = *c.n_train;
    if (c.n_test) s.n_test = *c.n_test;
  }
  if (auto mode = parse_mode(c.propensity))
    for (auto& m : grid.methods) m.propensity_mode = *mode;
  const auto rows = run_experiment(grid, c.parallelism);
  for (const auto& r : rows)
    if (r.failed_reps)
      std::cerr << "note: " << r.scenario << " / " << r.method << " @ " << r.target << ": " << r.failed_reps
                << " failed rep(s): " << r.failure << "\n";
  write_out(c.out, to_csv(rows));
  if (!plot_dir.empty()) {
    emit_plot(rows, PlotKind::coverage_vs_target, plot_dir + "/coverage_vs_target.svg");
    emit_plot(rows, PlotKind::length_vs_target, plot_dir + "/length_vs_target.svg");
  }
  return 0;
}

int run_probe(const Common& c, const std::string& method, double alpha, const std::string& scenario_file,
              const std::vector<std::string>& sets, const std::vector<double>& y_grid, std::size_t covariates) {
  auto sc = load_scenario(scenario_file, sets);
  if (c.n_train) sc.n_train = *c.n_train;
  MethodConfig mc;
  mc.method = parse_method_kind(method);
  mc.alpha = alpha;
  if (auto mode = parse_mode(c.propensity)) mc.propensity_mode = *mode;
  ProbeOptions opts;
  opts.reps = c.reps.value_or(20);
  opts.covariates_per_rep = covariates;
  opts.seed = c.seed.value_or(1);
  opts.parallelism = c.parallelism;
  const auto rows = triviality_probe(mc, sc, y_grid, opts);
  std::string out = "scenario,method,alpha,y,containment,draws\n";
  for (const auto& r : rows)
    out += sc.id() + ',' + mc.id() + ',' + detail::fixed6(alpha) + ',' + detail::fixed6(r.y) + ',' +
           detail::fixed6(r.containment) + ',' + std::to_string(r.draws) + '\n';
  write_out(c.out, out);
  return 0;
}

std::string order_line(const char* name, const OrderResult& r) {
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-28s holds=%d max_violation=%.6f tolerance=%.6f\n", name, r.holds ? 1 : 0,
                r.max_violation, r.tolerance);
  return buf;
}

int run_orders(const Common& c, const std::string& scores_file, bool simulate, double rho, double p, std::size_t n,
               const std::string& plot) {
  ScorePair pair;
  if (simulate) {
    pair = known_nuisance_dr_scores(rho, p, n, RngStream(c.seed.value_or(1)));
  } else {
    if (scores_file.empty()) throw UsageError("orders: give a score file or --simulate");
    pair = parse_score_pair(read_file(scores_file));
  }
  std::string out;
  out += "n_pseudo=" + std::to_string(pair.v_pseudo.size()) + " n_oracle=" + std::to_string(pair.v_oracle.size()) + "\n";
  out += order_line("fosd oracle>=pseudo", fosd_check(pair.v_oracle, pair.v_pseudo));
  out += order_line("fosd pseudo>=oracle", fosd_check(pair.v_pseudo, pair.v_oracle));
  out += order_line("sosd oracle>=pseudo", sosd_check(pair.v_oracle, pair.v_pseudo));
  out += order_line("sosd pseudo>=oracle", sosd_check(pair.v_pseudo, pair.v_oracle));
  out += order_line("mcx oracle>=pseudo", mcx_check(pair.v_oracle, pair.v_pseudo));
  out += order_line("mcx pseudo>=oracle", mcx_check(pair.v_pseudo, pair.v_oracle));
  if (pair.v_pseudo.size() >= 100 && pair.v_oracle.size() >= 100)
    out += "alpha_star=" + detail::fixed6(estimate_alpha_star(pair)) + "\n";
  else
    out += "alpha_star=nan (need >= 100 scores per sample)\n";
  write_out(c.out, out);
  if (!plot.empty()) emit_plot(pair, plot);
  return 0;
}

int run_rate(const Common& c, const std::vector<std::size_t>& n_grid, bool oracle_means, double alpha, double p,
             double rho) {
  RateOptions opts;
  opts.scenario.propensity = {PropensityKind::constant, p};
  opts.scenario.outcome.rho = rho;
  opts.scenario.validate();
  opts.n_grid = n_grid;
  opts.reps = c.reps.value_or(40);
  opts.n_test = c.n_test.value_or(10000);
  opts.cfg.alpha = alpha;
  opts.oracle_means = oracle_means;
  opts.seed = c.seed.value_or(1);
  opts.parallelism = c.parallelism;
  const auto rows = rate_experiment(opts);
  std::string out = "n,mean_m,mean_abs_error,mean_coverage,reps\n";
  for (const auto& r : rows)
    out += std::to_string(r.n) + ',' + detail::fixed6(r.mean_m) + ',' + detail::fixed6(r.mean_abs_error) + ',' +
           detail::fixed6(r.mean_coverage) + ',' + std::to_string(r.reps) + '\n';
  write_out(c.out, out);
  return 0;
}

int run_gen(const Common& c, const std::string& scenario_file, const std::vector<std::string>& sets,
            std::optional<double> mirror, std::optional<double> mix) {
  auto sc = load_scenario(scenario_file, sets);
  if (c.n_train) sc.n_train = *c.n_train;
  if (c.seed) sc.seed = *c.seed;
  auto d = gen_dataset(sc);
  if (mix) d = mix_propensity(d, *mix, RngStream(sc.seed).derive(0x313));
  if (mirror) d = construct_mirror(d, *mirror);
  write_out(c.out, dataset_csv(d));
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Prediction intervals for individual treatment effects: benchmarks and diagnostics."};
  app.require_subcommand(1);

  Common bench_c, probe_c, orders_c, rate_c, gen_c;

  auto* bench = app.add_subcommand("bench", "run a grid file, write summary CSV (and plots)");
  std::string grid_file, plot_dir;
  bench->add_option("--grid", grid_file, "grid file")->required()->check(CLI::ExistingFile);
  bench->add_option("--plot-dir", plot_dir, "write coverage/length SVGs here")->check(CLI::ExistingDirectory);
  bench_c.add_to(bench);

  auto* probe = app.add_subcommand("probe", "containment frequency of fixed values y");
  std::string probe_method = "split_pair", probe_scenario;
  std::vector<std::string> probe_sets;
  double probe_alpha = 0.1;
  std::vector<double> y_grid{-12, -9, -6, -3, 0, 3, 6, 9, 12};
  std::size_t covariates = 200;
  probe->add_option("--method", probe_method, "method")
      ->check(CLI::IsMember({"naive", "nested_inexact", "nested_exact", "dr", "ipw", "split_pair"}));
  probe->add_option("--alpha", probe_alpha, "miscoverage level")->check(CLI::Range(0.0, 1.0));
  probe->add_option("--scenario", probe_scenario, "scenario file (key=value)")->check(CLI::ExistingFile);
  probe->add_option("--set", probe_sets, "scenario key=value override");
  probe->add_option("--y-grid", y_grid, "values to probe")->delimiter(',');
  probe->add_option("--covariates", covariates, "test covariates per replicate")->check(CLI::PositiveNumber);
  probe_c.add_to(probe);

  auto* orders = app.add_subcommand("orders", "stochastic-order report and alpha* for a score pair");
  std::string scores_file, orders_plot;
  bool simulate = false;
  double sim_rho = -1.0, sim_p = 0.9;
  std::size_t sim_n = 100000;
  orders->add_option("scores", scores_file, "two-column file: pseudo score, oracle score")->check(CLI::ExistingFile);
  orders->add_flag("--simulate", simulate, "use known-nuisance DR scores instead of a file");
  orders->add_option("--rho", sim_rho, "error correlation for --simulate")->check(CLI::Range(-1.0, 1.0));
  orders->add_option("--p", sim_p, "constant propensity for --simulate")->check(CLI::Range(0.0, 1.0));
  orders->add_option("--n", sim_n, "sample size for --simulate")->check(CLI::PositiveNumber);
  orders->add_option("--plot", orders_plot, "write score cdf SVG");
  orders_c.add_to(orders, false);

  auto* rate = app.add_subcommand("rate", "split-pair coverage error versus n");
  std::vector<std::size_t> n_grid{500, 2000, 8000};
  bool oracle_means = false;
  double rate_alpha = 0.1, rate_p = 0.5, rate_rho = 0.0;
  rate->add_option("--n-grid", n_grid, "training sizes")->delimiter(',');
  rate->add_flag("--oracle-means", oracle_means, "use the true regression functions");
  rate->add_option("--alpha", rate_alpha, "miscoverage level")->check(CLI::Range(0.0, 1.0));
  rate->add_option("--p", rate_p, "constant propensity")->check(CLI::Range(0.0, 1.0));
  rate->add_option("--rho", rate_rho, "error correlation")->check(CLI::Range(-1.0, 1.0));
  rate_c.add_to(rate, false);

  auto* gen = app.add_subcommand("gen", "dump a dataset as CSV (x1,x2,t,y_obs,y1,y0)");
  std::string gen_scenario;
  std::vector<std::string> gen_sets;
  std::optional<double> mirror, mix;
  gen->add_option("--scenario", gen_scenario, "scenario file (key=value)")->check(CLI::ExistingFile);
  gen->add_option("--set", gen_sets, "scenario key=value override");
  gen->add_option("--mirror", mirror, "rewrite counterfactuals so every delta equals this value");
  gen->add_option("--mix", mix, "mix treatment with a fair coin at this rate")->check(CLI::Range(0.0, 1.0));
  gen_c.add_to(gen, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*bench) return run_bench(bench_c, grid_file, plot_dir);
    if (*probe) return run_probe(probe_c, probe_method, probe_alpha, probe_scenario, probe_sets, y_grid, covariates);
    if (*orders) return run_orders(orders_c, scores_file, simulate, sim_rho, sim_p, sim_n, orders_plot);
    if (*rate) return run_rate(rate_c, n_grid, oracle_means, rate_alpha, rate_p, rate_rho);
    if (*gen) return run_gen(gen_c, gen_scenario, gen_sets, mirror, mix);
  } catch (const UsageError& e) {
    std::cerr << "usage error: " << e.what() << "\n";
    return 1;
  } catch (const std::invalid_argument& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
