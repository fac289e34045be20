#include <gtest/gtest.h>

#include <sys/wait.h>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace {

struct Run {
  int code = -1;
  std::string out;
};

// stdout only; stderr goes to the test log.
Run run(const std::string& args) {
  const std::string cmd = std::string(ITEPI_CLI_PATH) + " " + args;
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  std::size_t n;
  while ((n = fread(buf, 1, sizeof buf, p)) > 0) r.out.append(buf, n);
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string data(const std::string& name) { return std::string(ITEPI_TEST_DATA) + "/" + name; }

std::string slurp(const std::filesystem::path& p) {
  std::ifstream f(p, std::ios::binary);
  std::ostringstream os;
  os << f.rdbuf();
  return os.str();
}

}  // namespace

TEST(Cli, Help) {
  const auto r = run("bench --help");
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("--grid"), std::string::npos);
  EXPECT_EQ(run("--help").code, 0);
}

TEST(Cli, UsageErrors) {
  EXPECT_EQ(run("bench --grid " + data("small.grid") + " --bogus 2>/dev/null").code, 1);
  EXPECT_EQ(run("2>/dev/null").code, 1);  // no subcommand
  EXPECT_EQ(run("frobnicate 2>/dev/null").code, 1);
  EXPECT_EQ(run("gen --set rho 2>/dev/null").code, 1);
  EXPECT_EQ(run("gen --set colour=red 2>/dev/null").code, 1);
  EXPECT_EQ(run("bench --grid /nonexistent.grid 2>/dev/null").code, 1);
  EXPECT_EQ(run("orders 2>/dev/null").code, 1);
}

TEST(Cli, RuntimeFailure) {
  EXPECT_EQ(run("gen --n-train 5 --out /nonexistent-dir/x.csv 2>/dev/null").code, 2);
}

TEST(Cli, GenDeterministic) {
  const auto a = run("gen --n-train 10 --seed 7");
  const auto b = run("gen --n-train 10 --seed 7");
  EXPECT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.rfind("x1,x2,t,y_obs,y1,y0\n", 0), 0u);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 11);
  EXPECT_NE(run("gen --n-train 10 --seed 8").out, a.out);
}

TEST(Cli, GenMirrorKeepsObserved) {
  const auto a = run("gen --n-train 20 --seed 3 --set propensity=constant --set p=0.9");
  const auto m = run("gen --n-train 20 --seed 3 --set propensity=constant --set p=0.9 --mirror 2");
  ASSERT_EQ(m.code, 0);
  std::istringstream ia(a.out), im(m.out);
  std::string la, lm;
  while (std::getline(ia, la) && std::getline(im, lm)) {
    // x1, x2, t, y_obs agree; counterfactual columns may differ.
    auto prefix = [](const std::string& s) {
      std::size_t pos = 0;
      for (int k = 0; k < 4; ++k) pos = s.find(',', pos) + 1;
      return s.substr(0, pos);
    };
    EXPECT_EQ(prefix(la), prefix(lm));
  }
}

TEST(Cli, BenchParallelismInvariant) {
  const auto a = run("bench --grid " + data("small.grid") + " --parallelism 1");
  const auto b = run("bench --grid " + data("small.grid") + " --parallelism 8");
  ASSERT_EQ(a.code, 0);
  EXPECT_EQ(a.out, b.out);
  EXPECT_EQ(a.out.rfind("scenario,method,target,coverage,cov_se,mean_length,inf_fraction,reps\n", 0), 0u);
  EXPECT_EQ(std::count(a.out.begin(), a.out.end(), '\n'), 5);
}

TEST(Cli, BenchWritesFilesAndPlots) {
  const auto dir = std::filesystem::temp_directory_path() / "itepi_cli_test";
  std::filesystem::create_directories(dir);
  const auto csv = dir / "out.csv";
  const auto r = run("bench --grid " + data("small.grid") + " --reps 1 --propensity oracle --out " + csv.string() +
                     " --plot-dir " + dir.string());
  ASSERT_EQ(r.code, 0);
  EXPECT_TRUE(r.out.empty());
  const auto text = slurp(csv);
  EXPECT_NE(text.find(",1\n"), std::string::npos);  // reps column
  EXPECT_EQ(slurp(dir / "coverage_vs_target.svg").rfind("<svg", 0), 0u);
  EXPECT_EQ(slurp(dir / "length_vs_target.svg").rfind("<svg", 0), 0u);
  std::filesystem::remove_all(dir);
}

TEST(Cli, OrdersFromFile) {
  const auto r = run("orders " + data("scores.txt"));
  ASSERT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("n_pseudo=200 n_oracle=200"), std::string::npos);
  EXPECT_NE(r.out.find("fosd pseudo>=oracle"), std::string::npos);
  EXPECT_NE(r.out.find("alpha_star="), std::string::npos);
}

TEST(Cli, OrdersSimulated) {
  const auto r = run("orders --simulate --rho 0 --p 0.5 --n 20000 --seed 2");
  ASSERT_EQ(r.code, 0);
  const auto at = r.out.find("alpha_star=");
  ASSERT_NE(at, std::string::npos);
  EXPECT_GE(std::stod(r.out.substr(at + 11)), 0.99);
}

TEST(Cli, Probe) {
  const auto r = run("probe --method naive --reps 2 --covariates 20 --n-train 300 --y-grid 0,1000");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("scenario,method,alpha,y,containment,draws\n", 0), 0u);
  EXPECT_NE(r.out.find(",0.000000,1.000000,40\n"), std::string::npos);
  // Small calibration folds can give whole-line intervals, so y = 1000 is
  // not always excluded.
  EXPECT_NE(r.out.find(",1000.000000,"), std::string::npos);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
}

TEST(Cli, Rate) {
  const auto r = run("rate --n-grid 400,800 --reps 2 --n-test 500 --oracle-means");
  ASSERT_EQ(r.code, 0);
  EXPECT_EQ(r.out.rfind("n,mean_m,mean_abs_error,mean_coverage,reps\n", 0), 0u);
  EXPECT_EQ(std::count(r.out.begin(), r.out.end(), '\n'), 3);
}
