#pragma once

// Batch evaluation: scenarios x methods x target levels x reps, aggregated
// into one summary row per (scenario, method, target), plus CSV and SVG
// output and the grid file format.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <tuple>
#include <vector>

#include "itepi/dgp.hpp"
#include "itepi/methods.hpp"
#include "itepi/parallel.hpp"
#include "itepi/stochastic_orders.hpp"

namespace itepi {

struct ExperimentGrid {
  std::vector<ScenarioConfig> scenarios;
  std::vector<MethodConfig> methods;
  std::vector<double> target_levels{0.5, 0.6, 0.7, 0.8, 0.9};
  std::size_t reps = 20;
  std::uint64_t master_seed = 1;

  void validate() const {
    if (scenarios.empty()) throw std::invalid_argument("grid: no scenarios");
    if (methods.empty()) throw std::invalid_argument("grid: no methods");
    if (target_levels.empty()) throw std::invalid_argument("grid: no target levels");
    if (reps < 1) throw std::invalid_argument("grid: reps must be >= 1");
    for (const auto& s : scenarios) s.validate();
    for (double t : target_levels)
      if (!(t > 0.0 && t < 1.0)) throw std::invalid_argument("grid: target levels must lie in (0, 1)");
  }
};

struct EvalResult {
  double coverage = 0.0;
  double mean_length = 0.0;  // over finite intervals; 0 when none are finite
  double inf_fraction = 0.0;
  std::size_t n = 0;
  std::size_t covered = 0;
  std::size_t finite = 0;
  double length_sum = 0.0;
};

inline EvalResult evaluate_intervals(const IntervalMap& map, const Dataset& test) {
  if (test.size() == 0) throw std::invalid_argument("evaluate_intervals: empty test set");
  EvalResult r;
  r.n = test.size();
  for (std::size_t i = 0; i < test.size(); ++i) {
    const Interval c = map(test.x[i]);
    if (c.contains(test.delta(i))) ++r.covered;
    if (c.finite()) {
      ++r.finite;
      r.length_sum += c.length();
    }
  }
  const auto n = static_cast<double>(r.n);
  r.coverage = static_cast<double>(r.covered) / n;
  r.inf_fraction = static_cast<double>(r.n - r.finite) / n;
  r.mean_length = r.finite ? r.length_sum / static_cast<double>(r.finite) : 0.0;
  return r;
}

struct EvalSummary {
  std::string scenario;
  std::string method;
  double target = 0.0;
  double coverage = 0.0;
  double cov_se = 0.0;
  double mean_length = 0.0;
  double inf_fraction = 0.0;
  std::size_t reps = 0;  // successful replicates
  std::size_t failed_reps = 0;
  std::size_t n_test = 0;
  std::vector<double> rep_coverages;
  std::string failure;  // first failure reason, if any
};

// sqrt(c (1 - c) / (reps n_test)) with c the mean of the per-rep coverages.
inline double coverage_se(const std::vector<double>& rep_coverages, std::size_t n_test) {
  if (rep_coverages.empty() || n_test == 0) return 0.0;
  double c = 0.0;
  for (double v : rep_coverages) c += v;
  c /= static_cast<double>(rep_coverages.size());
  return std::sqrt(c * (1.0 - c) / (static_cast<double>(rep_coverages.size()) * static_cast<double>(n_test)));
}

namespace detail {

struct RepCell {
  bool ok = false;
  std::string reason;
  EvalResult eval;
};

}  // namespace detail

// Each (scenario, rep) job owns the stream master.derive({s, rep}); data come
// from its derive(0) and method m at level l uses derive({1, m, l}), so the
// result does not depend on how jobs are scheduled.
inline std::vector<EvalSummary> run_experiment(const ExperimentGrid& grid, std::size_t parallelism = 1) {
  grid.validate();
  const std::size_t S = grid.scenarios.size(), R = grid.reps, M = grid.methods.size(),
                    L = grid.target_levels.size();
  std::vector<detail::RepCell> cells(S * R * M * L);
  auto at = [&](std::size_t s, std::size_t r, std::size_t m, std::size_t l) -> detail::RepCell& {
    return cells[((s * R + r) * M + m) * L + l];
  };
  const RngStream master(grid.master_seed);

  parallel_for(S * R, parallelism, [&](std::size_t job) {
    const std::size_t s = job / R, r = job % R;
    const auto& sc = grid.scenarios[s];
    const auto stream = master.derive({s, r});
    const auto data = gen_train_test(sc, stream.derive(0));
    const auto obs = data.train.observed();
    const auto oracle = oracle_propensity(sc);
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t l = 0; l < L; ++l) {
        auto& cell = at(s, r, m, l);
        try {
          const auto cfg = grid.methods[m].at_alpha(1.0 - grid.target_levels[l]);
          const auto map = build_method(obs, cfg, oracle, stream.derive({1, m, l}));
          cell.eval = evaluate_intervals(map, data.test);
          cell.ok = true;
        } catch (const MethodError& e) {
          cell.reason = e.what();
        } catch (const FitError& e) {
          cell.reason = e.what();
        }
      }
    }
  });

  std::vector<EvalSummary> out;
  for (std::size_t s = 0; s < S; ++s) {
    for (std::size_t m = 0; m < M; ++m) {
      for (std::size_t l = 0; l < L; ++l) {
        EvalSummary row;
        row.scenario = grid.scenarios[s].id();
        row.method = grid.methods[m].id();
        row.target = grid.target_levels[l];
        row.n_test = grid.scenarios[s].n_test;
        std::size_t finite = 0, total = 0;
        double length_sum = 0.0, cov_sum = 0.0;
        for (std::size_t r = 0; r < R; ++r) {
          const auto& cell = at(s, r, m, l);
          if (!cell.ok) {
            ++row.failed_reps;
            if (row.failure.empty()) row.failure = cell.reason;
            continue;
          }
          row.rep_coverages.push_back(cell.eval.coverage);
          cov_sum += cell.eval.coverage;
          finite += cell.eval.finite;
          total += cell.eval.n;
          length_sum += cell.eval.length_sum;
        }
        row.reps = row.rep_coverages.size();
        if (row.reps == 0) {
          row.coverage = row.mean_length = row.inf_fraction = row.cov_se = std::nan("");
        } else {
          row.coverage = cov_sum / static_cast<double>(row.reps);
          row.cov_se = coverage_se(row.rep_coverages, row.n_test);
          row.mean_length = finite ? length_sum / static_cast<double>(finite) : std::nan("");
          row.inf_fraction = static_cast<double>(total - finite) / static_cast<double>(total);
        }
        out.push_back(std::move(row));
      }
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// CSV.

inline constexpr const char* kCsvHeader = "scenario,method,target,coverage,cov_se,mean_length,inf_fraction,reps";

namespace detail {

inline std::string fixed6(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  // "-0.000000" and "0.000000" must not differ between runs.
  if (std::string(buf) == "-0.000000") return "0.000000";
  return buf;
}

inline std::vector<std::string> split(const std::string& s, char sep) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream is(s);
  while (std::getline(is, cur, sep)) out.push_back(cur);
  if (!s.empty() && s.back() == sep) out.emplace_back();
  return out;
}

inline double parse_csv_real(const std::string& s) {
  if (s == "nan") return std::nan("");
  if (s == "inf") return kInf;
  if (s == "-inf") return -kInf;
  std::size_t pos = 0;
  const double v = std::stod(s, &pos);
  if (pos != s.size()) throw std::invalid_argument("csv: bad number '" + s + "'");
  return v;
}

}  // namespace detail

inline std::vector<EvalSummary> sorted_for_output(std::vector<EvalSummary> rows) {
  std::stable_sort(rows.begin(), rows.end(), [](const EvalSummary& a, const EvalSummary& b) {
    return std::tie(a.scenario, a.method, a.target) < std::tie(b.scenario, b.method, b.target);
  });
  return rows;
}

inline std::string to_csv(const std::vector<EvalSummary>& summaries) {
  std::string out = std::string(kCsvHeader) + "\n";
  for (const auto& r : sorted_for_output(summaries)) {
    out += r.scenario + ',' + r.method + ',' + detail::fixed6(r.target) + ',' + detail::fixed6(r.coverage) + ',' +
           detail::fixed6(r.cov_se) + ',' + detail::fixed6(r.mean_length) + ',' + detail::fixed6(r.inf_fraction) +
           ',' + std::to_string(r.reps) + '\n';
  }
  return out;
}

inline void write_text_file(const std::string& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open '" + path + "' for writing");
  f << text;
  f.flush();
  if (!f) throw std::runtime_error("write to '" + path + "' failed");
}

inline void emit_csv(const std::vector<EvalSummary>& summaries, const std::string& path) {
  write_text_file(path, to_csv(summaries));
}

inline std::vector<EvalSummary> parse_csv(const std::string& text) {
  std::istringstream is(text);
  std::string line;
  if (!std::getline(is, line) || line != kCsvHeader) throw std::invalid_argument("csv: missing or unexpected header");
  std::vector<EvalSummary> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = detail::split(line, ',');
    if (f.size() != 8) throw std::invalid_argument("csv: expected 8 fields in '" + line + "'");
    EvalSummary r;
    r.scenario = f[0];
    r.method = f[1];
    r.target = detail::parse_csv_real(f[2]);
    r.coverage = detail::parse_csv_real(f[3]);
    r.cov_se = detail::parse_csv_real(f[4]);
    r.mean_length = detail::parse_csv_real(f[5]);
    r.inf_fraction = detail::parse_csv_real(f[6]);
    r.reps = detail::parse_count("reps", f[7]);
    rows.push_back(std::move(r));
  }
  return rows;
}

// ---------------------------------------------------------------------------
// Grid files.
//
//   # comment
//   [grid]             (keys before any section also land here)
//   targets = 0.5, 0.9
//   reps = 20
//   seed = 1
//   methods = naive, split_pair   (shorthand: one default [method] each)
//   [scenario]
//   propensity = constant
//   p = 0.9
//   [method]
//   method = dr
//   propensity_mode = oracle
//   outcome.max_depth = 3

namespace detail {

inline bool apply_learner_key(LearnerConfig& c, const std::string& key, const std::string& v) {
  if (key == "n_rounds") c.n_rounds = parse_count(key, v);
  else if (key == "max_depth") c.max_depth = parse_count(key, v);
  else if (key == "learning_rate") c.learning_rate = parse_real(key, v);
  else if (key == "min_leaf") c.min_leaf = parse_count(key, v);
  else if (key == "subsample") c.subsample = parse_real(key, v);
  else return false;
  return true;
}

inline PropensityMode parse_propensity_mode(const std::string& v) {
  if (v == "oracle") return PropensityMode::oracle;
  if (v == "estimated") return PropensityMode::estimated;
  throw std::invalid_argument("propensity mode must be oracle|estimated");
}

inline std::vector<double> parse_real_list(const std::string& key, const std::string& v) {
  std::vector<double> out;
  for (const auto& part : split(v, ',')) out.push_back(parse_real(key, trim(part)));
  if (out.empty()) throw std::invalid_argument(key + ": empty list");
  return out;
}

}  // namespace detail

inline bool apply_method_key(MethodConfig& m, const std::string& key, const std::string& v) {
  if (key == "method") m.method = parse_method_kind(v);
  else if (key == "name") m.name = v;
  else if (key == "alpha") m.alpha = detail::parse_real(key, v);
  else if (key == "gamma") m.gamma = detail::parse_real(key, v);
  else if (key == "propensity_mode") m.propensity_mode = detail::parse_propensity_mode(v);
  else if (key == "meta_score") {
    if (v == "cqr") m.meta_score = MetaScore::cqr;
    else if (v == "absolute") m.meta_score = MetaScore::absolute;
    else throw std::invalid_argument("meta_score must be cqr|absolute");
  } else if (key == "split_ratio") m.split_ratio = detail::parse_real(key, v);
  else if (key.rfind("outcome.", 0) == 0) return detail::apply_learner_key(m.outcome, key.substr(8), v);
  else if (key.rfind("propensity.", 0) == 0) return detail::apply_learner_key(m.propensity, key.substr(11), v);
  else return false;
  return true;
}

inline ExperimentGrid parse_grid(const std::string& text) {
  ExperimentGrid g;
  g.target_levels.clear();
  enum class Section { grid, scenario, method } section = Section::grid;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  bool saw_targets = false;
  auto fail = [&lineno](const std::string& msg) {
    throw std::invalid_argument("grid line " + std::to_string(lineno) + ": " + msg);
  };
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    if (line == "[grid]") { section = Section::grid; continue; }
    if (line == "[scenario]") { section = Section::scenario; g.scenarios.emplace_back(); continue; }
    if (line == "[method]") { section = Section::method; g.methods.emplace_back(); continue; }
    if (line.front() == '[') fail("unknown section " + line);
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail("expected key = value");
    const std::string key = detail::trim(line.substr(0, eq)), value = detail::trim(line.substr(eq + 1));
    try {
      switch (section) {
        case Section::grid:
          if (key == "targets") {
            g.target_levels = detail::parse_real_list(key, value);
            saw_targets = true;
          } else if (key == "reps") {
            g.reps = detail::parse_count(key, value);
          } else if (key == "seed") {
            g.master_seed = detail::parse_count(key, value);
          } else if (key == "methods") {
            for (const auto& part : detail::split(value, ',')) {
              MethodConfig m;
              m.method = parse_method_kind(detail::trim(part));
              g.methods.push_back(m);
            }
          } else {
            fail("unknown grid key '" + key + "'");
          }
          break;
        case Section::scenario:
          if (!apply_scenario_key(g.scenarios.back(), key, value)) fail("unknown scenario key '" + key + "'");
          break;
        case Section::method:
          if (!apply_method_key(g.methods.back(), key, value)) fail("unknown method key '" + key + "'");
          break;
      }
    } catch (const std::invalid_argument& e) {
      const std::string what = e.what();
      if (what.rfind("grid line", 0) == 0) throw;
      fail(what);
    }
  }
  if (!saw_targets) g.target_levels = {0.5, 0.6, 0.7, 0.8, 0.9};
  g.validate();
  return g;
}

// ---------------------------------------------------------------------------
// SVG plots.

enum class PlotKind { coverage_vs_target, length_vs_target, score_cdf };

inline PlotKind parse_plot_kind(const std::string& s) {
  if (s == "coverage_vs_target") return PlotKind::coverage_vs_target;
  if (s == "length_vs_target") return PlotKind::length_vs_target;
  if (s == "score_cdf") return PlotKind::score_cdf;
  throw std::invalid_argument("unknown plot kind '" + s + "'");
}

namespace detail {

inline constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728",
                                           "#9467bd", "#8c564b", "#e377c2", "#7f7f7f"};

inline std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", v);
  return buf;
}

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

struct Series {
  std::string label;
  std::vector<std::pair<double, double>> pts;
  bool step = false;
};

struct Panel {
  std::string title;
  std::string xlabel, ylabel;
  double x0 = 0, x1 = 1, y0 = 0, y1 = 1;
  bool identity = false;
  std::vector<Series> series;
};

inline std::string render_svg(const std::vector<Panel>& panels) {
  const double pw = 360, ph = 300, ml = 55, mr = 15, mt = 30, mb = 45;
  const double width = pw * static_cast<double>(panels.size()), height = ph + 20.0 * 8;
  std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" + num(width) + "\" height=\"" +
                  num(height) + "\" font-family=\"sans-serif\" font-size=\"11\">\n";
  s += "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
  for (std::size_t p = 0; p < panels.size(); ++p) {
    const auto& pn = panels[p];
    const double ox = pw * static_cast<double>(p);
    const double iw = pw - ml - mr, ih = ph - mt - mb;
    const double xs = pn.x1 > pn.x0 ? iw / (pn.x1 - pn.x0) : 1.0, ys = pn.y1 > pn.y0 ? ih / (pn.y1 - pn.y0) : 1.0;
    auto X = [&](double x) { return ox + ml + (std::clamp(x, pn.x0, pn.x1) - pn.x0) * xs; };
    auto Y = [&](double y) { return mt + ih - (std::clamp(y, pn.y0, pn.y1) - pn.y0) * ys; };
    s += "<text x=\"" + num(ox + pw / 2) + "\" y=\"18\" text-anchor=\"middle\">" + xml_escape(pn.title) + "</text>\n";
    s += "<rect x=\"" + num(ox + ml) + "\" y=\"" + num(mt) + "\" width=\"" + num(iw) + "\" height=\"" + num(ih) +
         "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int k = 0; k <= 4; ++k) {
      const double xv = pn.x0 + (pn.x1 - pn.x0) * k / 4.0, yv = pn.y0 + (pn.y1 - pn.y0) * k / 4.0;
      s += "<text x=\"" + num(X(xv)) + "\" y=\"" + num(mt + ih + 14) + "\" text-anchor=\"middle\">" + num(xv) +
           "</text>\n";
      s += "<text x=\"" + num(ox + ml - 4) + "\" y=\"" + num(Y(yv) + 4) + "\" text-anchor=\"end\">" + num(yv) +
           "</text>\n";
    }
    s += "<text x=\"" + num(ox + ml + iw / 2) + "\" y=\"" + num(mt + ih + 32) + "\" text-anchor=\"middle\">" +
         xml_escape(pn.xlabel) + "</text>\n";
    s += "<text x=\"" + num(ox + 14) + "\" y=\"" + num(mt + ih / 2) + "\" text-anchor=\"middle\" transform=\"rotate(-90 " +
         num(ox + 14) + " " + num(mt + ih / 2) + ")\">" + xml_escape(pn.ylabel) + "</text>\n";
    if (pn.identity) {
      const double lo = std::max(pn.x0, pn.y0), hi = std::min(pn.x1, pn.y1);
      s += "<line x1=\"" + num(X(lo)) + "\" y1=\"" + num(Y(lo)) + "\" x2=\"" + num(X(hi)) + "\" y2=\"" + num(Y(hi)) +
           "\" stroke=\"red\" stroke-dasharray=\"5,4\"/>\n";
    }
    for (std::size_t k = 0; k < pn.series.size(); ++k) {
      const auto& se = pn.series[k];
      const char* color = kPalette[k % std::size(kPalette)];
      std::string path;
      for (std::size_t i = 0; i < se.pts.size(); ++i) {
        const auto [x, y] = se.pts[i];
        if (se.step && i > 0) path += num(X(x)) + "," + num(Y(se.pts[i - 1].second)) + " ";
        path += num(X(x)) + "," + num(Y(y)) + " ";
      }
      if (!path.empty()) path.pop_back();
      s += "<polyline fill=\"none\" stroke=\"" + std::string(color) + "\" stroke-width=\"1.5\" points=\"" + path +
           "\"/>\n";
      if (!se.step)
        for (const auto& [x, y] : se.pts)
          s += "<circle cx=\"" + num(X(x)) + "\" cy=\"" + num(Y(y)) + "\" r=\"2.5\" fill=\"" + color + "\"/>\n";
      const double ly = ph + 14.0 * static_cast<double>(k) + 4;
      s += "<line x1=\"" + num(ox + ml) + "\" y1=\"" + num(ly) + "\" x2=\"" + num(ox + ml + 20) + "\" y2=\"" + num(ly) +
           "\" stroke=\"" + color + "\" stroke-width=\"2\"/>\n";
      s += "<text x=\"" + num(ox + ml + 26) + "\" y=\"" + num(ly + 4) + "\">" + xml_escape(se.label) + "</text>\n";
    }
  }
  s += "</svg>\n";
  return s;
}

}  // namespace detail

// One panel per scenario, one series per method.
inline std::string summary_plot_svg(const std::vector<EvalSummary>& summaries, PlotKind kind) {
  if (kind == PlotKind::score_cdf) throw std::invalid_argument("score_cdf plots take a score pair, not summaries");
  if (summaries.empty()) throw std::invalid_argument("plot: no summaries");
  const auto rows = sorted_for_output(summaries);
  std::vector<detail::Panel> panels;
  for (const auto& r : rows) {
    if (panels.empty() || panels.back().title != r.scenario) {
      detail::Panel p;
      p.title = r.scenario;
      p.xlabel = "target coverage";
      p.ylabel = kind == PlotKind::coverage_vs_target ? "realized coverage" : "mean length";
      p.identity = kind == PlotKind::coverage_vs_target;
      p.x0 = p.x1 = r.target;
      p.y0 = 0.0;
      p.y1 = kind == PlotKind::coverage_vs_target ? 1.0 : 0.0;
      panels.push_back(p);
    }
    auto& p = panels.back();
    if (p.series.empty() || p.series.back().label != r.method) p.series.push_back({r.method, {}, false});
    const double y = kind == PlotKind::coverage_vs_target ? r.coverage : r.mean_length;
    if (std::isfinite(y)) p.series.back().pts.emplace_back(r.target, y);
    p.x0 = std::min(p.x0, r.target);
    p.x1 = std::max(p.x1, r.target);
    if (kind == PlotKind::length_vs_target && std::isfinite(y)) p.y1 = std::max(p.y1, y * 1.05);
  }
  for (auto& p : panels) {
    if (p.identity) {
      p.x0 = std::min(p.x0, 0.4);
      p.x1 = 1.0;
    } else if (p.x1 == p.x0) {
      p.x0 -= 0.05;
      p.x1 += 0.05;
    }
    if (p.y1 <= p.y0) p.y1 = p.y0 + 1.0;
  }
  return detail::render_svg(panels);
}

inline std::string score_cdf_svg(const ScorePair& pair) {
  pair.validate();
  detail::Panel p;
  p.title = "score cdfs";
  p.xlabel = "score";
  p.ylabel = "cdf";
  const auto add = [&p](const std::string& label, std::vector<double> v) {
    std::sort(v.begin(), v.end());
    detail::Series se{label, {}, true};
    // Thin long samples to at most ~400 steps.
    const std::size_t stride = std::max<std::size_t>(1, v.size() / 400);
    se.pts.emplace_back(v.front(), 0.0);
    for (std::size_t i = 0; i < v.size(); i += stride)
      se.pts.emplace_back(v[i], static_cast<double>(i + 1) / static_cast<double>(v.size()));
    se.pts.emplace_back(v.back(), 1.0);
    p.series.push_back(std::move(se));
  };
  add("pseudo score", pair.v_pseudo);
  add("oracle score", pair.v_oracle);
  p.x0 = std::min(*std::min_element(pair.v_pseudo.begin(), pair.v_pseudo.end()),
                  *std::min_element(pair.v_oracle.begin(), pair.v_oracle.end()));
  // Upper display limit at the pooled 99th percentile keeps heavy tails readable.
  std::vector<double> pool = pair.v_pseudo;
  pool.insert(pool.end(), pair.v_oracle.begin(), pair.v_oracle.end());
  std::sort(pool.begin(), pool.end());
  p.x1 = pool[static_cast<std::size_t>(0.99 * static_cast<double>(pool.size() - 1))];
  if (p.x1 <= p.x0) p.x1 = p.x0 + 1.0;
  return detail::render_svg({p});
}

inline void emit_plot(const std::vector<EvalSummary>& summaries, PlotKind kind, const std::string& path) {
  write_text_file(path, summary_plot_svg(summaries, kind));
}

inline void emit_plot(const ScorePair& pair, const std::string& path) { write_text_file(path, score_cdf_svg(pair)); }

// ---------------------------------------------------------------------------
// Dataset dump.

inline std::string dataset_csv(const Dataset& d) {
  std::string out = "x1,x2,t,y_obs,y1,y0\n";
  for (std::size_t i = 0; i < d.size(); ++i)
    out += detail::fmt_real(d.x[i][0]) + ',' + detail::fmt_real(d.x[i][1]) + ',' + std::to_string(d.t[i]) + ',' +
           detail::fmt_real(d.y_obs[i]) + ',' + detail::fmt_real(d.y1[i]) + ',' + detail::fmt_real(d.y0[i]) + '\n';
  return out;
}

// Two whitespace- or comma-separated columns per line: pseudo, oracle.
inline ScorePair parse_score_pair(const std::string& text) {
  ScorePair p;
  std::istringstream is(text);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ls(line);
    std::string a, b, extra;
    if (!(ls >> a)) continue;
    if (!(ls >> b) || (ls >> extra)) throw std::invalid_argument("scores line " + std::to_string(lineno) + ": expected two columns");
    try {
      const double va = detail::parse_csv_real(a), vb = detail::parse_csv_real(b);
      p.v_pseudo.push_back(va);
      p.v_oracle.push_back(vb);
    } catch (const std::exception&) {
      if (lineno == 1 && p.v_pseudo.empty()) continue;  // header
      throw std::invalid_argument("scores line " + std::to_string(lineno) + ": not numeric");
    }
  }
  p.validate();
  return p;
}

}  // namespace itepi
