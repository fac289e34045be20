#pragma once

// Gradient-boosted regression trees with three losses: squared error (mean
// regression), pinball (quantile regression) and logistic (propensity).
//
// Trees are grown level-wise on presorted feature orders, so one boosting
// round costs O(n * features * depth). Leaf values are refit to the loss
// (mean, leaf quantile, Newton step). Each shrunken leaf step is accepted only
// if it lowers the leaf's loss over all training rows, which makes
// the training loss nonincreasing round over round even with row subsampling.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "itepi/interval.hpp"
#include "itepi/rng.hpp"

namespace itepi {

struct LearnerConfig {
  std::size_t n_rounds = 300;
  std::size_t max_depth = 2;
  double learning_rate = 0.1;
  std::size_t min_leaf = 10;
  double subsample = 0.8;
  std::uint64_t seed = 0;

  void validate() const {
    if (n_rounds < 1) throw std::invalid_argument("learner: n_rounds must be >= 1");
    if (!(learning_rate > 0.0)) throw std::invalid_argument("learner: learning_rate must be > 0");
    if (min_leaf < 1) throw std::invalid_argument("learner: min_leaf must be >= 1");
    if (!(subsample > 0.0 && subsample <= 1.0))
      throw std::invalid_argument("learner: subsample must lie in (0, 1]");
  }
};

inline constexpr double kPropensityClip = 0.01;

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class ModelKind { mean, quantile, propensity };

class FittedModel {
 public:
  ModelKind kind() const { return kind_; }
  double level() const { return level_; }
  double clip() const { return clip_; }
  std::uint64_t fingerprint() const { return fingerprint_; }
  std::size_t n_trees() const { return trees_.size(); }

  // Mean training loss after the base fit (index 0) and after every round.
  const std::vector<double>& loss_trace() const { return loss_trace_; }

  double raw(const Covariate& x) const {
    double f = base_;
    for (const auto& tree : trees_) f += tree.nodes[tree.leaf(x)].value;
    return f;
  }

  double predict(const Covariate& x) const {
    const double f = raw(x);
    if (kind_ != ModelKind::propensity) return f;
    return std::clamp(1.0 / (1.0 + std::exp(-f)), clip_, 1.0 - clip_);
  }

  std::vector<double> predict(std::span<const Covariate> xs) const {
    std::vector<double> out(xs.size());
    for (std::size_t i = 0; i < xs.size(); ++i) out[i] = predict(xs[i]);
    return out;
  }

 private:
  struct Node {
    int feature = -1;  // -1 marks a leaf
    double threshold = 0.0;
    int left = -1;
    int right = -1;
    double value = 0.0;
  };
  struct Tree {
    std::vector<Node> nodes;
    std::size_t leaf(const Covariate& x) const {
      std::size_t k = 0;
      while (nodes[k].feature >= 0) {
        const auto& n = nodes[k];
        k = static_cast<std::size_t>(x[static_cast<std::size_t>(n.feature)] <= n.threshold ? n.left
                                                                                           : n.right);
      }
      return k;
    }
  };

  friend class BoostingTrainer;

  ModelKind kind_ = ModelKind::mean;
  double level_ = 0.5;
  double clip_ = kPropensityClip;
  double base_ = 0.0;
  std::vector<Tree> trees_;
  std::vector<double> loss_trace_;
  std::uint64_t fingerprint_ = 0;
};

namespace detail {

inline std::uint64_t fnv1a(std::uint64_t h, std::uint64_t word) {
  for (int b = 0; b < 8; ++b) {
    h ^= (word >> (8 * b)) & 0xffu;
    h *= 0x100000001b3ULL;
  }
  return h;
}

// Lower level-quantile of v (the pinball-loss minimizer). Reorders v.
inline double lower_quantile(std::vector<double>& v, double level) {
  const auto k = static_cast<std::size_t>(
      std::max(0.0, std::ceil(level * static_cast<double>(v.size())) - 1.0));
  const auto idx = std::min(k, v.size() - 1);
  std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx), v.end());
  return v[idx];
}

}  // namespace detail

class BoostingTrainer {
 public:
  BoostingTrainer(std::span<const Covariate> x, std::span<const double> y, ModelKind kind,
                  double level, const LearnerConfig& cfg)
      : x_(x), y_(y), kind_(kind), level_(level), cfg_(cfg) {}

  FittedModel fit() {
    cfg_.validate();
    if (x_.empty()) throw FitError("fit: empty training data");
    if (x_.size() != y_.size()) throw std::invalid_argument("fit: X and y lengths differ");

    const std::size_t n = x_.size();
    FittedModel model;
    model.kind_ = kind_;
    model.level_ = level_;
    model.fingerprint_ = fingerprint();
    model.base_ = base_score();

    for (std::size_t f = 0; f < kFeatures; ++f) {
      order_[f].resize(n);
      std::iota(order_[f].begin(), order_[f].end(), std::size_t{0});
      std::stable_sort(order_[f].begin(), order_[f].end(),
                       [&](std::size_t a, std::size_t b) { return x_[a][f] < x_[b][f]; });
    }

    score_.assign(n, model.base_);
    model.loss_trace_.push_back(total_loss());

    RngStream rng(cfg_.seed ^ 0x5bd1e995ULL);
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    const auto bag_size = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::floor(cfg_.subsample * static_cast<double>(n))));

    in_bag_.assign(n, 0);
    grad_.assign(n, 0.0);
    node_of_.assign(n, -1);
    leaf_rows_.clear();

    for (std::size_t round = 0; round < cfg_.n_rounds; ++round) {
      // Partial Fisher-Yates: the first bag_size entries of perm are the bag.
      std::fill(in_bag_.begin(), in_bag_.end(), 0);
      if (bag_size < n) {
        for (std::size_t i = 0; i < bag_size; ++i) {
          const auto j = i + static_cast<std::size_t>(rng.below(n - i));
          std::swap(perm[i], perm[j]);
        }
      }
      for (std::size_t i = 0; i < bag_size; ++i) in_bag_[perm[i]] = 1;

      for (std::size_t i = 0; i < n; ++i) grad_[i] = negative_gradient(i);

      auto tree = grow_tree();
      set_leaf_values(tree);
      model.trees_.push_back(std::move(tree));
      model.loss_trace_.push_back(total_loss());
    }
    return model;
  }

 private:
  static constexpr std::size_t kFeatures = 2;
  using Node = FittedModel::Node;
  using Tree = FittedModel::Tree;

  std::uint64_t fingerprint() const {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    h = detail::fnv1a(h, static_cast<std::uint64_t>(kind_));
    h = detail::fnv1a(h, std::bit_cast<std::uint64_t>(level_));
    h = detail::fnv1a(h, cfg_.n_rounds);
    h = detail::fnv1a(h, cfg_.max_depth);
    h = detail::fnv1a(h, std::bit_cast<std::uint64_t>(cfg_.learning_rate));
    h = detail::fnv1a(h, cfg_.min_leaf);
    h = detail::fnv1a(h, std::bit_cast<std::uint64_t>(cfg_.subsample));
    h = detail::fnv1a(h, cfg_.seed);
    for (std::size_t i = 0; i < x_.size(); ++i) {
      h = detail::fnv1a(h, std::bit_cast<std::uint64_t>(x_[i][0]));
      h = detail::fnv1a(h, std::bit_cast<std::uint64_t>(x_[i][1]));
      h = detail::fnv1a(h, std::bit_cast<std::uint64_t>(y_[i]));
    }
    return h;
  }

  double base_score() const {
    const auto n = static_cast<double>(y_.size());
    switch (kind_) {
      case ModelKind::mean:
        return std::accumulate(y_.begin(), y_.end(), 0.0) / n;
      case ModelKind::quantile: {
        std::vector<double> v(y_.begin(), y_.end());
        return detail::lower_quantile(v, level_);
      }
      case ModelKind::propensity: {
        const double rate = std::accumulate(y_.begin(), y_.end(), 0.0) / n;
        return std::log(rate / (1.0 - rate));
      }
    }
    return 0.0;
  }

  double loss(double y, double f) const {
    switch (kind_) {
      case ModelKind::mean:
        return 0.5 * (y - f) * (y - f);
      case ModelKind::quantile:
        return y >= f ? level_ * (y - f) : (1.0 - level_) * (f - y);
      case ModelKind::propensity:
        // log(1 + e^f) - y f, written to avoid overflow.
        return (f > 0 ? f + std::log1p(std::exp(-f)) : std::log1p(std::exp(f))) - y * f;
    }
    return 0.0;
  }

  double total_loss() const {
    double s = 0.0;
    for (std::size_t i = 0; i < y_.size(); ++i) s += loss(y_[i], score_[i]);
    return s / static_cast<double>(y_.size());
  }

  double negative_gradient(std::size_t i) const {
    const double y = y_[i];
    const double f = score_[i];
    switch (kind_) {
      case ModelKind::mean:
        return y - f;
      case ModelKind::quantile:
        return y < f ? level_ - 1.0 : level_;
      case ModelKind::propensity:
        return y - 1.0 / (1.0 + std::exp(-f));
    }
    return 0.0;
  }

  // Level-wise growth on the in-bag rows, variance-reduction criterion.
  Tree grow_tree() {
    Tree tree;
    tree.nodes.emplace_back();
    const std::size_t n = x_.size();
    for (std::size_t i = 0; i < n; ++i) node_of_[i] = in_bag_[i] ? 0 : -1;

    std::vector<int> open{0};
    for (std::size_t depth = 0; depth < cfg_.max_depth && !open.empty(); ++depth) {
      const std::size_t n_nodes = tree.nodes.size();
      std::vector<double> sum(n_nodes, 0.0);
      std::vector<std::size_t> cnt(n_nodes, 0);
      for (std::size_t i = 0; i < n; ++i) {
        if (node_of_[i] < 0) continue;
        sum[static_cast<std::size_t>(node_of_[i])] += grad_[i];
        cnt[static_cast<std::size_t>(node_of_[i])] += 1;
      }
      std::vector<char> is_open(n_nodes, 0);
      for (int k : open) {
        if (cnt[static_cast<std::size_t>(k)] >= 2 * cfg_.min_leaf) is_open[static_cast<std::size_t>(k)] = 1;
      }

      struct Best {
        double gain = 0.0;
        int feature = -1;
        double threshold = 0.0;
      };
      std::vector<Best> best(n_nodes);
      std::vector<double> sum_l(n_nodes);
      std::vector<std::size_t> cnt_l(n_nodes);
      std::vector<double> last(n_nodes);

      for (std::size_t f = 0; f < kFeatures; ++f) {
        std::fill(sum_l.begin(), sum_l.end(), 0.0);
        std::fill(cnt_l.begin(), cnt_l.end(), 0);
        for (std::size_t i : order_[f]) {
          const int k = node_of_[i];
          if (k < 0) continue;
          const auto ku = static_cast<std::size_t>(k);
          if (!is_open[ku]) continue;
          const double v = x_[i][f];
          const std::size_t nl = cnt_l[ku];
          const std::size_t nr = cnt[ku] - nl;
          if (nl >= cfg_.min_leaf && nr >= cfg_.min_leaf && v > last[ku]) {
            const double sl = sum_l[ku];
            const double sr = sum[ku] - sl;
            const double gain = sl * sl / static_cast<double>(nl) + sr * sr / static_cast<double>(nr) -
                                sum[ku] * sum[ku] / static_cast<double>(cnt[ku]);
            if (gain > best[ku].gain) {
              double thr = last[ku] + 0.5 * (v - last[ku]);
              if (!(thr < v)) thr = last[ku];
              best[ku] = {gain, static_cast<int>(f), thr};
            }
          }
          sum_l[ku] += grad_[i];
          cnt_l[ku] += 1;
          last[ku] = v;
        }
      }

      std::vector<int> next_open;
      for (int k : open) {
        const auto ku = static_cast<std::size_t>(k);
        if (!is_open[ku] || best[ku].feature < 0 || !(best[ku].gain > 1e-12)) continue;
        const int left = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes.emplace_back();
        tree.nodes[ku].feature = best[ku].feature;
        tree.nodes[ku].threshold = best[ku].threshold;
        tree.nodes[ku].left = left;
        tree.nodes[ku].right = left + 1;
        next_open.push_back(left);
        next_open.push_back(left + 1);
      }
      for (std::size_t i = 0; i < n; ++i) {
        const int k = node_of_[i];
        if (k < 0) continue;
        const auto& node = tree.nodes[static_cast<std::size_t>(k)];
        if (node.feature < 0) continue;
        node_of_[i] = x_[i][static_cast<std::size_t>(node.feature)] <= node.threshold ? node.left
                                                                                      : node.right;
      }
      open = std::move(next_open);
    }
    return tree;
  }

  void set_leaf_values(Tree& tree) {
    const std::size_t n = x_.size();
    const std::size_t n_nodes = tree.nodes.size();
    leaf_rows_.assign(n_nodes, {});
    std::vector<std::vector<std::size_t>> bag_rows(n_nodes);
    for (std::size_t i = 0; i < n; ++i) {
      const auto leaf = tree.leaf(x_[i]);
      leaf_rows_[leaf].push_back(i);
      if (in_bag_[i]) bag_rows[leaf].push_back(i);
    }

    std::vector<double> scratch;
    for (std::size_t k = 0; k < n_nodes; ++k) {
      auto& node = tree.nodes[k];
      if (node.feature >= 0) continue;
      node.value = 0.0;
      const auto& rows = bag_rows[k];
      if (rows.empty() || leaf_rows_[k].empty()) continue;

      double target = 0.0;
      switch (kind_) {
        case ModelKind::mean: {
          for (auto i : rows) target += grad_[i];
          target /= static_cast<double>(rows.size());
          break;
        }
        case ModelKind::quantile: {
          scratch.clear();
          for (auto i : rows) scratch.push_back(y_[i] - score_[i]);
          target = detail::lower_quantile(scratch, level_);
          break;
        }
        case ModelKind::propensity: {
          double num = 0.0;
          double den = 0.0;
          for (auto i : rows) {
            const double p = 1.0 / (1.0 + std::exp(-score_[i]));
            num += y_[i] - p;
            den += p * (1.0 - p);
          }
          target = den > 1e-12 ? num / den : 0.0;
          break;
        }
      }

      // Shrink, then backtrack until the leaf's full-data loss drops by more
      // than summation noise; otherwise leave the leaf at zero.
      double step = cfg_.learning_rate * target;
      double before = 0.0;
      for (auto i : leaf_rows_[k]) before += loss(y_[i], score_[i]);
      bool accepted = false;
      for (int tries = 0; tries < 20 && step != 0.0; ++tries) {
        double after = 0.0;
        for (auto i : leaf_rows_[k]) after += loss(y_[i], score_[i] + step);
        if (after < before - 1e-12 * std::abs(before)) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) step = 0.0;
      node.value = step;
      for (auto i : leaf_rows_[k]) score_[i] += step;
    }
  }

  std::span<const Covariate> x_;
  std::span<const double> y_;
  ModelKind kind_;
  double level_;
  LearnerConfig cfg_;

  std::vector<std::size_t> order_[kFeatures];
  std::vector<double> score_;
  std::vector<double> grad_;
  std::vector<char> in_bag_;
  std::vector<int> node_of_;
  std::vector<std::vector<std::size_t>> leaf_rows_;
};

inline FittedModel fit_mean(std::span<const Covariate> x, std::span<const double> y,
                            const LearnerConfig& cfg) {
  return BoostingTrainer(x, y, ModelKind::mean, 0.5, cfg).fit();
}

inline FittedModel fit_quantile(std::span<const Covariate> x, std::span<const double> y,
                                double level, const LearnerConfig& cfg) {
  if (!(level > 0.0 && level < 1.0)) throw std::domain_error("fit_quantile: level must lie in (0, 1)");
  return BoostingTrainer(x, y, ModelKind::quantile, level, cfg).fit();
}

inline FittedModel fit_propensity(std::span<const Covariate> x, std::span<const std::uint8_t> t,
                                  const LearnerConfig& cfg) {
  if (x.empty()) throw FitError("fit_propensity: empty training data");
  std::vector<double> y(t.begin(), t.end());
  const double treated = std::accumulate(y.begin(), y.end(), 0.0);
  if (treated == 0.0 || treated == static_cast<double>(y.size()))
    throw FitError("fit_propensity: both treatment classes must be present");
  return BoostingTrainer(x, y, ModelKind::propensity, 0.5, cfg).fit();
}

// Lower/upper conditional quantile pair with crossing repaired pointwise.
struct QuantileBand {
  FittedModel lower;
  FittedModel upper;

  std::pair<double, double> predict(const Covariate& x) const {
    const double a = lower.predict(x);
    const double b = upper.predict(x);
    return {std::min(a, b), std::max(a, b)};
  }
};

inline QuantileBand fit_quantile_band(std::span<const Covariate> x, std::span<const double> y,
                                      double lo_level, double hi_level, const LearnerConfig& cfg) {
  return {fit_quantile(x, y, lo_level, cfg), fit_quantile(x, y, hi_level, cfg)};
}

}  // namespace itepi
