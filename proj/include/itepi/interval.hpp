#pragma once

#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>

namespace itepi {

using Covariate = std::array<double, 2>;

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Closed interval [lo, hi]; either end may be infinite.
struct Interval {
  double lo = -kInf;
  double hi = kInf;

  static Interval whole() { return {-kInf, kInf}; }

  bool finite() const { return std::isfinite(lo) && std::isfinite(hi); }
  double length() const { return hi - lo; }
  bool contains(double y) const { return lo <= y && y <= hi; }
  bool contains(const Interval& other) const {
    return lo <= other.lo && other.hi <= hi;
  }

  friend bool operator==(const Interval&, const Interval&) = default;
};

// Minkowski difference {u - v : u in a, v in b}.
inline Interval minkowski_difference(const Interval& a, const Interval& b) {
  return {a.lo - b.hi, a.hi - b.lo};
}

// Thrown by interval builders when the data cannot support the method
// (empty arm, empty training split, ...).
class MethodError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A fitted prediction-set map x -> Interval, plus bookkeeping about how it was
// built. Immutable once returned; safe to share across threads.
class IntervalMap {
 public:
  using Fn = std::function<Interval(const Covariate&)>;

  IntervalMap() : fn_([](const Covariate&) { return Interval::whole(); }) {}
  explicit IntervalMap(Fn fn) : fn_(std::move(fn)) {}

  static IntervalMap trivial(std::string reason) {
    IntervalMap map;
    map.degenerate_ = true;
    map.meta_["degenerate"] = std::move(reason);
    return map;
  }

  Interval operator()(const Covariate& x) const { return fn_(x); }

  // True when the builder fell back to (-inf, inf) because a calibration
  // set was too small.
  bool degenerate() const { return degenerate_; }
  void mark_degenerate(std::string reason) {
    degenerate_ = true;
    meta_["degenerate"] = std::move(reason);
  }

  const std::map<std::string, std::string>& metadata() const { return meta_; }
  void set_meta(std::string key, std::string value) {
    meta_[std::move(key)] = std::move(value);
  }

 private:
  Fn fn_;
  bool degenerate_ = false;
  std::map<std::string, std::string> meta_;
};

}  // namespace itepi
