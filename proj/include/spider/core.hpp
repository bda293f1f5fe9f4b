#pragma once

#include <cstdint>
#include <cstdlib>
#include <stdexcept>
#include <vector>

#include "spider/rng.hpp"

namespace spider {

// 1-based index of a half-line leg. 0 is reserved for "no leg" (the origin).
class LegId {
 public:
  explicit LegId(std::uint32_t index) : index_(index) {
    if (index == 0) throw std::invalid_argument("LegId: leg indices are 1-based");
  }
  std::uint32_t index() const { return index_; }
  friend bool operator==(LegId a, LegId b) { return a.index_ == b.index_; }
  friend bool operator!=(LegId a, LegId b) { return a.index_ != b.index_; }

 private:
  std::uint32_t index_;
};

// A vertex of the spider graph: the origin, or (radius r >= 1, leg). The origin
// is canonical — it carries no leg — so memberwise equality is state equality.
class SpiderState {
 public:
  SpiderState() : r_(0), leg_(0) {}

  static SpiderState origin() { return SpiderState(); }

  static SpiderState on_leg(std::uint32_t r, LegId leg) {
    if (r == 0) throw std::invalid_argument("SpiderState: r = 0 is the origin, which has no leg");
    SpiderState s;
    s.r_ = r;
    s.leg_ = leg.index();
    return s;
  }

  bool is_origin() const { return r_ == 0; }
  std::uint32_t radius() const { return r_; }

  LegId leg() const {
    if (is_origin()) throw std::logic_error("SpiderState::leg: origin has no leg");
    return LegId(leg_);
  }

  // 0 at the origin, the 1-based leg index otherwise.
  std::uint32_t leg_index_or_zero() const { return leg_; }

  friend bool operator==(const SpiderState& a, const SpiderState& b) {
    return a.r_ == b.r_ && a.leg_ == b.leg_;
  }
  friend bool operator!=(const SpiderState& a, const SpiderState& b) { return !(a == b); }

 private:
  std::uint32_t r_;
  std::uint32_t leg_;
};

// Leg-selection weights p_1..p_N: nonnegative, summing to 1 (tolerance 1e-12).
class LegWeights {
 public:
  explicit LegWeights(std::vector<double> p) : p_(std::move(p)) {
    if (p_.empty()) throw std::invalid_argument("LegWeights: need at least one leg");
    double sum = 0.0;
    for (double w : p_) {
      if (!(w >= 0.0)) throw std::invalid_argument("LegWeights: negative weight");
      sum += w;
    }
    if (std::abs(sum - 1.0) > 1e-12)
      throw std::invalid_argument("LegWeights: weights must sum to 1");
    cumulative_.reserve(p_.size());
    double c = 0.0;
    for (double w : p_) {
      c += w;
      cumulative_.push_back(c);
    }
    cumulative_.back() = 1.0;
  }

  static LegWeights uniform(std::size_t n) {
    if (n == 0) throw std::invalid_argument("LegWeights::uniform: need at least one leg");
    return LegWeights(std::vector<double>(n, 1.0 / static_cast<double>(n)));
  }

  std::size_t size() const { return p_.size(); }
  bool is_uniform() const {
    for (double w : p_)
      if (std::abs(w - p_[0]) > 1e-15) return false;
    return true;
  }
  bool all_positive() const {
    for (double w : p_)
      if (w <= 0.0) return false;
    return true;
  }

  double p(LegId leg) const { return p(leg.index()); }
  double p(std::size_t index_1based) const {
    if (index_1based == 0 || index_1based > p_.size())
      throw std::out_of_range("LegWeights: leg index out of range");
    return p_[index_1based - 1];
  }
  const std::vector<double>& values() const { return p_; }

  // Sample a leg index (1-based) from the weights.
  LegId sample(RngStream& rng) const {
    const double u = rng.next_double();
    std::size_t lo = 0, hi = cumulative_.size() - 1;
    while (lo < hi) {
      const std::size_t mid = (lo + hi) / 2;
      if (cumulative_[mid] <= u)
        lo = mid + 1;
      else
        hi = mid;
    }
    return LegId(static_cast<std::uint32_t>(lo + 1));
  }

 private:
  std::vector<double> p_;
  std::vector<double> cumulative_;
};

// Graph metric on the spider: |x - y| on a shared leg, x + y across legs
// (every path between different legs passes through the origin).
inline std::uint64_t spider_distance(const SpiderState& a, const SpiderState& b) {
  const std::uint64_t ra = a.radius();
  const std::uint64_t rb = b.radius();
  if (a.is_origin() || b.is_origin() || a.leg() == b.leg())
    return ra > rb ? ra - rb : rb - ra;
  return ra + rb;
}

// Real-valued variant used by the Brownian-coupling diagnostics: radii may be
// non-integer, legs use the same shared-leg/through-origin rule.
inline double spider_distance_real(double ra, std::uint32_t leg_a, double rb,
                                   std::uint32_t leg_b) {
  if (ra < 0.0 || rb < 0.0) throw std::invalid_argument("spider_distance_real: negative radius");
  if (ra == 0.0 || rb == 0.0 || leg_a == leg_b) return std::abs(ra - rb);
  return ra + rb;
}

// One step of the spider walk: from the origin, pick a leg by weight and move
// to radius 1; on a leg, move +-1 with probability 1/2 each.
inline SpiderState step(const SpiderState& s, const LegWeights& weights, RngStream& rng) {
  if (s.is_origin()) return SpiderState::on_leg(1, weights.sample(rng));
  const bool up = (rng.next_u64() & 1ULL) != 0;
  if (up) return SpiderState::on_leg(s.radius() + 1, s.leg());
  if (s.radius() == 1) return SpiderState::origin();
  return SpiderState::on_leg(s.radius() - 1, s.leg());
}

// Integer-valued nearest-neighbour path on the line (a simple random walk
// trajectory; values may be negative).
struct WalkPath {
  std::vector<std::int32_t> values;  // values[0] == 0 for a walk started at 0

  std::size_t steps() const { return values.empty() ? 0 : values.size() - 1; }

  bool is_valid() const {
    if (values.empty() || values[0] != 0) return false;
    for (std::size_t i = 1; i < values.size(); ++i) {
      const std::int64_t d =
          static_cast<std::int64_t>(values[i]) - static_cast<std::int64_t>(values[i - 1]);
      if (d != 1 && d != -1) return false;
    }
    return true;
  }
};

// A spider-walk trajectory. Adjacency: consecutive states at spider distance
// exactly 1, and leg changes only through the origin (which the distance-1
// constraint already enforces).
struct SpiderPath {
  std::vector<SpiderState> states;

  std::size_t steps() const { return states.empty() ? 0 : states.size() - 1; }

  bool is_valid() const {
    if (states.empty() || !states[0].is_origin()) return false;
    for (std::size_t i = 1; i < states.size(); ++i)
      if (spider_distance(states[i - 1], states[i]) != 1) return false;
    return true;
  }
};

// Number of visits to `site` among steps 1..n of the path (the starting point
// at index 0 is not counted). Throws if the path is shorter than n.
inline std::uint64_t local_time(const SpiderPath& path, const SpiderState& site, std::size_t n) {
  if (n > path.steps()) throw std::out_of_range("local_time: path shorter than n");
  std::uint64_t count = 0;
  for (std::size_t k = 1; k <= n; ++k)
    if (path.states[k] == site) ++count;
  return count;
}

inline std::uint64_t local_time(const SpiderPath& path, const SpiderState& site) {
  return local_time(path, site, path.steps());
}

}  // namespace spider
