#pragma once

// Per-leg heights, ranked excursion heights, the limiting height CDF, and the
// piecewise-linear energy functional used by the limit-set diagnostics.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <type_traits>
#include <utility>
#include <vector>

#include "spider/core.hpp"
#include "spider/exact.hpp"
#include "spider/stats.hpp"

namespace spider {

// ---------------------------------------------------------------------------
// Height summaries.
// ---------------------------------------------------------------------------

// Heights of a spider path after n steps: per-leg maxima H(j,n), their
// extremes, and the ranked excursion heights M_1 >= M_2 >= ... (radial
// excursions, incomplete tail included). ranked_legs[i] is the 1-based leg of
// the excursion realizing ranked[i] (0 for zero-padded entries), with ties in
// height broken by earlier start index.
struct HeightSummary {
  std::vector<std::uint64_t> per_leg;
  std::uint64_t h_max = 0;
  std::uint64_t h_min = 0;
  std::vector<std::uint64_t> ranked;
  std::vector<std::uint32_t> ranked_legs;

  // True when the first n entries of `ranked` are realized on n distinct legs
  // (zero-padded entries count as "no leg" and disqualify).
  bool top_ranked_on_distinct_legs(std::size_t n) const {
    if (n > ranked_legs.size()) return false;
    std::vector<std::uint32_t> legs(ranked_legs.begin(),
                                    ranked_legs.begin() + static_cast<std::ptrdiff_t>(n));
    std::sort(legs.begin(), legs.end());
    if (!legs.empty() && legs.front() == 0) return false;
    return std::adjacent_find(legs.begin(), legs.end()) == legs.end();
  }
};

// Streaming accumulator for heights: feed states one at a time and take
// snapshots at checkpoints without re-scanning the path.
class IncrementalHeightTracker {
 public:
  explicit IncrementalHeightTracker(std::uint32_t n_legs) : per_leg_(n_legs, 0) {
    if (n_legs == 0)
      throw std::invalid_argument("IncrementalHeightTracker: need at least one leg");
  }

  // Advance by one step to state `s`. The tracker starts at the origin.
  void step(const SpiderState& s) {
    ++n_;
    const std::uint64_t r = s.radius();
    const std::uint32_t leg = s.leg_index_or_zero();
    if (r == 0) {
      if (open_) {
        completed_.push_back(open_height_);
        completed_legs_.push_back(open_leg_);
        open_ = false;
      }
      return;
    }
    if (leg > per_leg_.size())
      throw std::out_of_range("IncrementalHeightTracker: leg index exceeds leg count");
    if (!open_) {
      open_ = true;
      open_height_ = 0;
      open_leg_ = leg;
    }
    open_height_ = std::max(open_height_, r);
    per_leg_[leg - 1] = std::max(per_leg_[leg - 1], r);
  }

  std::uint64_t steps() const { return n_; }
  const std::vector<std::uint64_t>& per_leg() const { return per_leg_; }

  // Summary with the ranked list truncated or zero-padded to exactly K.
  HeightSummary summary(std::size_t K) const {
    HeightSummary out;
    out.per_leg = per_leg_;
    out.h_max = *std::max_element(per_leg_.begin(), per_leg_.end());
    out.h_min = *std::min_element(per_leg_.begin(), per_leg_.end());

    // Excursions in start order; the open excursion (if any) comes last.
    const std::size_t total = completed_.size() + (open_ ? 1 : 0);
    std::vector<std::size_t> order(total);
    for (std::size_t i = 0; i < total; ++i) order[i] = i;
    auto height_of = [&](std::size_t i) {
      return i < completed_.size() ? completed_[i] : open_height_;
    };
    auto leg_of = [&](std::size_t i) {
      return i < completed_.size() ? completed_legs_[i] : open_leg_;
    };
    // Sort by height descending; stable keeps earlier start first on ties.
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
      return height_of(a) > height_of(b);
    });
    out.ranked.assign(K, 0);
    out.ranked_legs.assign(K, 0);
    for (std::size_t i = 0; i < std::min(K, total); ++i) {
      out.ranked[i] = height_of(order[i]);
      out.ranked_legs[i] = leg_of(order[i]);
    }
    return out;
  }

 private:
  std::vector<std::uint64_t> per_leg_;
  std::vector<std::uint64_t> completed_;
  std::vector<std::uint32_t> completed_legs_;
  std::uint64_t n_ = 0;
  bool open_ = false;
  std::uint64_t open_height_ = 0;
  std::uint32_t open_leg_ = 0;
};

// Heights of `path` with N legs; ranked list truncated/zero-padded to K.
// Unvisited legs have H(j,n) = 0.
inline HeightSummary compute_heights(const SpiderPath& path, std::uint32_t n_legs,
                                     std::size_t K) {
  if (!path.is_valid()) throw std::invalid_argument("compute_heights: invalid path");
  IncrementalHeightTracker tracker(n_legs);
  // Valid paths start at the origin, which is the tracker's implicit start.
  for (std::size_t i = 1; i < path.states.size(); ++i) tracker.step(path.states[i]);
  return tracker.summary(K);
}

// ---------------------------------------------------------------------------
// Limiting height CDF.
// ---------------------------------------------------------------------------

// Limit law of H(j,n)/sqrt(n) for the leg with weight p:
//   F(y) = 2p * sum_{k>=1} (1-2p)^{k-1} (2*Phi((2k-1)y) - 1).
// The series is summed until a rigorous tail bound drops below tol: for
// r = 1-2p > 0 the remainder is at most 2p r^k/(1-r) = r^k, and for r < 0 it
// is at most 2p|r|^k/(1-|r|) = p|r|^k/(1-p). For p = 1 (|r| = 1) no geometric
// bound exists and the term cap turns the degenerate ratio into an error.
inline double limit_height_cdf(double y, double p_leg, double tol = 1e-12) {
  if (!(y >= 0.0)) throw std::invalid_argument("limit_height_cdf: need y >= 0");
  if (!(p_leg > 0.0) || p_leg > 1.0)
    throw std::invalid_argument("limit_height_cdf: need 0 < p_leg <= 1");
  if (!(tol > 0.0)) throw std::invalid_argument("limit_height_cdf: need tol > 0");
  if (y == 0.0) return 0.0;

  const double r = 1.0 - 2.0 * p_leg;
  const double ar = std::fabs(r);
  constexpr std::size_t kMaxTerms = 1000000;

  double sum = 0.0;
  double rpow = 1.0;  // r^{k-1}
  for (std::size_t k = 1; k <= kMaxTerms; ++k) {
    sum += 2.0 * p_leg * rpow * (2.0 * phi((2.0 * static_cast<double>(k) - 1.0) * y) - 1.0);
    rpow *= r;
    const double ark = std::fabs(rpow);  // |r|^k
    double tail;
    if (r == 0.0) {
      tail = 0.0;
    } else if (r > 0.0) {
      tail = ark;  // 2p r^k / (1-r) with 1-r = 2p
    } else if (p_leg < 1.0) {
      tail = p_leg * ark / (1.0 - p_leg);
    } else {
      tail = std::numeric_limits<double>::infinity();
    }
    if (tail < tol) return std::clamp(sum, 0.0, 1.0);
  }
  throw std::runtime_error("limit_height_cdf: series did not converge within term cap");
}

// Slope at y = 0 of limit_height_cdf(., p): 2p * sqrt(2/pi) * (1+r)/(1-r)^2
// with r = 1-2p. For p <= 1/2 every series term is concave on y >= 0, so
// F(y) <= slope * y there; used as a small-y linear bound in diagnostics.
inline double limit_height_cdf_slope_at_zero(double p_leg) {
  if (!(p_leg > 0.0) || !(p_leg < 1.0))
    throw std::invalid_argument("limit_height_cdf_slope_at_zero: need 0 < p_leg < 1");
  const double r = 1.0 - 2.0 * p_leg;
  const double c = std::sqrt(2.0 / 3.14159265358979323846);
  return 2.0 * p_leg * c * (1.0 + r) / ((1.0 - r) * (1.0 - r));
}

// ---------------------------------------------------------------------------
// Piecewise-linear functions and the energy functional.
// ---------------------------------------------------------------------------

// A piecewise linear function on [0,1] given by knots (x_i, f(x_i)) with
// 0 = x_0 < ... < x_m = 1 and f(0) = 0. Scalar is double or ExactRational.
template <typename Scalar>
struct PiecewiseLinear {
  std::vector<std::pair<Scalar, Scalar>> knots;
};

using PiecewiseLinearFn = PiecewiseLinear<double>;
using PiecewiseLinearExact = PiecewiseLinear<ExactRational>;

namespace detail {
template <typename Scalar>
void validate_piecewise(const PiecewiseLinear<Scalar>& f) {
  if (f.knots.size() < 2)
    throw std::invalid_argument("piecewise linear: need at least two knots");
  if (f.knots.front().first != Scalar(0) || f.knots.front().second != Scalar(0))
    throw std::invalid_argument("piecewise linear: first knot must be (0, 0)");
  if (f.knots.back().first != Scalar(1))
    throw std::invalid_argument("piecewise linear: last knot must have x = 1");
  for (std::size_t i = 1; i < f.knots.size(); ++i) {
    if (!(f.knots[i - 1].first < f.knots[i].first))
      throw std::invalid_argument("piecewise linear: zero-length segment");
  }
}
}  // namespace detail

// Dirichlet energy I(f) = sum over segments of (df)^2/dx; exact for the given
// Scalar. Also reports admissibility I(f) <= 1 (with 1e-12 slack for double).
template <typename Scalar>
struct EnergyResult {
  Scalar energy;
  bool admissible;
};

template <typename Scalar>
EnergyResult<Scalar> strassen_energy(const PiecewiseLinear<Scalar>& f) {
  detail::validate_piecewise(f);
  Scalar energy(0);
  for (std::size_t i = 1; i < f.knots.size(); ++i) {
    const Scalar dx = f.knots[i].first - f.knots[i - 1].first;
    const Scalar df = f.knots[i].second - f.knots[i - 1].second;
    energy += df * df / dx;
  }
  bool ok;
  if constexpr (std::is_floating_point_v<Scalar>) {
    ok = energy <= Scalar(1) + Scalar(1e-12);
  } else {
    ok = energy <= Scalar(1);
  }
  return {energy, ok};
}

// The admissibility functional A = 2*sum a(j) - max a(j) over a nonempty
// vector of nonnegative scaled heights, and whether A <= 1 (1e-12 slack for
// double).
template <typename Scalar>
struct ConditionResult {
  Scalar value;
  bool admissible;
};

template <typename Scalar>
ConditionResult<Scalar> strassen_condition(const std::vector<Scalar>& a) {
  if (a.empty()) throw std::invalid_argument("strassen_condition: empty vector");
  Scalar total(0), top(0);
  for (const Scalar& v : a) {
    if (v < Scalar(0)) throw std::invalid_argument("strassen_condition: negative entry");
    total += v;
    top = std::max(top, v);
  }
  const Scalar value = Scalar(2) * total - top;
  bool ok;
  if constexpr (std::is_floating_point_v<Scalar>) {
    ok = value <= Scalar(1) + Scalar(1e-12);
  } else {
    ok = value <= Scalar(1);
  }
  return {value, ok};
}

// The canonical zig-zag realization of an admissible height vector: visit the
// nonzero entries in order with the largest entry moved last, tracing a tent
// of height a over an x-interval of length 2a for each entry except the last,
// which only ascends. Its energy equals 2*sum a(j) - max a(j) exactly; a flat
// tail pads the domain to x = 1. Throws if the vector is inadmissible (the
// trace would leave [0,1]).
template <typename Scalar>
PiecewiseLinear<Scalar> strassen_zigzag(const std::vector<Scalar>& a) {
  const auto cond = strassen_condition(a);  // validates nonnegativity
  if (!cond.admissible)
    throw std::invalid_argument("strassen_zigzag: vector is not admissible");

  // Nonzero entries in original order, largest moved to the back (first max
  // if tied).
  std::vector<Scalar> seq;
  for (const Scalar& v : a)
    if (v > Scalar(0)) seq.push_back(v);
  PiecewiseLinear<Scalar> f;
  f.knots.emplace_back(Scalar(0), Scalar(0));
  if (!seq.empty()) {
    const auto max_it = std::max_element(seq.begin(), seq.end());
    std::rotate(max_it, max_it + 1, seq.end());
    Scalar x(0);
    for (std::size_t i = 0; i < seq.size(); ++i) {
      const Scalar& h = seq[i];
      x += h;
      f.knots.emplace_back(x, h);  // ascend to the peak
      if (i + 1 < seq.size()) {
        x += h;
        f.knots.emplace_back(x, Scalar(0));  // descend back to zero
      }
    }
  }
  // Pad with a flat tail to x = 1 (no energy contribution).
  Scalar x_end = f.knots.back().first;
  bool at_one;
  if constexpr (std::is_floating_point_v<Scalar>) {
    at_one = std::fabs(x_end - Scalar(1)) <= Scalar(1e-12);
    if (at_one) f.knots.back().first = Scalar(1);
  } else {
    at_one = (x_end == Scalar(1));
  }
  if (!at_one) {
    if (x_end > Scalar(1))
      throw std::invalid_argument("strassen_zigzag: trace exceeds the unit interval");
    f.knots.emplace_back(Scalar(1), f.knots.back().second);
  }
  return f;
}

// ---------------------------------------------------------------------------
// Rescaled height traces.
// ---------------------------------------------------------------------------

// One checkpoint of the iterated-logarithm height trace at step n >= 3:
// a_vector(j) = H(j,n)/sqrt(2 n lnln n), a_value = 2*sum - max of that
// vector, and ranked_functional = (M_1 + 2*sum_{i=2}^N M_i)/sqrt(2 n lnln n).
struct TracePoint {
  std::uint64_t n = 0;
  std::vector<double> a_vector;
  double a_value = 0.0;
  double ranked_functional = 0.0;
};

inline double iterated_log_scale(std::uint64_t n) {
  if (n < 3) throw std::invalid_argument("iterated_log_scale: need n >= 3");
  const double nn = static_cast<double>(n);
  return std::sqrt(2.0 * nn * std::log(std::log(nn)));
}

inline TracePoint make_trace_point(const IncrementalHeightTracker& tracker) {
  const std::uint64_t n = tracker.steps();
  const double scale = iterated_log_scale(n);
  const std::size_t N = tracker.per_leg().size();
  const HeightSummary s = tracker.summary(N);

  TracePoint pt;
  pt.n = n;
  pt.a_vector.reserve(N);
  for (std::uint64_t h : s.per_leg) pt.a_vector.push_back(static_cast<double>(h) / scale);
  pt.a_value = strassen_condition(pt.a_vector).value;
  double ranked_sum = 0.0;
  for (std::size_t i = 0; i < s.ranked.size(); ++i)
    ranked_sum += (i == 0 ? 1.0 : 2.0) * static_cast<double>(s.ranked[i]);
  pt.ranked_functional = ranked_sum / scale;
  return pt;
}

// Drive a path generator through ascending checkpoints (all >= 3) and return
// one TracePoint per checkpoint. `next_state` is called once per step and
// must return the state after that step.
template <typename NextState>
std::vector<TracePoint> rescaled_height_trace(std::uint32_t n_legs,
                                              const std::vector<std::uint64_t>& checkpoints,
                                              NextState&& next_state) {
  if (checkpoints.empty())
    throw std::invalid_argument("rescaled_height_trace: no checkpoints");
  for (std::size_t i = 0; i < checkpoints.size(); ++i) {
    if (checkpoints[i] < 3)
      throw std::invalid_argument("rescaled_height_trace: checkpoints must be >= 3");
    if (i > 0 && checkpoints[i] <= checkpoints[i - 1])
      throw std::invalid_argument("rescaled_height_trace: checkpoints must be ascending");
  }
  IncrementalHeightTracker tracker(n_legs);
  std::vector<TracePoint> out;
  out.reserve(checkpoints.size());
  for (std::uint64_t target : checkpoints) {
    while (tracker.steps() < target) tracker.step(next_state());
    out.push_back(make_trace_point(tracker));
  }
  return out;
}

// Convenience overload walking an existing path (checkpoints <= path.steps()).
inline std::vector<TracePoint> rescaled_height_trace(
    const SpiderPath& path, std::uint32_t n_legs,
    const std::vector<std::uint64_t>& checkpoints) {
  if (!checkpoints.empty() && checkpoints.back() > path.steps())
    throw std::invalid_argument("rescaled_height_trace: checkpoint beyond path end");
  std::size_t idx = 0;
  return rescaled_height_trace(n_legs, checkpoints, [&]() {
    ++idx;
    return path.states[idx];
  });
}

}  // namespace spider
