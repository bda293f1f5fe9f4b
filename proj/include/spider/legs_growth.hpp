#pragma once

// Growing-legs machinery: tall-excursion counts, return times, the min-visit
// events behind the many-legs limit theorems, the coupon-collector urn
// limits, and the Hoeffding-type envelope checks.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <utility>
#include <vector>

#include "spider/core.hpp"
#include "spider/first_passage.hpp"
#include "spider/rng.hpp"
#include "spider/stats.hpp"

namespace spider {

// ---------------------------------------------------------------------------
// Path-based excursion counts.
// ---------------------------------------------------------------------------

// Zero-anchored excursion statistics of a +-1 walk path at horizon n.
// Conventions (fixed across the project):
//   * xi0 counts zeros at times 0 <= t < n (the start counts, n does not).
//   * zeta counts anchors t < n whose following excursion reaches |L| before
//     returning to 0 -- the reach may happen after n, but must be visible
//     within the recorded path (an ongoing final excursion counts only if it
//     has already reached L).
//   * zeta_inside is the variant requiring the first L-visit at a time <= n.
//   * rho lists every return time in the recorded path, rho[0] = 0.
//   * h_n is the first return time strictly after n, when the path shows one.
struct ExcursionCountSummary {
  std::uint64_t xi0 = 0;
  std::uint64_t zeta = 0;
  std::uint64_t zeta_inside = 0;
  std::vector<std::uint64_t> rho;
  std::uint64_t h_n = 0;
  bool h_n_observed = false;
};

inline ExcursionCountSummary count_tall_excursions(const WalkPath& path, std::uint32_t L,
                                                   std::size_t n) {
  if (L < 1) throw std::invalid_argument("count_tall_excursions: need L >= 1");
  if (!path.is_valid()) throw std::invalid_argument("count_tall_excursions: invalid path");
  if (n > path.steps()) throw std::out_of_range("count_tall_excursions: n beyond path end");

  ExcursionCountSummary out;
  const auto& v = path.values;
  for (std::size_t t = 0; t < v.size(); ++t)
    if (v[t] == 0) out.rho.push_back(t);
  for (std::uint64_t z : out.rho) {
    if (z > n && !out.h_n_observed) {
      out.h_n = z;
      out.h_n_observed = true;
    }
  }

  const std::int64_t target = static_cast<std::int64_t>(L);
  for (std::size_t zi = 0; zi < out.rho.size(); ++zi) {
    const std::uint64_t z = out.rho[zi];
    if (z >= n) break;
    ++out.xi0;
    // The excursion anchored at z spans (z, z'] with z' the next zero, or the
    // recorded tail (z, end] if the walk has not returned yet.
    const std::size_t stop =
        zi + 1 < out.rho.size() ? static_cast<std::size_t>(out.rho[zi + 1]) : v.size();
    std::size_t first_hit = 0;
    for (std::size_t idx = static_cast<std::size_t>(z) + 1; idx < stop; ++idx) {
      if (std::abs(static_cast<std::int64_t>(v[idx])) >= target) {
        first_hit = idx;
        break;
      }
    }
    if (first_hit != 0) {
      ++out.zeta;
      if (first_hit <= n) ++out.zeta_inside;
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Min-visit events.
// ---------------------------------------------------------------------------

struct MinVisitFlags {
  bool m_event = false;  // every leg's height-L site visited at least once
  bool a_event = false;  // ... at least k times
};

// Events over the whole recorded path: M = min_j #visits(radius L, leg j) >= 1
// and A = >= k. A implies M for every k >= 1.
inline MinVisitFlags check_min_visits(const SpiderPath& path, std::uint32_t n_legs,
                                      std::uint32_t L, std::uint32_t k) {
  if (L < 1 || k < 1) throw std::invalid_argument("check_min_visits: need L >= 1, k >= 1");
  if (n_legs < 1) throw std::invalid_argument("check_min_visits: need at least one leg");
  if (!path.is_valid()) throw std::invalid_argument("check_min_visits: invalid path");
  std::vector<std::uint64_t> visits(n_legs, 0);
  for (std::size_t i = 1; i < path.states.size(); ++i) {
    const SpiderState& s = path.states[i];
    if (s.radius() != L) continue;
    const std::uint32_t leg = s.leg_index_or_zero();
    if (leg == 0 || leg > n_legs)
      throw std::invalid_argument("check_min_visits: path leg outside 1..n_legs");
    ++visits[leg - 1];
  }
  const std::uint64_t lowest = *std::min_element(visits.begin(), visits.end());
  return {lowest >= 1, lowest >= k};
}

// ---------------------------------------------------------------------------
// Growing-legs experiments.
// ---------------------------------------------------------------------------

enum class FScaleMode { constant, log_up, log_down };

// Configuration of a min-visit experiment on N legs with uniform weights:
// horizon n = floor((c * f(N) * L * N * ln N)^2) with f = 1, ln N, or 1/ln N.
// The L <= N/ln N regime is enforced unless explicitly relaxed.
struct GrowingLegsConfig {
  std::uint32_t n_legs = 2;
  std::uint32_t L = 1;
  double c = 1.0;
  FScaleMode f_mode = FScaleMode::constant;
  std::uint64_t trials = 1000;
  std::uint32_t k = 1;
  bool enforce_regime = true;
  std::uint64_t horizon_override = 0;  // 0 = derive from the formula

  double f_value() const {
    const double ln_n = std::log(static_cast<double>(n_legs));
    switch (f_mode) {
      case FScaleMode::constant: return 1.0;
      case FScaleMode::log_up: return ln_n;
      case FScaleMode::log_down: return 1.0 / ln_n;
    }
    throw std::logic_error("GrowingLegsConfig: bad f_mode");
  }

  void validate() const {
    if (n_legs < 2) throw std::invalid_argument("GrowingLegsConfig: need N >= 2");
    if (L < 1) throw std::invalid_argument("GrowingLegsConfig: need L >= 1");
    if (!(c > 0.0)) throw std::invalid_argument("GrowingLegsConfig: need c > 0");
    if (trials < 1) throw std::invalid_argument("GrowingLegsConfig: need trials >= 1");
    if (k < 1) throw std::invalid_argument("GrowingLegsConfig: need k >= 1");
    const double ln_n = std::log(static_cast<double>(n_legs));
    if (enforce_regime && static_cast<double>(L) > static_cast<double>(n_legs) / ln_n)
      throw std::invalid_argument(
          "GrowingLegsConfig: L > N/ln N; set enforce_regime = false to explore anyway");
  }

  std::uint64_t horizon() const {
    if (horizon_override != 0) return horizon_override;
    const double b = c * f_value() * static_cast<double>(L) *
                     static_cast<double>(n_legs) * std::log(static_cast<double>(n_legs));
    const double n = b * b;
    if (!(n >= 1.0)) throw std::invalid_argument("GrowingLegsConfig: horizon below one step");
    if (n >= 9.0e18) throw std::invalid_argument("GrowingLegsConfig: horizon overflows");
    return static_cast<std::uint64_t>(n);
  }

  // Limit value the experiment is compared against: P(|Z| > 1/c) in the
  // constant regime, 1 for f up, 0 for f down (same for the A-event variant).
  double reference() const {
    switch (f_mode) {
      case FScaleMode::constant: return normal_two_sided_tail(1.0 / c);
      case FScaleMode::log_up: return 1.0;
      case FScaleMode::log_down: return 0.0;
    }
    throw std::logic_error("GrowingLegsConfig: bad f_mode");
  }
};

namespace detail {

// One exact trial of the per-leg visit counts at height L up to time n for
// the uniform-weight spider walk, realized without simulating individual
// steps: the radial walk is an excursion skeleton (anchor times from the
// first-return law, short/tall split and within-excursion visit gaps from the
// absorbing-strip laws), and each excursion that reaches L draws a uniform
// leg. The verdict depends only on which legs receive L-visits and when,
// which this reduction reproduces in exact distribution.
inline MinVisitFlags min_visit_trial(std::uint32_t n_legs, std::uint32_t L, std::uint64_t n,
                                     std::uint32_t k, const FirstReturnTable& frt,
                                     const StripSampler* strip, RngStream& rng) {
  std::vector<std::uint32_t> visits(n_legs, 0);
  std::uint32_t legs_at_1 = 0;
  std::uint32_t legs_at_k = 0;
  std::uint64_t t = 0;  // current anchor (return-time) candidate
  while (t < n && legs_at_k < n_legs) {
    const bool tall = (L == 1) || rng.next_double() < strip->p_tall();
    if (!tall) {
      // Short excursion: one step out plus the conditional absorption time.
      t += 1 + static_cast<std::uint64_t>(strip->sample_short_time(rng));
      continue;
    }
    const std::uint32_t leg = static_cast<std::uint32_t>(rng.next_below(n_legs));
    // Time of the first L-visit of this excursion.
    std::uint64_t time =
        t + (L == 1 ? 1 : 1 + static_cast<std::uint64_t>(strip->sample_reach_time(rng)));
    std::uint64_t t_end = 0;
    bool returned = false;
    while (true) {
      if (time > n) break;  // nothing later in this excursion can count
      if (visits[leg] < k) {
        ++visits[leg];
        if (visits[leg] == 1) ++legs_at_1;
        if (visits[leg] == k) ++legs_at_k;
      }
      if (rng.next_bernoulli(0.5)) {
        // Up step; the walk returns to L after a line first-passage time.
        const std::int64_t gap = frt.sample_t10(rng, std::int64_t{1} << 60);
        if (gap == kCensored) break;  // beyond any horizon used here
        time += 1 + static_cast<std::uint64_t>(gap);
      } else if (L == 1) {
        t_end = time + 1;  // down step from height 1 ends the excursion
        returned = true;
        break;
      } else {
        const auto from_top = strip->sample_from_top(rng);
        if (from_top.to_L) {
          time += 1 + static_cast<std::uint64_t>(from_top.time);
        } else {
          t_end = time + 1 + static_cast<std::uint64_t>(from_top.time);
          returned = true;
          break;
        }
      }
    }
    if (!returned) break;  // excursion passes the horizon: no further anchors < n
    t = t_end;
  }
  return {legs_at_1 == n_legs, legs_at_k == n_legs};
}

}  // namespace detail

struct GrowingLegsEstimate {
  std::uint64_t horizon = 0;
  std::uint64_t trials = 0;
  std::uint64_t m_successes = 0;
  std::uint64_t a_successes = 0;
  double m_estimate = 0.0;
  double a_estimate = 0.0;
  ProportionCi m_ci;
  ProportionCi a_ci;
  double reference = 0.0;
};

// Monte Carlo estimate of P(M(n,L)) and P(A(n,L,k)) at the configured horizon
// via the excursion-skeleton reduction. Requires uniform weights; trial
// verdicts use per-trial derived substreams of `parent`.
inline GrowingLegsEstimate estimate_M_probability(const GrowingLegsConfig& cfg,
                                                  const LegWeights& weights,
                                                  RngStream& parent) {
  cfg.validate();
  if (weights.size() != cfg.n_legs || !weights.is_uniform())
    throw std::invalid_argument("estimate_M_probability: weights must be uniform over N legs");
  const std::uint64_t n = cfg.horizon();
  const FirstReturnTable frt;
  std::unique_ptr<StripSampler> strip;
  if (cfg.L >= 2) strip = std::make_unique<StripSampler>(cfg.L);

  GrowingLegsEstimate out;
  out.horizon = n;
  out.trials = cfg.trials;
  out.reference = cfg.reference();
  for (std::uint64_t trial = 0; trial < cfg.trials; ++trial) {
    RngStream sub = parent.substream(trial);
    const MinVisitFlags flags =
        detail::min_visit_trial(cfg.n_legs, cfg.L, n, cfg.k, frt, strip.get(), sub);
    out.m_successes += flags.m_event ? 1 : 0;
    out.a_successes += flags.a_event ? 1 : 0;
  }
  out.m_estimate = static_cast<double>(out.m_successes) / static_cast<double>(cfg.trials);
  out.a_estimate = static_cast<double>(out.a_successes) / static_cast<double>(cfg.trials);
  out.m_ci = proportion_ci(out.m_successes, cfg.trials);
  out.a_ci = proportion_ci(out.a_successes, cfg.trials);
  return out;
}

// Cross-check estimator that simulates the spider chain step by step (only
// usable at small horizons). Same statistics and stream layout.
inline GrowingLegsEstimate estimate_M_probability_direct(const GrowingLegsConfig& cfg,
                                                         const LegWeights& weights,
                                                         RngStream& parent) {
  cfg.validate();
  if (weights.size() != cfg.n_legs || !weights.is_uniform())
    throw std::invalid_argument(
        "estimate_M_probability_direct: weights must be uniform over N legs");
  const std::uint64_t n = cfg.horizon();

  GrowingLegsEstimate out;
  out.horizon = n;
  out.trials = cfg.trials;
  out.reference = cfg.reference();
  std::vector<std::uint32_t> visits(cfg.n_legs);
  for (std::uint64_t trial = 0; trial < cfg.trials; ++trial) {
    RngStream sub = parent.substream(trial);
    std::fill(visits.begin(), visits.end(), 0);
    std::uint32_t legs_at_1 = 0, legs_at_k = 0;
    SpiderState s = SpiderState::origin();
    for (std::uint64_t i = 0; i < n && legs_at_k < cfg.n_legs; ++i) {
      s = step(s, weights, sub);
      if (s.radius() != cfg.L) continue;
      const std::uint32_t leg = s.leg_index_or_zero() - 1;
      if (visits[leg] < cfg.k) {
        ++visits[leg];
        if (visits[leg] == 1) ++legs_at_1;
        if (visits[leg] == cfg.k) ++legs_at_k;
      }
    }
    out.m_successes += legs_at_1 == cfg.n_legs ? 1 : 0;
    out.a_successes += legs_at_k == cfg.n_legs ? 1 : 0;
  }
  out.m_estimate = static_cast<double>(out.m_successes) / static_cast<double>(cfg.trials);
  out.a_estimate = static_cast<double>(out.a_successes) / static_cast<double>(cfg.trials);
  out.m_ci = proportion_ci(out.m_successes, cfg.trials);
  out.a_ci = proportion_ci(out.a_successes, cfg.trials);
  return out;
}

// ---------------------------------------------------------------------------
// Coupon-collector urns.
// ---------------------------------------------------------------------------

// Number of balls for the classical threshold regime:
// floor(N ln N + (m-1) N lnln N + N x), clamped at zero.
inline std::uint64_t coupon_balls(std::uint32_t n_urns, std::uint32_t m, double x) {
  if (n_urns < 2) throw std::invalid_argument("coupon_balls: need N >= 2");
  if (m < 1) throw std::invalid_argument("coupon_balls: need m >= 1");
  if (m >= 2 && n_urns < 3)
    throw std::invalid_argument("coupon_balls: lnln N needs N >= 3 when m >= 2");
  const double nn = static_cast<double>(n_urns);
  const double v = nn * std::log(nn) +
                   (m >= 2 ? (m - 1) * nn * std::log(std::log(nn)) : 0.0) + nn * x;
  if (v <= 0.0) return 0;
  if (v >= 9.0e18) throw std::invalid_argument("coupon_balls: ball count overflows");
  return static_cast<std::uint64_t>(v);
}

// Limit of the coverage probability in that regime: exp(-e^{-x}/(m-1)!).
inline double erdos_renyi_limit(std::uint32_t m, double x) {
  if (m < 1) throw std::invalid_argument("erdos_renyi_limit: need m >= 1");
  return std::exp(-std::exp(-x) / std::tgamma(static_cast<double>(m)));
}

struct CouponResult {
  std::uint64_t successes = 0;
  std::uint64_t trials = 0;
  double estimate = 0.0;
  ProportionCi ci;
};

// Direct multinomial urn simulation of P(every urn holds >= m balls).
inline CouponResult coupon_simulate(std::uint32_t n_urns, std::uint64_t balls, std::uint32_t m,
                                    std::uint64_t trials, RngStream& parent) {
  if (n_urns < 1 || m < 1 || trials < 1)
    throw std::invalid_argument("coupon_simulate: all arguments must be positive");
  if (m > 200) throw std::invalid_argument("coupon_simulate: m too large");
  CouponResult out;
  out.trials = trials;
  std::vector<std::uint8_t> counts(n_urns);
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    RngStream sub = parent.substream(trial);
    std::fill(counts.begin(), counts.end(), 0);
    std::uint32_t below_m = n_urns;
    for (std::uint64_t b = 0; b < balls && below_m > 0; ++b) {
      const std::uint64_t u = sub.next_below(n_urns);
      if (counts[u] < m && ++counts[u] == m) --below_m;
    }
    out.successes += below_m == 0 ? 1 : 0;
  }
  out.estimate = static_cast<double>(out.successes) / static_cast<double>(trials);
  out.ci = proportion_ci(out.successes, trials);
  return out;
}

namespace detail {
inline double log_choose(double n, double k) {
  return std::lgamma(n + 1.0) - std::lgamma(k + 1.0) - std::lgamma(n - k + 1.0);
}
}  // namespace detail

// Exact finite-N coverage probability P(every urn >= m balls) for m in {1,2}
// by inclusion-exclusion over deficient urns (double precision; the
// alternating terms stay O(1) in this regime). Serves as the finite-size
// reference against which the asymptotic limit is compared.
inline double coupon_exact_coverage(std::uint32_t n_urns, std::uint64_t balls, std::uint32_t m) {
  if (n_urns < 1) throw std::invalid_argument("coupon_exact_coverage: need N >= 1");
  if (m != 1 && m != 2)
    throw std::invalid_argument("coupon_exact_coverage: implemented for m in {1,2}");
  if (balls < static_cast<std::uint64_t>(n_urns) * m) return 0.0;  // pigeonhole
  if (n_urns == 1) return 1.0;

  const double N = static_cast<double>(n_urns);
  const double B = static_cast<double>(balls);
  double acc = 0.0;
  for (std::uint32_t s = 0; s <= n_urns; ++s) {
    // P(each of s specified urns holds <= m-1 balls), in log space.
    double log_inner;
    if (s == n_urns && m == 1) {
      log_inner = -std::numeric_limits<double>::infinity();  // (1 - s/N)^B with B >= 1
    } else if (m == 1) {
      log_inner = B * std::log1p(-static_cast<double>(s) / N);
    } else {
      // Sum over how many of the s urns hold exactly one ball.
      const double log_rest = std::log1p(-static_cast<double>(s) / N);
      double max_term = -std::numeric_limits<double>::infinity();
      std::vector<double> terms;
      const std::uint64_t t_hi = std::min<std::uint64_t>(s, balls);
      terms.reserve(t_hi + 1);
      for (std::uint64_t t = 0; t <= t_hi; ++t) {
        const double bt = B - static_cast<double>(t);
        double lt = detail::log_choose(static_cast<double>(s), static_cast<double>(t)) +
                    (std::lgamma(B + 1.0) - std::lgamma(bt + 1.0)) -
                    static_cast<double>(t) * std::log(N);
        lt += bt == 0.0 ? 0.0 : bt * log_rest;
        terms.push_back(lt);
        max_term = std::max(max_term, lt);
        if (lt < max_term - 60.0 && t > balls / static_cast<std::uint64_t>(n_urns) + 4) break;
      }
      if (max_term == -std::numeric_limits<double>::infinity()) {
        log_inner = max_term;  // every placement is impossible (s = N, balls > s)
      } else {
        double inner = 0.0;
        for (double lt : terms) inner += std::exp(lt - max_term);
        log_inner = max_term + std::log(inner);
      }
    }
    const double term = std::exp(detail::log_choose(N, static_cast<double>(s)) + log_inner);
    acc += (s % 2 == 0) ? term : -term;
    if (s > 8 && term < 1e-18) break;
  }
  return std::clamp(acc, 0.0, 1.0);
}

// ---------------------------------------------------------------------------
// Hoeffding-type envelope checks.
// ---------------------------------------------------------------------------

// Two-sided Hoeffding bound 2 exp(-2 k x^2) for a mean-deviation of x over k
// [0,1]-valued samples.
inline double hoeffding_bound(std::uint64_t k, double x) {
  if (k < 1) throw std::invalid_argument("hoeffding_bound: need k >= 1");
  if (!(x > 0.0)) throw std::invalid_argument("hoeffding_bound: need x > 0");
  return 2.0 * std::exp(-2.0 * static_cast<double>(k) * x * x);
}

struct DeviationCheckResult {
  std::uint64_t exceed_count = 0;
  std::uint64_t trials = 0;
  double exceed_estimate = 0.0;
  double bound = 0.0;
  double threshold = 0.0;  // i * x
  double sigma = 0.0;      // binomial MC std error of the estimate
};

// Empirical tail P(|zeta(L, rho(i)) - i/L| >= i x) against the Hoeffding
// bound with k = i. The count of tall excursions among the first i is an
// exact sum of i independent Bernoulli(1/L) indicators, which is what the
// trial draws.
inline DeviationCheckResult deviation_check(std::uint32_t L, std::uint32_t i, double x,
                                            std::uint64_t trials, RngStream& parent) {
  if (L < 1 || i < 1 || trials < 1)
    throw std::invalid_argument("deviation_check: all arguments must be positive");
  if (!(x > 0.0)) throw std::invalid_argument("deviation_check: need x > 0");
  DeviationCheckResult out;
  out.trials = trials;
  out.threshold = static_cast<double>(i) * x;
  out.bound = hoeffding_bound(i, x);
  const double mean = static_cast<double>(i) / static_cast<double>(L);
  const double p = 1.0 / static_cast<double>(L);
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    RngStream sub = parent.substream(trial);
    std::uint32_t tall = 0;
    for (std::uint32_t j = 0; j < i; ++j) tall += sub.next_bernoulli(p) ? 1 : 0;
    if (std::fabs(static_cast<double>(tall) - mean) >= out.threshold) ++out.exceed_count;
  }
  out.exceed_estimate = static_cast<double>(out.exceed_count) / static_cast<double>(trials);
  out.sigma = std::sqrt(out.exceed_estimate * (1.0 - out.exceed_estimate) /
                        static_cast<double>(trials));
  return out;
}

struct TallDeviationResult {
  std::uint64_t exceed_count = 0;
  std::uint64_t trials = 0;
  double exceed_estimate = 0.0;
  double bound = 0.0;      // 2/n
  double threshold = 0.0;  // 4 n^{1/4} (ln n)^{3/4}
  double sigma = 0.0;
};

// Empirical check of the composite bound
//   P(|zeta(L,n) - xi(0,n)/L| >= 4 n^{1/4} (ln n)^{3/4}) <= 2/n
// using the exact excursion-skeleton counts.
inline TallDeviationResult tall_deviation_check(std::uint32_t L, std::uint64_t n,
                                                std::uint64_t trials, RngStream& parent) {
  if (L < 1 || trials < 1)
    throw std::invalid_argument("tall_deviation_check: all arguments must be positive");
  if (n < 3) throw std::invalid_argument("tall_deviation_check: need n >= 3");
  TallDeviationResult out;
  out.trials = trials;
  const double nn = static_cast<double>(n);
  out.threshold = 4.0 * std::pow(nn, 0.25) * std::pow(std::log(nn), 0.75);
  out.bound = 2.0 / nn;
  const FirstReturnTable frt;
  const ExcursionSampler sampler(L, frt);
  for (std::uint64_t trial = 0; trial < trials; ++trial) {
    RngStream sub = parent.substream(trial);
    const StructuralCounts counts =
        simulate_excursion_counts(static_cast<std::int64_t>(n), sampler, sub);
    const double gap = std::fabs(static_cast<double>(counts.zeta) -
                                 static_cast<double>(counts.xi0) / static_cast<double>(L));
    if (gap >= out.threshold) ++out.exceed_count;
  }
  out.exceed_estimate = static_cast<double>(out.exceed_count) / static_cast<double>(trials);
  out.sigma = std::sqrt(out.exceed_estimate * (1.0 - out.exceed_estimate) /
                        static_cast<double>(trials));
  return out;
}

}  // namespace spider
