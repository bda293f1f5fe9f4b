#pragma once

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <utility>
#include <vector>

#include <boost/multiprecision/cpp_int.hpp>

#include "spider/core.hpp"

namespace spider {

using ExactRational = boost::multiprecision::cpp_rational;
using ExactInt = boost::multiprecision::cpp_int;

inline double to_double(const ExactRational& q) { return q.template convert_to<double>(); }

// A probability carried in both linear and log form. log_form is -inf at 0.
struct ProbValue {
  double linear = 0.0;
  double log_form = -std::numeric_limits<double>::infinity();

  static ProbValue zero() { return {}; }
  static ProbValue from_log(double lg) { return {std::exp(lg), lg}; }
  static ProbValue from_linear(double p) {
    return {p, p > 0.0 ? std::log(p) : -std::numeric_limits<double>::infinity()};
  }
};

namespace detail {

inline ExactInt binomial_exact(std::int64_t n, std::int64_t k) {
  if (k < 0 || k > n) return 0;
  if (k > n - k) k = n - k;
  ExactInt result = 1;
  for (std::int64_t i = 1; i <= k; ++i) {
    result *= (n - k + i);
    result /= i;
  }
  return result;
}

inline double log_binomial(std::int64_t n, std::int64_t k) {
  return std::lgamma(static_cast<double>(n) + 1.0) -
         std::lgamma(static_cast<double>(k) + 1.0) -
         std::lgamma(static_cast<double>(n - k) + 1.0);
}

}  // namespace detail

// P(S(2n) = 2k) for a simple random walk: C(2n, n+k) / 2^(2n).
// Symmetric in k; zero for |k| > n. Exact rationals for moderate n, log-space
// (lgamma) beyond, with both representations agreeing where they overlap.
inline ExactRational binom_walk_prob_exact(std::int64_t n, std::int64_t k) {
  if (n < 0) throw std::invalid_argument("binom_walk_prob_exact: n must be >= 0");
  if (k < 0) k = -k;
  if (k > n) return 0;
  ExactInt den = 1;
  den <<= 2 * n;
  return ExactRational(detail::binomial_exact(2 * n, n + k), den);
}

inline ProbValue binom_walk_prob(std::int64_t n, std::int64_t k) {
  if (n < 0) throw std::invalid_argument("binom_walk_prob: n must be >= 0");
  if (k < 0) k = -k;
  if (k > n) return ProbValue::zero();
  const double lg = detail::log_binomial(2 * n, n + k) -
                    2.0 * static_cast<double>(n) * std::log(2.0);
  if (n <= 500) {
    const double linear = to_double(binom_walk_prob_exact(n, k));
    return {linear, lg};
  }
  return ProbValue::from_log(lg);
}

// P(S(1) > 0, ..., S(2n-1) > 0, S(2n) = 2k) = (k/n) * P(S(2n) = 2k): the
// probability that a bridge to 2k stays strictly positive (ballot problem).
inline ExactRational ballot_prob_exact(std::int64_t n, std::int64_t k) {
  if (n < 1) throw std::invalid_argument("ballot_prob_exact: n must be >= 1");
  if (k < 1 || k > n) throw std::invalid_argument("ballot_prob_exact: need 1 <= k <= n");
  return ExactRational(k, n) * binom_walk_prob_exact(n, k);
}

inline ProbValue ballot_prob(std::int64_t n, std::int64_t k) {
  if (n < 1) throw std::invalid_argument("ballot_prob: n must be >= 1");
  if (k < 1 || k > n) throw std::invalid_argument("ballot_prob: need 1 <= k <= n");
  const ProbValue base = binom_walk_prob(n, k);
  const double ratio = static_cast<double>(k) / static_cast<double>(n);
  return {base.linear * ratio, base.log_form + std::log(ratio)};
}

// --- Closed-form 2n-step transition probabilities of the spider walk. ---
// Heights are even sites written as 2j / 2i with half-heights j, i >= 1.

// origin -> (2j, leg with weight p): 2p * P(S(2n) = 2j).
inline ProbValue trans_from_origin(std::int64_t n, std::int64_t j, double p) {
  if (n < 1) throw std::invalid_argument("trans_from_origin: n must be >= 1");
  if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("trans_from_origin: bad weight");
  if (j < 1 || j > n) return ProbValue::zero();
  const ProbValue base = binom_walk_prob(n, j);
  return ProbValue::from_linear(2.0 * p * base.linear);
}

inline ExactRational trans_from_origin_exact(std::int64_t n, std::int64_t j,
                                             const ExactRational& p) {
  if (n < 1) throw std::invalid_argument("trans_from_origin_exact: n must be >= 1");
  if (j < 1 || j > n) return 0;
  return 2 * p * binom_walk_prob_exact(n, j);
}

// (2j, leg a) -> (2i, leg b != a), where p_target is the weight of leg b:
// 2 * p_target * P(S(2n) = 2(j+i)). Zero when j + i > n (the origin cannot be
// reached and re-left in time). Symmetric in (j, i).
inline ProbValue trans_cross_leg(std::int64_t n, std::int64_t j, std::int64_t i,
                                 double p_target) {
  if (n < 1) throw std::invalid_argument("trans_cross_leg: n must be >= 1");
  if (j < 1 || i < 1) throw std::invalid_argument("trans_cross_leg: half-heights must be >= 1");
  if (!(p_target >= 0.0 && p_target <= 1.0))
    throw std::invalid_argument("trans_cross_leg: bad weight");
  if (j + i > n) return ProbValue::zero();
  const ProbValue base = binom_walk_prob(n, j + i);
  return ProbValue::from_linear(2.0 * p_target * base.linear);
}

inline ExactRational trans_cross_leg_exact(std::int64_t n, std::int64_t j, std::int64_t i,
                                           const ExactRational& p_target) {
  if (n < 1) throw std::invalid_argument("trans_cross_leg_exact: n must be >= 1");
  if (j < 1 || i < 1)
    throw std::invalid_argument("trans_cross_leg_exact: half-heights must be >= 1");
  if (j + i > n) return 0;
  return 2 * p_target * binom_walk_prob_exact(n, j + i);
}

// (2j, leg) -> (2i, same leg), where p_leg is that leg's weight:
// P(S(2n) = 2(j-i)) - (1 - 2*p_leg) * P(S(2n) = 2(j+i)).
inline ProbValue trans_same_leg(std::int64_t n, std::int64_t j, std::int64_t i, double p_leg) {
  if (n < 1) throw std::invalid_argument("trans_same_leg: n must be >= 1");
  if (j < 1 || i < 1) throw std::invalid_argument("trans_same_leg: half-heights must be >= 1");
  if (!(p_leg >= 0.0 && p_leg <= 1.0)) throw std::invalid_argument("trans_same_leg: bad weight");
  const double direct = binom_walk_prob(n, j - i).linear;
  const double through = binom_walk_prob(n, j + i).linear;
  return ProbValue::from_linear(direct - (1.0 - 2.0 * p_leg) * through);
}

inline ExactRational trans_same_leg_exact(std::int64_t n, std::int64_t j, std::int64_t i,
                                          const ExactRational& p_leg) {
  if (n < 1) throw std::invalid_argument("trans_same_leg_exact: n must be >= 1");
  if (j < 1 || i < 1)
    throw std::invalid_argument("trans_same_leg_exact: half-heights must be >= 1");
  return binom_walk_prob_exact(n, j - i) -
         (1 - 2 * p_leg) * binom_walk_prob_exact(n, j + i);
}

// --- Brute-force oracle: exact n-step transition probabilities by dynamic ---
// --- programming over the chain itself (sum over all admissible paths).   ---

namespace detail {

struct StateKey {
  std::uint32_t r;
  std::uint32_t leg;
  friend bool operator<(const StateKey& a, const StateKey& b) {
    return a.r != b.r ? a.r < b.r : a.leg < b.leg;
  }
};

inline StateKey key_of(const SpiderState& s) {
  return {s.radius(), s.leg_index_or_zero()};
}

}  // namespace detail

// Distribution after n_steps single steps from `start` under exact rational
// weights. Guarded at n_steps <= 14 — this is an oracle, not a solver.
inline std::map<detail::StateKey, ExactRational> brute_force_distribution(
    int n_steps, const SpiderState& start, const std::vector<ExactRational>& weights) {
  if (n_steps < 0 || n_steps > 14)
    throw std::invalid_argument("brute_force_distribution: n_steps must be in [0, 14]");
  if (weights.empty()) throw std::invalid_argument("brute_force_distribution: no weights");
  ExactRational total = 0;
  for (const auto& w : weights) {
    if (w < 0) throw std::invalid_argument("brute_force_distribution: negative weight");
    total += w;
  }
  if (total != 1) throw std::invalid_argument("brute_force_distribution: weights must sum to 1");
  if (!start.is_origin() && start.leg().index() > weights.size())
    throw std::invalid_argument("brute_force_distribution: start leg out of range");

  const ExactRational half(1, 2);
  std::map<detail::StateKey, ExactRational> dist;
  dist[detail::key_of(start)] = 1;
  for (int s = 0; s < n_steps; ++s) {
    std::map<detail::StateKey, ExactRational> next;
    for (const auto& [state, prob] : dist) {
      if (state.r == 0) {
        for (std::uint32_t leg = 1; leg <= weights.size(); ++leg) {
          if (weights[leg - 1] == 0) continue;
          next[{1, leg}] += prob * weights[leg - 1];
        }
      } else {
        next[{state.r + 1, state.leg}] += prob * half;
        if (state.r == 1)
          next[{0, 0}] += prob * half;
        else
          next[{state.r - 1, state.leg}] += prob * half;
      }
    }
    dist = std::move(next);
  }
  return dist;
}

// Exact probability of start -> end in n_steps steps, by path enumeration.
inline ExactRational brute_force_transition(int n_steps, const SpiderState& start,
                                            const SpiderState& end,
                                            const std::vector<ExactRational>& weights) {
  const auto dist = brute_force_distribution(n_steps, start, weights);
  const auto it = dist.find(detail::key_of(end));
  return it == dist.end() ? ExactRational(0) : it->second;
}

// --- Limit densities on the Brownian spider (time t > 0, radial x, y >= 0). ---

// Density of being at height y on a weight-p leg at time t, started at the
// origin: (2p / sqrt(2*pi*t)) * exp(-y^2 / (2t)).
inline double density_origin(double t, double y, double p) {
  if (!(t > 0.0)) throw std::invalid_argument("density_origin: t must be > 0");
  if (y < 0.0) throw std::invalid_argument("density_origin: y must be >= 0");
  return 2.0 * p / std::sqrt(2.0 * M_PI * t) * std::exp(-y * y / (2.0 * t));
}

// Started at height x on one leg, density at height y on a different leg of
// weight p_target: (2*p_target / sqrt(2*pi*t)) * exp(-(x+y)^2 / (2t)).
inline double density_cross(double t, double x, double y, double p_target) {
  if (!(t > 0.0)) throw std::invalid_argument("density_cross: t must be > 0");
  if (x < 0.0 || y < 0.0) throw std::invalid_argument("density_cross: heights must be >= 0");
  const double s = x + y;
  return 2.0 * p_target / std::sqrt(2.0 * M_PI * t) * std::exp(-s * s / (2.0 * t));
}

// Same-leg density: heat kernel difference
// (1/sqrt(2*pi*t)) * (exp(-(x-y)^2/2t) - (1-2p) * exp(-(x+y)^2/2t)).
inline double density_same(double t, double x, double y, double p_leg) {
  if (!(t > 0.0)) throw std::invalid_argument("density_same: t must be > 0");
  if (x < 0.0 || y < 0.0) throw std::invalid_argument("density_same: heights must be >= 0");
  const double d = x - y, s = x + y;
  return (std::exp(-d * d / (2.0 * t)) - (1.0 - 2.0 * p_leg) * std::exp(-s * s / (2.0 * t))) /
         std::sqrt(2.0 * M_PI * t);
}

// Lattice-normalized forms: the limits of sqrt(n) * (transition probability
// over 2*floor(n*t) steps to the site at radius 2*floor(y*sqrt(n))). Two walk
// steps advance variance by 2 while the radius grid has span 2, so the limit
// equals the continuum density evaluated at time t/2:
//   sqrt(n) * P -> (2p / sqrt(pi t)) * exp(-y^2 / t)   (origin case).
inline double lattice_density_origin(double t, double y, double p) {
  return density_origin(0.5 * t, y, p);
}
inline double lattice_density_cross(double t, double x, double y, double p_target) {
  return density_cross(0.5 * t, x, y, p_target);
}
inline double lattice_density_same(double t, double x, double y, double p_leg) {
  return density_same(0.5 * t, x, y, p_leg);
}

}  // namespace spider
