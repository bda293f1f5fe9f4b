#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <stdexcept>
#include <vector>

#include "spider/rng.hpp"

namespace spider {

// Sentinel for "exceeds the requested cap" in duration samplers.
inline constexpr std::int64_t kCensored = std::numeric_limits<std::int64_t>::max();

// ---------------------------------------------------------------------------
// First-passage time from 1 to 0 for the simple symmetric walk.
//
// T10 takes odd values 2j-1 (j >= 1) with survival function
//   q_j = P(T10 > 2j-1) = C(2j, j) / 4^j,
// (q_0 = 1, q_1 = 1/2, ...; q_j ~ 1/sqrt(pi j)). A first return to 0 from 0
// is D = 1 + T10 (even values >= 2). Sampling is by inversion: T10 = 2j-1 for
// the unique j with q_j <= u < q_{j-1}. The class tabulates q_j up to a fixed
// size with a bucket guide for O(1) average lookup, and inverts the analytic
// (asymptotic-series) form beyond the table.
// ---------------------------------------------------------------------------
class FirstReturnTable {
 public:
  explicit FirstReturnTable(std::size_t table_size = std::size_t{1} << 20)
      : q_(std::max<std::size_t>(table_size, 16)) {
    q_[0] = 1.0;
    for (std::size_t j = 1; j < q_.size(); ++j)
      q_[j] = q_[j - 1] * (2.0 * static_cast<double>(j) - 1.0) / (2.0 * static_cast<double>(j));
    build_guide();
  }

  // P(T10 > 2j-1); valid for any j >= 0. Beyond the table the asymptotic
  // series for the central binomial ratio is used: a log-gamma difference
  // would cancel catastrophically there (the lgamma values grow like
  // 2j ln(2j) while the result's log stays O(ln j), so for j beyond ~10^6
  // the 1-ulp lgamma errors already swamp the answer). The series' relative
  // error is ~1.4e-9 at j = 16 (the smallest possible table end) and decays
  // like j^-5, reaching ~1e-33 at the default table end j = 2^20.
  double survival_q(std::int64_t j) const {
    if (j < 0) throw std::invalid_argument("survival_q: j must be >= 0");
    if (static_cast<std::size_t>(j) < q_.size()) return q_[static_cast<std::size_t>(j)];
    const double jd = static_cast<double>(j);
    const double c = 1.0 - 1.0 / (8.0 * jd) + 1.0 / (128.0 * jd * jd) +
                     5.0 / (1024.0 * jd * jd * jd) -
                     21.0 / (32768.0 * jd * jd * jd * jd);
    return c / std::sqrt(M_PI * jd);
  }

  // First-passage time from 1 to 0, censored at cap: returns kCensored when
  // the drawn value exceeds cap. One uniform draw per call. A cap at or above
  // 2^60 behaves as "uncapped" up to a truncation at T ~ 1.15e18 carrying
  // probability < 3e-10 per draw (far beyond any simulated horizon).
  std::int64_t sample_t10(RngStream& rng, std::int64_t cap) const {
    const double u = rng.next_double_pos();
    if (cap < 1) return kCensored;
    const std::int64_t j_cap = cap >= (std::int64_t{1} << 60)
                                   ? (std::int64_t{1} << 59)
                                   : (cap + 1) / 2;  // T10 = 2j-1 <= cap <=> j <= j_cap
    if (u < survival_q(j_cap)) return kCensored;
    return 2 * invert(u, j_cap) - 1;
  }

  // First return to 0 from 0 (= 1 + T10), censored at cap.
  std::int64_t sample_first_return(RngStream& rng, std::int64_t cap) const {
    const std::int64_t t = sample_t10(rng, cap == kCensored ? cap : cap - 1);
    return t == kCensored ? kCensored : t + 1;
  }

  std::size_t table_size() const { return q_.size(); }

 private:
  // Smallest j >= 1 with q_j <= u, given that such j <= j_hi_bound exists.
  std::int64_t invert(double u, std::int64_t j_hi_bound) const {
    if (u < q_.back()) {
      // Tail: binary search the analytic form. q_j <= 1/sqrt(pi j) gives the
      // upper bracket j <= 1/(pi u^2) (+ slack).
      std::int64_t lo = static_cast<std::int64_t>(q_.size()) - 1;  // q_[lo] > u
      const double approx = 1.0 / (M_PI * u * u);
      std::int64_t hi = j_hi_bound;
      if (approx + 16.0 < static_cast<double>(hi))
        hi = static_cast<std::int64_t>(approx) + 16;
      while (lo + 1 < hi) {
        const std::int64_t mid = lo + (hi - lo) / 2;
        if (survival_q(mid) <= u)
          hi = mid;
        else
          lo = mid;
      }
      return hi;
    }
    const auto b = std::min<std::size_t>(
        kGuideSize - 1, static_cast<std::size_t>(u * static_cast<double>(kGuideSize)));
    std::size_t lo = guide_lo_[b], hi = guide_hi_[b];
    while (lo < hi) {
      const std::size_t mid = lo + (hi - lo) / 2;
      if (q_[mid] <= u)
        hi = mid;
      else
        lo = mid + 1;
    }
    return static_cast<std::int64_t>(lo);
  }

  void build_guide() {
    guide_lo_.assign(kGuideSize, 1);
    guide_hi_.assign(kGuideSize, static_cast<std::uint32_t>(q_.size() - 1));
    // For bucket b (u in [b/G, (b+1)/G)): the answer j lies in
    // [min j: q_j <= (b+1)/G, min j: q_j <= b/G], clamped to the table.
    // q_ is decreasing, so both endpoints are found by one backward sweep.
    std::size_t j = 1;
    // first_leq[b] = min j with q_j <= b/G (table range only).
    std::vector<std::uint32_t> first_leq(kGuideSize + 1,
                                         static_cast<std::uint32_t>(q_.size() - 1));
    for (std::size_t b = kGuideSize; b > 0; --b) {
      const double threshold = static_cast<double>(b) / static_cast<double>(kGuideSize);
      while (j < q_.size() && q_[j] > threshold) ++j;
      if (j >= q_.size()) {
        // q never drops to this threshold inside the table: clamp to the end;
        // (only possible for thresholds below q_.back(), handled by the tail).
        for (std::size_t bb = b; bb > 0; --bb) first_leq[bb] = static_cast<std::uint32_t>(q_.size() - 1);
        break;
      }
      first_leq[b] = static_cast<std::uint32_t>(j);
    }
    first_leq[0] = static_cast<std::uint32_t>(q_.size() - 1);
    for (std::size_t b = 0; b < kGuideSize; ++b) {
      guide_lo_[b] = std::max<std::uint32_t>(1, first_leq[b + 1]);
      guide_hi_[b] = first_leq[b];
    }
  }

  static constexpr std::size_t kGuideSize = 4096;
  std::vector<double> q_;
  std::vector<std::uint32_t> guide_lo_, guide_hi_;
};

// ---------------------------------------------------------------------------
// Absorption laws for the walk on the strip {0, 1, ..., L} with absorbing
// barriers at 0 and L, from the two start states the excursion machinery
// needs: 1 (fresh excursion) and L-1 (just stepped down from L).
//
// Laws are tabulated by evolving the probability vector over interior states
// until the unabsorbed residual falls below 1e-18 (geometric decay at rate
// cos(pi/L) per step), giving absorption-time CDFs split by exit side.
// ---------------------------------------------------------------------------
class StripSampler {
 public:
  explicit StripSampler(std::uint32_t L) : L_(L) {
    if (L < 2 || L > 64)
      throw std::invalid_argument("StripSampler: L must be in [2, 64]");
    from_1_ = build(1);
    from_top_ = build(L - 1);
    // Gambler's-ruin cross-check: P(absorb at L | start 1) = 1/L.
    const double expect = 1.0 / static_cast<double>(L);
    if (std::abs(from_1_.mass_at_L - expect) > 1e-12)
      throw std::logic_error("StripSampler: absorption mass check failed");
  }

  std::uint32_t L() const { return L_; }

  // P(hit L before 0 | start at 1): exactly 1/L (table-verified).
  double p_tall() const { return from_1_.mass_at_L; }

  // Time to absorption at 0 from state 1, conditioned on absorbing at 0.
  std::int64_t sample_short_time(RngStream& rng) const {
    return invert(from_1_.cdf_at_0, rng.next_double_pos() * from_1_.mass_at_0);
  }

  // Time to absorption at L from state 1, conditioned on absorbing at L.
  std::int64_t sample_reach_time(RngStream& rng) const {
    return invert(from_1_.cdf_at_L, rng.next_double_pos() * from_1_.mass_at_L);
  }

  struct FromTop {
    bool to_L = false;       // true: re-reached L; false: excursion ended at 0
    std::int64_t time = 0;   // steps from state L-1 to the absorption
  };

  // Absorption from state L-1 (the state after stepping down from L):
  // re-reaches L with probability (L-1)/L, else ends the excursion at 0.
  FromTop sample_from_top(RngStream& rng) const {
    FromTop out;
    out.to_L = rng.next_bernoulli(from_top_.mass_at_L);
    out.time = out.to_L
                   ? invert(from_top_.cdf_at_L, rng.next_double_pos() * from_top_.mass_at_L)
                   : invert(from_top_.cdf_at_0, rng.next_double_pos() * from_top_.mass_at_0);
    return out;
  }

  double mass_from_top_to_L() const { return from_top_.mass_at_L; }

 private:
  struct Law {
    // cdf_at_s[t] = P(absorbed at side s at a time <= t+1), unconditioned.
    std::vector<double> cdf_at_0, cdf_at_L;
    double mass_at_0 = 0.0, mass_at_L = 0.0;
  };

  Law build(std::uint32_t start) const {
    std::vector<double> v(L_ + 1, 0.0), nx(L_ + 1, 0.0);
    v[start] = 1.0;
    Law law;
    double resid = 1.0;
    const std::size_t hard_cap = 400000;
    for (std::size_t t = 1; resid > 1e-18; ++t) {
      if (t > hard_cap) throw std::logic_error("StripSampler: absorption did not converge");
      std::fill(nx.begin(), nx.end(), 0.0);
      double at0 = 0.5 * v[1];
      double atL = 0.5 * v[L_ - 1];
      for (std::uint32_t s = 1; s < L_; ++s) {
        const double half = 0.5 * v[s];
        if (s > 1) nx[s - 1] += half;
        if (s + 1 < L_) nx[s + 1] += half;
      }
      law.mass_at_0 += at0;
      law.mass_at_L += atL;
      law.cdf_at_0.push_back(law.mass_at_0);
      law.cdf_at_L.push_back(law.mass_at_L);
      std::swap(v, nx);
      // Residual = live interior mass, summed fresh: decrementing a running
      // residual instead would stall on accumulated rounding (~1e-16) and
      // never cross the 1e-18 exit threshold.
      resid = 0.0;
      for (std::uint32_t s = 1; s < L_; ++s) resid += v[s];
    }
    return law;
  }

  static std::int64_t invert(const std::vector<double>& cdf, double target) {
    const auto it = std::lower_bound(cdf.begin(), cdf.end(), target);
    const auto idx = static_cast<std::size_t>(it - cdf.begin());
    return static_cast<std::int64_t>(std::min(idx, cdf.size() - 1)) + 1;
  }

  std::uint32_t L_;
  Law from_1_, from_top_;
};

// ---------------------------------------------------------------------------
// Whole-excursion sampler: the quantities of one excursion from 0 that the
// step-free structural simulations need, drawn from the exact laws above
// without walking the path. "Tall" means the excursion reaches height L
// before returning to 0 (probability exactly 1/L).
// ---------------------------------------------------------------------------
struct ExcursionSample {
  bool tall = false;
  std::int64_t duration = 0;      // zero-to-zero steps; kCensored if > cap
  std::int64_t reach_offset = 0;  // tall only: steps to the first visit of L
};

class ExcursionSampler {
 public:
  ExcursionSampler(std::uint32_t L, const FirstReturnTable& frt)
      : L_(L), frt_(&frt), strip_(L >= 2 ? new StripSampler(L) : nullptr) {
    if (L < 1) throw std::invalid_argument("ExcursionSampler: L must be >= 1");
  }

  std::uint32_t L() const { return L_; }
  const StripSampler* strip() const { return strip_.get(); }
  const FirstReturnTable& first_return() const { return *frt_; }

  // Draw one excursion, censoring duration (and reach_offset) at cap.
  ExcursionSample sample(RngStream& rng, std::int64_t cap) const {
    ExcursionSample out;
    if (L_ == 1) {
      out.tall = true;
      out.reach_offset = 1;
      out.duration = frt_->sample_first_return(rng, cap);
      return out;
    }
    out.tall = rng.next_bernoulli(strip_->p_tall());
    if (!out.tall) {
      const std::int64_t t = strip_->sample_short_time(rng);
      out.duration = (cap != kCensored && 1 + t > cap) ? kCensored : 1 + t;
      return out;
    }
    // Reach L (1 step onto the leg + strip passage 1 -> L avoiding 0), then
    // descend L -> 0 as a sum of L independent first passages one level down.
    out.reach_offset = 1 + strip_->sample_reach_time(rng);
    std::int64_t total = out.reach_offset;
    bool censored = cap != kCensored && total > cap;
    for (std::uint32_t i = 0; i < L_; ++i) {
      const std::int64_t budget = censored ? 1 : (cap == kCensored ? kCensored : cap - total);
      const std::int64_t t = frt_->sample_t10(rng, censored ? 0 : budget);
      if (t == kCensored)
        censored = true;
      else
        total += t;
    }
    if (cap != kCensored && out.reach_offset > cap) out.reach_offset = kCensored;
    out.duration = censored ? kCensored : total;
    return out;
  }

 private:
  std::uint32_t L_;
  const FirstReturnTable* frt_;
  std::shared_ptr<const StripSampler> strip_;
};

// ξ(0,n) drawn from the exact first-return law: the number of zeros of the
// walk at times k in [0, n) (the start zero counts; k = n does not).
inline std::int64_t simulate_zero_count(std::int64_t n, const FirstReturnTable& frt,
                                        RngStream& rng) {
  if (n < 1) return 0;
  std::int64_t t = 0, xi0 = 0;
  while (t < n) {
    ++xi0;  // zero at time t
    const std::int64_t d = frt.sample_first_return(rng, n - 1 - t);
    if (d == kCensored) break;
    t += d;
  }
  return xi0;
}

// Joint (ξ(0,n), ζ(L,n), ζ_inside(L,n)) from the structural laws. ζ counts
// zeros k in [0, n) whose following excursion ever reaches L (the literal
// definition: the reach may happen after n); ζ_inside additionally requires
// the first visit of L to occur by step n.
struct StructuralCounts {
  std::int64_t xi0 = 0;
  std::int64_t zeta = 0;
  std::int64_t zeta_inside = 0;
};

inline StructuralCounts simulate_excursion_counts(std::int64_t n, const ExcursionSampler& exc,
                                                  RngStream& rng) {
  StructuralCounts out;
  if (n < 1) return out;
  std::int64_t t = 0;
  while (t < n) {
    ++out.xi0;
    // Tall flags must be exact even when the duration is censored, and the
    // reach offset must be exact whenever it lands by n; censor at a point
    // beyond every quantity we compare against n.
    const ExcursionSample e = exc.sample(rng, n);
    if (e.tall) {
      ++out.zeta;
      if (e.reach_offset != kCensored && t + e.reach_offset <= n) ++out.zeta_inside;
    }
    if (e.duration == kCensored) break;
    t += e.duration;
  }
  return out;
}

}  // namespace spider
