#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <vector>

#include "spider/core.hpp"
#include "spider/rng.hpp"

namespace spider {

// ---------------------------------------------------------------------------
// Line-walk generation and excursion structure.
// ---------------------------------------------------------------------------

// One maximal excursion of a walk away from 0. The walk is zero at start_idx,
// strictly nonzero on (start_idx, end_idx), and zero again at end_idx when
// complete. An incomplete excursion is cut by the horizon: end_idx = last
// index of the path and the value there may be nonzero.
struct ExcursionRecord {
  std::size_t start_idx = 0;
  std::size_t end_idx = 0;
  std::uint32_t height = 0;  // max |value| on (start_idx, end_idx]
  bool complete = false;
  std::uint32_t leg = 0;  // 0 = unassigned
};

inline WalkPath simulate_ssrw(std::size_t n, RngStream& rng) {
  WalkPath path;
  path.values.resize(n + 1);
  path.values[0] = 0;
  std::int32_t v = 0;
  std::uint64_t bits = 0;
  int bits_left = 0;
  for (std::size_t k = 1; k <= n; ++k) {
    if (bits_left == 0) {
      bits = rng.next_u64();
      bits_left = 64;
    }
    v += (bits & 1u) ? 1 : -1;
    bits >>= 1;
    --bits_left;
    path.values[k] = v;
  }
  return path;
}

// Maximal intervals on which the walk is nonzero, in order, legs unassigned.
// The union of the intervals plus the zero set covers 0..n exactly.
inline std::vector<ExcursionRecord> decompose_excursions(const WalkPath& path) {
  std::vector<ExcursionRecord> out;
  const auto& v = path.values;
  if (v.empty()) throw std::invalid_argument("decompose_excursions: empty path");
  std::size_t k = 0;
  const std::size_t n = v.size() - 1;
  while (k < n) {
    // v[k] == 0 here: scan the excursion starting at k (if any).
    std::size_t j = k + 1;
    std::uint32_t h = 0;
    while (j <= n && v[j] != 0) {
      h = std::max(h, static_cast<std::uint32_t>(std::abs(v[j])));
      ++j;
    }
    ExcursionRecord rec;
    rec.start_idx = k;
    rec.height = h;
    if (j <= n) {
      rec.end_idx = j;
      rec.complete = true;
    } else {
      rec.end_idx = n;
      rec.complete = false;
    }
    out.push_back(rec);
    k = rec.complete ? rec.end_idx : n;
  }
  return out;
}

// Draw one leg per excursion, i.i.d. with the given weights. Consumes exactly
// one draw per excursion, in order.
inline void assign_excursion_legs(std::vector<ExcursionRecord>& excursions,
                                  const LegWeights& weights, RngStream& rng) {
  for (auto& e : excursions) e.leg = weights.sample(rng).index();
}

// Build the spider path whose radial component is |S(k)| and whose leg on each
// excursion interval is that excursion's assigned leg.
inline SpiderPath assign_legs(const WalkPath& walk,
                              const std::vector<ExcursionRecord>& excursions) {
  for (const auto& e : excursions)
    if (e.leg == 0) throw std::invalid_argument("assign_legs: unassigned excursion leg");
  SpiderPath path;
  path.states.resize(walk.values.size(), SpiderState::origin());
  for (const auto& e : excursions) {
    const std::size_t last = e.complete ? e.end_idx - 1 : e.end_idx;
    for (std::size_t k = e.start_idx + 1; k <= last; ++k) {
      const auto r = static_cast<std::uint32_t>(std::abs(walk.values[k]));
      path.states[k] = SpiderState::on_leg(r, LegId(e.leg));
    }
  }
  return path;
}

// Convenience: decompose, draw legs, and build the spider path in one call.
inline SpiderPath assign_legs(const WalkPath& walk, const LegWeights& weights,
                              RngStream& rng) {
  auto exc = decompose_excursions(walk);
  assign_excursion_legs(exc, weights, rng);
  return assign_legs(walk, exc);
}

inline SpiderPath simulate_spider_direct(std::size_t n, const LegWeights& weights,
                                         RngStream& rng) {
  SpiderPath path;
  path.states.reserve(n + 1);
  SpiderState s = SpiderState::origin();
  path.states.push_back(s);
  for (std::size_t k = 0; k < n; ++k) {
    s = step(s, weights, rng);
    path.states.push_back(s);
  }
  return path;
}

// ---------------------------------------------------------------------------
// Grid Brownian motion and the unit-band embedding of a walk into it.
// ---------------------------------------------------------------------------

struct GridBrownianPath {
  double dt = 0.0;
  std::vector<double> values;  // values[i] = B(i * dt), values[0] = 0

  double horizon() const {
    return values.empty() ? 0.0 : dt * static_cast<double>(values.size() - 1);
  }
};

inline GridBrownianPath simulate_bm_grid(double T, double dt, RngStream& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("simulate_bm_grid: dt must be > 0");
  if (!(T >= dt)) throw std::invalid_argument("simulate_bm_grid: horizon shorter than dt");
  const auto n = static_cast<std::size_t>(std::llround(T / dt));
  GridBrownianPath bm;
  bm.dt = dt;
  bm.values.resize(n + 1);
  bm.values[0] = 0.0;
  const double sd = std::sqrt(dt);
  double b = 0.0;
  for (std::size_t i = 1; i <= n; ++i) {
    b += sd * rng.next_normal();
    bm.values[i] = b;
  }
  return bm;
}

namespace detail {

// Incremental unit-band embedding; consumes one grid value of B at a time.
//
// Band anchors are the embedded integer states themselves, so grid overshoot
// does not accumulate across steps: each step's discrepancy |B(tau_i) - S_i|
// is a single-exit overshoot, tracked via max_snap_err. A discrepancy >= 0.5
// (which would make "snap to the nearest integer" ambiguous) marks the
// embedding aborted.
//
// Legs: B's excursions are labelled by drawing from leg_rng at every detected
// zero crossing (eagerly, one draw per grid-detected sign run, in order); an
// exit from an origin anchor adopts the current label. A zero crossing while
// anchored at radius 1 is the walk's return to the origin (the continuous
// trajectory reached the origin, which is at distance exactly 1 from the
// anchor, before any same-leg band edge).
class Embedder {
 public:
  Embedder(const LegWeights& weights, RngStream& leg_rng)
      : weights_(&weights), leg_rng_(&leg_rng) {}

  // Feed B at the next grid point. Returns true if a walk step was emitted.
  bool consume(double b) {
    // Label process first: a sign change means B started a new excursion.
    const int sgn = b > 0.0 ? 1 : (b < 0.0 ? -1 : 0);
    if (sgn == 0) {
      cur_sign_ = 0;  // exactly zero: fresh label at the next nonzero point
    } else if (sgn != cur_sign_) {
      cur_sign_ = sgn;
      label_ = weights_->sample(*leg_rng_).index();
    }

    const double ab = std::abs(b);
    if (r_ == 0) {
      if (ab < 1.0) return false;
      r_ = 1;
      leg_ = label_;
      walk_sign_ = sgn;
      note_err(ab - 1.0);
      return true;
    }
    if (sgn != walk_sign_) {
      // B crossed zero: the trajectory passed the origin. Legal only from
      // radius 1 (a deeper anchor would have exited at its lower band edge
      // first); anything else is a > 1 grid jump and invalidates the trial.
      note_err(ab + static_cast<double>(r_ - 1));
      --r_;
      if (r_ == 0)
        leg_ = 0;
      else
        aborted_ = true;
      return true;
    }
    if (ab >= static_cast<double>(r_) + 1.0) {
      note_err(ab - (static_cast<double>(r_) + 1.0));
      ++r_;
      return true;
    }
    if (ab <= static_cast<double>(r_) - 1.0) {
      note_err((static_cast<double>(r_) - 1.0) - ab);
      --r_;
      if (r_ == 0) leg_ = 0;  // unreachable (r >= 2 here) but kept for safety
      return true;
    }
    return false;
  }

  std::uint32_t radius() const { return r_; }
  std::uint32_t leg() const { return leg_; }
  std::uint32_t label() const { return label_; }
  std::int32_t signed_value() const {
    return walk_sign_ >= 0 ? static_cast<std::int32_t>(r_)
                           : -static_cast<std::int32_t>(r_);
  }
  double max_snap_err() const { return max_err_; }
  bool aborted() const { return aborted_; }

 private:
  void note_err(double e) {
    if (e > max_err_) max_err_ = e;
    if (e >= 0.5) aborted_ = true;
  }

  const LegWeights* weights_;
  RngStream* leg_rng_;
  std::uint32_t r_ = 0;
  std::uint32_t leg_ = 0;    // walk's leg (0 at origin)
  std::uint32_t label_ = 0;  // current excursion label of B
  int cur_sign_ = 0;
  int walk_sign_ = 0;
  double max_err_ = 0.0;
  bool aborted_ = false;
};

// Everything the embedding produces, shared verbatim by the materialized and
// streaming front ends so that the two are bit-for-bit interchangeable.
struct CouplingCore {
  // Per embedded step m = 0..n_steps (recording stops at n_target steps).
  std::vector<std::size_t> tau;        // grid indices, tau[0] = 0
  std::vector<std::int32_t> signed_val;
  std::vector<std::uint32_t> radius;
  std::vector<std::uint32_t> leg;
  // The continuous spider (|B|, current excursion label) sampled at unit
  // times m = 0..n_units (only when per_unit > 0).
  std::vector<double> bsp_radius;
  std::vector<std::uint32_t> bsp_leg;
  double max_snap_err = 0.0;
  bool aborted = false;
  bool leg_agreement_ok = true;  // walk leg == B's label at every off-origin exit

  std::size_t n_steps() const { return tau.size() - 1; }
};

// Scan n_grid values of B (from `next_b`, called once per grid index in
// order), embedding up to n_target steps and sampling the continuous spider
// at unit times (every per_unit grid points, at most n_units_cap of them).
template <class NextB>
CouplingCore run_embedding_core(std::size_t n_grid, std::size_t per_unit,
                                std::size_t n_target, std::size_t n_units_cap,
                                const LegWeights& weights, RngStream& leg_rng,
                                NextB&& next_b) {
  CouplingCore core;
  core.tau.push_back(0);
  core.signed_val.push_back(0);
  core.radius.push_back(0);
  core.leg.push_back(0);
  if (per_unit > 0) {
    core.bsp_radius.push_back(0.0);
    core.bsp_leg.push_back(0);
  }
  Embedder emb(weights, leg_rng);
  std::size_t next_unit = 1;
  for (std::size_t g = 1; g <= n_grid; ++g) {
    const double b = next_b();
    const bool stepped = emb.consume(b);
    if (stepped && core.n_steps() < n_target) {
      core.tau.push_back(g);
      core.signed_val.push_back(emb.signed_value());
      core.radius.push_back(emb.radius());
      core.leg.push_back(emb.leg());
      if (emb.radius() > 0 && emb.leg() != emb.label()) core.leg_agreement_ok = false;
      if (emb.aborted()) break;
    }
    if (per_unit > 0 && g == next_unit * per_unit && next_unit <= n_units_cap) {
      core.bsp_radius.push_back(std::abs(b));
      core.bsp_leg.push_back(b == 0.0 ? 0 : emb.label());
      ++next_unit;
    }
    if (core.n_steps() >= n_target &&
        (per_unit == 0 || next_unit > n_units_cap))
      break;
  }
  core.max_snap_err = emb.max_snap_err();
  core.aborted = emb.aborted();
  return core;
}

inline std::size_t units_per_step(double dt) {
  const auto per_unit = static_cast<std::size_t>(std::llround(1.0 / dt));
  if (per_unit == 0 || std::abs(static_cast<double>(per_unit) * dt - 1.0) > 1e-9)
    throw std::invalid_argument("coupling: dt must evenly divide one time unit");
  return per_unit;
}

}  // namespace detail

// Record of one embedding: stopping indices, the embedded signed walk, the
// walk's leg after each step (0 at the origin), and the snap diagnostics.
struct CouplingRecord {
  GridBrownianPath bm;  // the source path (copied; small/materialized use only)
  std::vector<std::size_t> tau;
  WalkPath embedded;
  std::vector<std::uint32_t> legs;
  double max_snap_err = 0.0;
  bool aborted = false;    // snap guard tripped (grid too coarse)
  bool exhausted = false;  // grid ended before max_steps exits
};

inline CouplingRecord skorokhod_embed(const GridBrownianPath& bm, const LegWeights& weights,
                                      RngStream& leg_rng,
                                      std::size_t max_steps = SIZE_MAX) {
  if (!(bm.dt > 0.0) || bm.values.size() < 2)
    throw std::invalid_argument("skorokhod_embed: empty Brownian path");
  const std::size_t n_grid = bm.values.size() - 1;
  std::size_t g = 0;
  auto core = detail::run_embedding_core(
      n_grid, /*per_unit=*/0, std::min(max_steps, n_grid), /*n_units_cap=*/0, weights,
      leg_rng, [&]() { return bm.values[++g]; });
  CouplingRecord rec;
  rec.bm = bm;
  rec.tau = std::move(core.tau);
  rec.embedded.values = std::move(core.signed_val);
  rec.legs = std::move(core.leg);
  rec.max_snap_err = core.max_snap_err;
  rec.aborted = core.aborted;
  rec.exhausted = rec.embedded.steps() < std::min(max_steps, n_grid) && !core.aborted &&
                  max_steps != SIZE_MAX;
  return rec;
}

// N = 1 convenience: embedding without leg structure (reflected-walk view).
inline CouplingRecord skorokhod_embed(const GridBrownianPath& bm) {
  const LegWeights w = LegWeights::uniform(1);
  RngStream dummy(0, 0);
  return skorokhod_embed(bm, w, dummy);
}

// The coupled pair: the embedded spider walk (radial part |embedded walk|,
// legs shared with B's excursion labels) against the continuous spider
// (|B(t)|, label) sampled at unit times. distance_at_step[m] is the spider
// distance between walk state S_m and continuous state SP(m), defined for
// m <= min(embedded steps, grid units).
struct CoupledPair {
  SpiderPath spider;
  CouplingRecord record;
  std::vector<double> bspider_radius;
  std::vector<std::uint32_t> bspider_leg;
  std::vector<double> distance_at_step;
  bool leg_agreement_ok = true;

  std::size_t steps() const { return spider.steps(); }
  double sup_distance(std::size_t n) const {
    double s = 0.0;
    for (std::size_t m = 0; m <= n && m < distance_at_step.size(); ++m)
      s = std::max(s, distance_at_step[m]);
    return s;
  }
};

// Normalizer for the coupling-distance diagnostic:
// (n log log n)^(1/4) * (log n)^(1/2).
inline double coupling_rate(std::size_t n) {
  if (n < 3) throw std::invalid_argument("coupling_rate: n must be >= 3");
  const double nd = static_cast<double>(n);
  return std::pow(nd * std::log(std::log(nd)), 0.25) * std::sqrt(std::log(nd));
}

inline CoupledPair build_coupled_pair(const GridBrownianPath& bm, const LegWeights& weights,
                                      RngStream& leg_rng, std::size_t max_steps = SIZE_MAX) {
  if (!(bm.dt > 0.0) || bm.values.size() < 2)
    throw std::invalid_argument("build_coupled_pair: empty Brownian path");
  const std::size_t n_grid = bm.values.size() - 1;
  const std::size_t per_unit = detail::units_per_step(bm.dt);
  const std::size_t n_target = std::min(max_steps, n_grid);
  const std::size_t n_units_cap = std::min(n_target, n_grid / per_unit);
  std::size_t g = 0;
  auto core = detail::run_embedding_core(n_grid, per_unit, n_target, n_units_cap, weights,
                                         leg_rng, [&]() { return bm.values[++g]; });

  CoupledPair pair;
  pair.record.bm = bm;
  pair.record.tau = core.tau;
  pair.record.embedded.values = core.signed_val;
  pair.record.legs = core.leg;
  pair.record.max_snap_err = core.max_snap_err;
  pair.record.aborted = core.aborted;
  pair.record.exhausted =
      core.n_steps() < n_target && !core.aborted && max_steps != SIZE_MAX;
  pair.leg_agreement_ok = core.leg_agreement_ok;

  const std::size_t n_emb = core.n_steps();
  pair.spider.states.resize(n_emb + 1, SpiderState::origin());
  for (std::size_t m = 1; m <= n_emb; ++m)
    if (core.radius[m] > 0)
      pair.spider.states[m] = SpiderState::on_leg(core.radius[m], LegId(core.leg[m]));

  pair.bspider_radius = std::move(core.bsp_radius);
  pair.bspider_leg = std::move(core.bsp_leg);
  const std::size_t n_cmp = std::min(n_emb, pair.bspider_radius.size() - 1);
  pair.distance_at_step.resize(n_cmp + 1, 0.0);
  for (std::size_t m = 0; m <= n_cmp; ++m)
    pair.distance_at_step[m] =
        spider_distance_real(static_cast<double>(core.radius[m]), core.leg[m],
                             pair.bspider_radius[m], pair.bspider_leg[m]);
  return pair;
}

// ---------------------------------------------------------------------------
// Streaming coupling trial: the same construction as build_coupled_pair but
// without materializing the Brownian path (criteria-scale runs use ~5e7 grid
// points per trial). Draw layout: substream(0) = Brownian increments,
// substream(1) = leg labels; build_coupled_pair over simulate_bm_grid with the
// same layout reproduces the walk, tau indices, and distances bit-for-bit.
// ---------------------------------------------------------------------------

struct CouplingTrialResult {
  std::size_t n_steps = 0;   // embedded steps achieved (capped at n_target)
  double tau_ratio = 0.0;    // tau_{n_steps} in time units / n_steps
  double max_snap_err = 0.0;
  bool aborted = false;
  bool valid_walk = false;        // embedded path passed the ±1 validity check
  bool leg_agreement_ok = false;  // walk leg == B's label at every off-origin exit
  std::vector<std::size_t> checkpoints;
  std::vector<double> sup_distance;  // sup_{m<=c} dist(S_m, SP(m)) per checkpoint
};

inline CouplingTrialResult run_coupling_trial(double T, double dt, std::size_t n_target,
                                              std::vector<std::size_t> checkpoints,
                                              const LegWeights& weights, RngStream& rng) {
  if (!(dt > 0.0)) throw std::invalid_argument("run_coupling_trial: dt must be > 0");
  if (!(T >= 1.0)) throw std::invalid_argument("run_coupling_trial: horizon below one unit");
  std::sort(checkpoints.begin(), checkpoints.end());
  RngStream inc_rng = rng.substream(0);
  RngStream leg_rng = rng.substream(1);
  const auto n_grid = static_cast<std::size_t>(std::llround(T / dt));
  const std::size_t per_unit = detail::units_per_step(dt);
  const std::size_t n_units_cap = std::min(n_target, n_grid / per_unit);
  const double sd = std::sqrt(dt);
  double b = 0.0;
  auto core = detail::run_embedding_core(
      n_grid, per_unit, std::min(n_target, n_grid), n_units_cap, weights, leg_rng, [&]() {
        b += sd * inc_rng.next_normal();
        return b;
      });

  CouplingTrialResult res;
  res.n_steps = core.n_steps();
  res.aborted = core.aborted;
  res.max_snap_err = core.max_snap_err;
  res.leg_agreement_ok = core.leg_agreement_ok;
  res.tau_ratio = res.n_steps == 0 ? 0.0
                                   : static_cast<double>(core.tau.back()) * dt /
                                         static_cast<double>(res.n_steps);
  bool valid = !core.aborted;
  for (std::size_t m = 1; m <= res.n_steps && valid; ++m)
    if (std::abs(core.signed_val[m] - core.signed_val[m - 1]) != 1) valid = false;
  res.valid_walk = valid;

  const std::size_t n_cmp = std::min(res.n_steps, core.bsp_radius.size() - 1);
  res.checkpoints = checkpoints;
  res.sup_distance.assign(checkpoints.size(), 0.0);
  double running = 0.0;
  std::size_t cp = 0;
  for (std::size_t m = 0; m <= n_cmp; ++m) {
    running = std::max(
        running, spider_distance_real(static_cast<double>(core.radius[m]), core.leg[m],
                                      core.bsp_radius[m], core.bsp_leg[m]));
    while (cp < checkpoints.size() && checkpoints[cp] == m) {
      res.sup_distance[cp] = running;
      ++cp;
    }
  }
  // Checkpoints beyond the compared range keep the final running sup.
  for (; cp < checkpoints.size(); ++cp) res.sup_distance[cp] = running;
  return res;
}

}  // namespace spider
