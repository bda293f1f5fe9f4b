#pragma once

// Experiment orchestration: specs, deterministic trial-parallel execution,
// kind dispatch, and CSV / JSON-lines serialization.
//
// Output determinism contract: for a fixed (spec, seed) the emitted records
// are byte-identical across runs and thread counts. Wall-clock metrics are
// therefore kept out of the serialized output; run() reports timing on the
// side (ExperimentResult::elapsed_seconds) for the caller to log to stderr.

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <memory>
#include <mutex>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <thread>
#include <type_traits>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "spider/core.hpp"
#include "spider/exact.hpp"
#include "spider/first_passage.hpp"
#include "spider/heights.hpp"
#include "spider/legs_growth.hpp"
#include "spider/rng.hpp"
#include "spider/simulate.hpp"
#include "spider/stats.hpp"

namespace spider {

using Json = nlohmann::ordered_json;

// Thrown for malformed specs/parameters; the CLI maps it to exit code 2.
struct UsageError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

inline const char* version_string() {
#ifdef SPIDER_MC_VERSION
  return SPIDER_MC_VERSION;
#else
  return "unversioned";
#endif
}

// ---------------------------------------------------------------------------
// Spec.
// ---------------------------------------------------------------------------

enum class ExperimentKind {
  exact_check,
  density_scaling,
  height_dist,
  coupling,
  legs_growth,
  coupon,
  hirsch_trace,
};

inline const char* to_string(ExperimentKind k) {
  switch (k) {
    case ExperimentKind::exact_check: return "exact-check";
    case ExperimentKind::density_scaling: return "density-scaling";
    case ExperimentKind::height_dist: return "height-dist";
    case ExperimentKind::coupling: return "coupling";
    case ExperimentKind::legs_growth: return "legs-growth";
    case ExperimentKind::coupon: return "coupon";
    case ExperimentKind::hirsch_trace: return "hirsch-trace";
  }
  throw std::logic_error("unknown experiment kind");
}

inline ExperimentKind kind_from_string(const std::string& s) {
  for (ExperimentKind k :
       {ExperimentKind::exact_check, ExperimentKind::density_scaling,
        ExperimentKind::height_dist, ExperimentKind::coupling, ExperimentKind::legs_growth,
        ExperimentKind::coupon, ExperimentKind::hirsch_trace}) {
    if (s == to_string(k)) return k;
  }
  throw UsageError("unknown experiment kind: " + s);
}

enum class OutputFormat { csv, json_lines };

inline OutputFormat format_from_string(const std::string& s) {
  if (s == "csv") return OutputFormat::csv;
  if (s == "jsonl" || s == "json-lines") return OutputFormat::json_lines;
  throw UsageError("unknown output format: " + s);
}

struct ExperimentSpec {
  ExperimentKind kind = ExperimentKind::exact_check;
  std::uint64_t seed = 1;
  std::uint64_t trials = 0;  // 0 = kind-specific default
  unsigned threads = 0;      // 0 = SPIDER_MC_THREADS env or hardware default
  std::string out;           // empty = stdout
  OutputFormat format = OutputFormat::csv;
  Json params = Json::object();
};

struct ExperimentResult {
  Json meta = Json::object();
  std::vector<Json> records;
  bool ok = true;                // false on any invariant violation during the run
  std::string failure;           // human-readable reason when !ok
  double elapsed_seconds = 0.0;  // not serialized (determinism contract)
};

// ---------------------------------------------------------------------------
// Deterministic trial-parallel execution.
// ---------------------------------------------------------------------------

inline unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("SPIDER_MC_THREADS")) {
    char* end = nullptr;
    const unsigned long v = std::strtoul(env, &end, 10);
    if (end != env && v > 0 && v < 4096) return static_cast<unsigned>(v);
  }
  const unsigned hc = std::thread::hardware_concurrency();
  return hc > 0 ? hc : 1;
}

// Calls fn(trial_index, stream) for every trial with a per-trial derived
// stream, collecting the returned values in trial order. The result is a pure
// function of (parent stream, fn) regardless of the thread count.
template <typename Fn>
auto run_trials(std::uint64_t n_trials, unsigned n_threads, const RngStream& parent, Fn&& fn)
    -> std::vector<std::invoke_result_t<Fn&, std::uint64_t, RngStream&>> {
  using R = std::invoke_result_t<Fn&, std::uint64_t, RngStream&>;
  std::vector<R> results(n_trials);
  const unsigned workers =
      static_cast<unsigned>(std::min<std::uint64_t>(resolve_threads(n_threads), n_trials));
  if (workers <= 1) {
    for (std::uint64_t i = 0; i < n_trials; ++i) {
      RngStream stream = parent.substream(i);
      results[i] = fn(i, stream);
    }
    return results;
  }
  std::atomic<std::uint64_t> next{0};
  std::vector<std::thread> pool;
  std::exception_ptr error;
  std::mutex error_mutex;
  pool.reserve(workers);
  for (unsigned w = 0; w < workers; ++w) {
    pool.emplace_back([&]() {
      try {
        for (;;) {
          const std::uint64_t i = next.fetch_add(1, std::memory_order_relaxed);
          if (i >= n_trials) return;
          RngStream stream = parent.substream(i);
          results[i] = fn(i, stream);
        }
      } catch (...) {
        std::lock_guard<std::mutex> lock(error_mutex);
        if (!error) error = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
  return results;
}

// ---------------------------------------------------------------------------
// Parameter helpers.
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
T param_or(const Json& params, const std::string& key, T fallback) {
  if (!params.contains(key)) return fallback;
  try {
    return params.at(key).get<T>();
  } catch (const std::exception&) {
    throw UsageError("parameter '" + key + "' has the wrong type");
  }
}

inline std::vector<double> param_vector(const Json& params, const std::string& key,
                                        std::vector<double> fallback) {
  if (!params.contains(key)) return fallback;
  try {
    return params.at(key).get<std::vector<double>>();
  } catch (const std::exception&) {
    throw UsageError("parameter '" + key + "' must be a numeric array");
  }
}

inline LegWeights weights_from_params(const Json& params, std::uint32_t n_legs) {
  if (params.contains("p")) {
    const auto p = param_vector(params, "p", {});
    if (p.size() != n_legs) throw UsageError("parameter 'p' must list one weight per leg");
    return LegWeights(p);
  }
  return LegWeights::uniform(n_legs);
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Serialization.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string csv_escape(const std::string& field) {
  const bool needs_quotes = field.find_first_of(",\"\r\n") != std::string::npos;
  if (!needs_quotes) return field;
  std::string out = "\"";
  for (char c : field) {
    if (c == '"') out += "\"\"";
    else out += c;
  }
  out += "\"";
  return out;
}

inline std::string csv_cell(const Json& v) {
  if (v.is_string()) return csv_escape(v.get<std::string>());
  if (v.is_boolean()) return v.get<bool>() ? "true" : "false";
  if (v.is_null()) return "";
  if (v.is_number_float()) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v.get<double>());
    return buf;
  }
  return csv_escape(v.dump());  // integers, arrays, objects
}

}  // namespace detail

// Serialize to `os`. CSV: a header row from the first record's keys (the
// constant columns kind/seed/version are prepended so every row embeds the
// spec identity); JSON-lines: one meta object line followed by one line per
// record.
inline void emit(const ExperimentResult& result, std::ostream& os, OutputFormat format) {
  if (format == OutputFormat::json_lines) {
    Json meta = Json::object();
    meta["type"] = "meta";
    for (auto it = result.meta.begin(); it != result.meta.end(); ++it) meta[it.key()] = *it;
    os << meta.dump() << "\n";
    for (const Json& rec : result.records) os << rec.dump() << "\n";
    return;
  }
  // CSV: the header is the union of record keys in first-seen order, so runs
  // that mix record shapes (e.g. summaries plus grid points) stay rectangular.
  std::vector<std::string> cols;
  for (const Json& rec : result.records) {
    for (auto it = rec.begin(); it != rec.end(); ++it) {
      if (std::find(cols.begin(), cols.end(), it.key()) == cols.end()) cols.push_back(it.key());
    }
  }
  os << "kind,seed,version";
  for (const auto& c : cols) os << "," << detail::csv_escape(c);
  os << "\r\n";
  const std::string kind = result.meta.value("kind", std::string("?"));
  const std::string seed = result.meta.contains("seed")
                               ? std::to_string(result.meta["seed"].get<std::uint64_t>())
                               : "?";
  const std::string version = result.meta.value("version", std::string("?"));
  for (const Json& rec : result.records) {
    os << detail::csv_escape(kind) << "," << seed << "," << detail::csv_escape(version);
    for (const auto& c : cols) {
      os << ",";
      if (rec.contains(c)) os << detail::csv_cell(rec.at(c));
    }
    os << "\r\n";
  }
}

// Parse a JSON-lines stream back into (meta, records); inverse of emit() for
// OutputFormat::json_lines.
inline std::pair<Json, std::vector<Json>> parse_jsonl(std::istream& is) {
  Json meta = Json::object();
  std::vector<Json> records;
  std::string line;
  bool first = true;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    Json v = Json::parse(line);
    if (first) {
      first = false;
      if (v.is_object() && v.value("type", "") == "meta") {
        v.erase("type");
        meta = std::move(v);
        continue;
      }
    }
    records.push_back(std::move(v));
  }
  return {meta, records};
}

// ---------------------------------------------------------------------------
// Kind implementations.
// ---------------------------------------------------------------------------

namespace detail {

struct NamedWeights {
  std::string label;
  std::vector<ExactRational> exact;
  LegWeights weights;
};

inline std::vector<NamedWeights> exact_check_weight_sets() {
  std::vector<NamedWeights> sets;
  for (std::uint32_t n : {1u, 2u, 3u}) {
    std::vector<ExactRational> ex(n, ExactRational(1, n));
    std::vector<double> d(n, 1.0 / n);
    sets.push_back({"uniform-" + std::to_string(n), ex, LegWeights(d)});
  }
  sets.push_back({"half-three-two",
                  {ExactRational(1, 2), ExactRational(3, 10), ExactRational(1, 5)},
                  LegWeights(std::vector<double>{0.5, 0.3, 0.2})});
  return sets;
}

// Compare the closed transition forms against the exhaustive-enumeration
// oracle over every even start/end pair within the radius bound.
inline ExperimentResult run_exact_check(const ExperimentSpec& spec) {
  const int n_max = param_or<int>(spec.params, "n_max", 6);
  const int r_max = param_or<int>(spec.params, "r_max", 4);
  if (n_max < 1 || n_max > 7) throw UsageError("exact-check: n_max must be in 1..7");
  if (r_max < 0 || r_max % 2 != 0) throw UsageError("exact-check: r_max must be even and >= 0");

  ExperimentResult result;
  bool all_equal = true;
  double max_abs_err = 0.0;
  for (const NamedWeights& ws : exact_check_weight_sets()) {
    const std::uint32_t N = static_cast<std::uint32_t>(ws.weights.size());
    for (int n = 1; n <= n_max; ++n) {
      const int steps = 2 * n;
      // Start states: origin and (2i, leg) for 1 <= 2i <= r_max.
      std::vector<SpiderState> starts = {SpiderState::origin()};
      for (int i = 1; 2 * i <= r_max; ++i)
        for (std::uint32_t leg = 1; leg <= N; ++leg)
          starts.push_back(SpiderState::on_leg(static_cast<std::uint32_t>(2 * i), LegId(leg)));
      for (const SpiderState& start : starts) {
        const auto dist = brute_force_distribution(steps, start, ws.exact);
        for (int j = 1; 2 * j <= r_max; ++j) {
          for (std::uint32_t leg = 1; leg <= N; ++leg) {
            const SpiderState end =
                SpiderState::on_leg(static_cast<std::uint32_t>(2 * j), LegId(leg));
            ExactRational closed_exact;
            double closed_float = 0.0;
            std::string case_name;
            if (start.is_origin()) {
              case_name = "from-origin";
              closed_exact = trans_from_origin_exact(n, j, ws.exact[leg - 1]);
              closed_float = trans_from_origin(n, j, ws.weights.p(leg)).linear;
            } else if (start.leg_index_or_zero() != leg) {
              case_name = "cross-leg";
              const int i = static_cast<int>(start.radius()) / 2;
              closed_exact = trans_cross_leg_exact(n, i, j, ws.exact[leg - 1]);
              closed_float = trans_cross_leg(n, i, j, ws.weights.p(leg)).linear;
            } else {
              case_name = "same-leg";
              const int i = static_cast<int>(start.radius()) / 2;
              closed_exact = trans_same_leg_exact(n, i, j, ws.exact[leg - 1]);
              closed_float = trans_same_leg(n, i, j, ws.weights.p(leg)).linear;
            }
            const auto oracle_it = dist.find(key_of(end));
            const ExactRational oracle =
                oracle_it == dist.end() ? ExactRational(0) : oracle_it->second;
            const bool equal = closed_exact == oracle;
            const double abs_err = std::fabs(closed_float - to_double(oracle));
            all_equal = all_equal && equal;
            max_abs_err = std::max(max_abs_err, abs_err);
            Json rec;
            rec["weights"] = ws.label;
            rec["case"] = case_name;
            rec["steps"] = steps;
            rec["start_r"] = start.radius();
            rec["start_leg"] = start.leg_index_or_zero();
            rec["end_r"] = 2 * j;
            rec["end_leg"] = leg;
            rec["closed_form"] = closed_float;
            rec["oracle"] = to_double(oracle);
            rec["exact_equal"] = equal;
            rec["abs_err"] = abs_err;
            result.records.push_back(std::move(rec));
          }
        }
      }
    }
  }
  result.meta["all_equal"] = all_equal;
  result.meta["max_abs_err"] = max_abs_err;
  result.meta["reference"] = "closed transition forms vs exhaustive enumeration";
  if (!all_equal) {
    result.ok = false;
    result.failure = "closed form disagreed with the enumeration oracle";
  } else if (max_abs_err > 1e-12) {
    result.ok = false;
    result.failure = "floating transition forms drifted beyond 1e-12";
  }
  return result;
}

inline ExperimentResult run_density_scaling(const ExperimentSpec& spec) {
  const std::int64_t n = param_or<std::int64_t>(spec.params, "n", 10000);
  const double t = param_or<double>(spec.params, "t", 1.0);
  const double x = param_or<double>(spec.params, "x", 0.5);
  const double y = param_or<double>(spec.params, "y", 0.5);
  const std::uint32_t N = param_or<std::uint32_t>(spec.params, "N", 3);
  if (n < 4) throw UsageError("density-scaling: n too small");
  if (!(t > 0.0) || !(x > 0.0) || !(y > 0.0))
    throw UsageError("density-scaling: t, x, y must be positive");
  if (N < 2) throw UsageError("density-scaling: need N >= 2 for the cross-leg case");

  const double sqrt_n = std::sqrt(static_cast<double>(n));
  const std::int64_t half_steps = static_cast<std::int64_t>(static_cast<double>(n) * t);
  const std::int64_t i = static_cast<std::int64_t>(x * sqrt_n);
  const std::int64_t j = static_cast<std::int64_t>(y * sqrt_n);
  const double p = 1.0 / static_cast<double>(N);

  ExperimentResult result;
  bool within = true;
  const double tol = 0.05;
  const auto push = [&](const char* name, double scaled, double density) {
    const double rel = std::fabs(scaled - density) / density;
    within = within && rel <= tol;
    Json rec;
    rec["case"] = name;
    rec["n"] = n;
    rec["t"] = t;
    rec["x"] = x;
    rec["y"] = y;
    rec["p"] = p;
    rec["scaled_lattice"] = scaled;
    rec["density"] = density;
    rec["rel_err"] = rel;
    result.records.push_back(std::move(rec));
  };
  push("origin", sqrt_n * trans_from_origin(half_steps, j, p).linear,
       lattice_density_origin(t, y, p));
  push("cross-leg", sqrt_n * trans_cross_leg(half_steps, i, j, p).linear,
       lattice_density_cross(t, x, y, p));
  push("same-leg", sqrt_n * trans_same_leg(half_steps, i, j, p).linear,
       lattice_density_same(t, x, y, p));
  result.meta["rel_tolerance"] = tol;
  if (!within) {
    result.ok = false;
    result.failure = "scaled lattice probability missed the density by more than 5%";
  }
  return result;
}

inline ExperimentResult run_height_dist(const ExperimentSpec& spec) {
  const std::uint64_t n = param_or<std::uint64_t>(spec.params, "n", 10000);
  const std::uint32_t N = param_or<std::uint32_t>(spec.params, "N", 3);
  const std::uint64_t trials = spec.trials ? spec.trials : 20000;
  if (N < 1) throw UsageError("height-dist: need N >= 1");
  if (n < 1) throw UsageError("height-dist: need n >= 1");
  const LegWeights weights = weights_from_params(spec.params, N);
  for (std::uint32_t leg = 1; leg <= N; ++leg)
    if (!(weights.p(leg) > 0.0 && weights.p(leg) < 1.0))
      throw UsageError("height-dist: the reference law needs every leg weight in (0, 1)");
  const std::vector<double> y_grid = param_vector(spec.params, "y_grid", {});

  const RngStream parent(spec.seed, 0);
  const double sqrt_n = std::sqrt(static_cast<double>(n));
  // Per trial: the vector of scaled per-leg heights H(j,n)/sqrt(n).
  auto trial_fn = [&](std::uint64_t, RngStream& stream) {
    RngStream walk_rng = stream.substream(0);
    RngStream leg_rng = stream.substream(1);
    WalkPath walk = simulate_ssrw(n, walk_rng);
    auto excursions = decompose_excursions(walk);
    assign_excursion_legs(excursions, weights, leg_rng);
    std::vector<double> h(N, 0.0);
    for (const auto& e : excursions) {
      if (e.leg == 0) continue;
      h[e.leg - 1] = std::max(h[e.leg - 1], static_cast<double>(e.height));
    }
    for (double& v : h) v /= sqrt_n;
    return h;
  };
  const auto samples = run_trials(trials, spec.threads, parent, trial_fn);

  ExperimentResult result;
  bool all_ok = true;
  for (std::uint32_t leg = 1; leg <= N; ++leg) {
    std::vector<double> s;
    s.reserve(trials);
    for (const auto& h : samples) s.push_back(h[leg - 1]);
    EmpiricalCdf cdf(std::move(s));
    const double p = weights.p(leg);
    const double ks = ks_distance(cdf, [&](double v) { return limit_height_cdf(v, p); });
    all_ok = all_ok && ks <= 0.02;
    Json rec;
    rec["record"] = "leg-summary";
    rec["leg"] = leg;
    rec["p"] = p;
    rec["n"] = n;
    rec["trials"] = trials;
    rec["ks"] = ks;
    result.records.push_back(std::move(rec));
    for (double yv : y_grid) {
      Json row;
      row["record"] = "cdf-point";
      row["leg"] = leg;
      row["p"] = p;
      row["n"] = n;
      row["trials"] = trials;
      row["y"] = yv;
      row["empirical"] = cdf(yv);
      row["limit"] = limit_height_cdf(yv, p);
      result.records.push_back(std::move(row));
    }
  }
  result.meta["ks_tolerance"] = 0.02;
  result.meta["reference"] = "series limit law for per-leg heights";
  if (!all_ok) {
    result.ok = false;
    result.failure = "per-leg KS distance exceeded 0.02";
  }
  return result;
}

inline ExperimentResult run_coupling(const ExperimentSpec& spec) {
  const double dt = param_or<double>(spec.params, "dt", 1e-4);
  const std::uint64_t n_target = param_or<std::uint64_t>(spec.params, "n_target", 4096);
  const std::uint64_t trials = spec.trials ? spec.trials : 200;
  const std::uint32_t N = param_or<std::uint32_t>(spec.params, "N", 3);
  const double horizon_factor = param_or<double>(spec.params, "horizon_factor", 1.125);
  std::vector<double> cps = param_vector(spec.params, "checkpoints", {1024.0, 4096.0});
  if (!(dt > 0.0) || dt > 0.01) throw UsageError("coupling: dt must be in (0, 0.01]");
  if (n_target < 16) throw UsageError("coupling: n_target too small");
  const LegWeights weights = weights_from_params(spec.params, N);
  std::vector<std::size_t> checkpoints;
  for (double c : cps) {
    if (c < 3 || c > static_cast<double>(n_target)) throw UsageError("coupling: bad checkpoint");
    checkpoints.push_back(static_cast<std::size_t>(c));
  }
  std::sort(checkpoints.begin(), checkpoints.end());
  const double T = horizon_factor * static_cast<double>(n_target);

  const RngStream parent(spec.seed, 0);
  auto trial_fn = [&](std::uint64_t, RngStream& stream) {
    return run_coupling_trial(T, dt, n_target, checkpoints, weights, stream);
  };
  const auto outcomes = run_trials(trials, spec.threads, parent, trial_fn);

  ExperimentResult result;
  bool all_valid = true, all_agree = true, none_aborted = true, all_reached = true;
  double tau_sum = 0.0;
  std::vector<double> ratio_sums(checkpoints.size(), 0.0);
  for (std::uint64_t i = 0; i < outcomes.size(); ++i) {
    const auto& o = outcomes[i];
    all_valid = all_valid && o.valid_walk;
    all_agree = all_agree && o.leg_agreement_ok;
    none_aborted = none_aborted && !o.aborted;
    all_reached = all_reached && o.n_steps >= n_target;
    tau_sum += o.tau_ratio;
    Json rec;
    rec["trial"] = i;
    rec["n_steps"] = o.n_steps;
    rec["tau_ratio"] = o.tau_ratio;
    rec["max_snap_err"] = o.max_snap_err;
    rec["valid_walk"] = o.valid_walk;
    rec["leg_agreement"] = o.leg_agreement_ok;
    rec["aborted"] = o.aborted;
    for (std::size_t c = 0; c < checkpoints.size(); ++c) {
      const double norm = coupling_rate(checkpoints[c]);
      const double ratio = o.sup_distance[c] / norm;
      ratio_sums[c] += ratio;
      rec["sup_" + std::to_string(checkpoints[c])] = o.sup_distance[c];
      rec["normalized_" + std::to_string(checkpoints[c])] = ratio;
    }
    result.records.push_back(std::move(rec));
  }
  const double tau_mean = tau_sum / static_cast<double>(outcomes.size());
  result.meta["tau_ratio_mean"] = tau_mean;
  for (std::size_t c = 0; c < checkpoints.size(); ++c)
    result.meta["normalized_mean_" + std::to_string(checkpoints[c])] =
        ratio_sums[c] / static_cast<double>(outcomes.size());
  result.meta["reference"] = "normalizer (n lnln n)^{1/4} (ln n)^{1/2}";
  if (!all_valid) {
    result.ok = false;
    result.failure = "an embedded walk was not a valid +-1 path";
  } else if (!all_agree) {
    result.ok = false;
    result.failure = "leg agreement failed on a shared excursion";
  } else if (!none_aborted) {
    result.ok = false;
    result.failure = "a trial tripped the snap guard";
  } else if (!all_reached) {
    result.ok = false;
    result.failure = "a trial ran out of Brownian horizon before n_target steps";
  } else if (!(tau_mean > 0.95 && tau_mean < 1.05)) {
    result.ok = false;
    result.failure = "mean tau_n/n left the 1 +- 0.05 window";
  }
  return result;
}

// Aggregate-count checkpointing for the long-running urn/legs sweeps: a
// sidecar JSON file stores completed-trial counts keyed by a spec
// fingerprint, written roughly every 10^7 simulated step-equivalents.
struct AggregateCheckpoint {
  std::string path;  // empty = checkpointing disabled
  std::string fingerprint;
  std::uint64_t done = 0;
  std::uint64_t acc_a = 0;
  std::uint64_t acc_b = 0;

  void load() {
    if (path.empty()) return;
    std::ifstream in(path);
    if (!in) return;
    try {
      Json v = Json::parse(in);
      if (v.value("fingerprint", "") != fingerprint) return;
      done = v.value("done", std::uint64_t{0});
      acc_a = v.value("acc_a", std::uint64_t{0});
      acc_b = v.value("acc_b", std::uint64_t{0});
    } catch (const std::exception&) {
      // Unreadable checkpoint: start over.
      done = acc_a = acc_b = 0;
    }
  }

  void store() const {
    if (path.empty()) return;
    Json v;
    v["fingerprint"] = fingerprint;
    v["done"] = done;
    v["acc_a"] = acc_a;
    v["acc_b"] = acc_b;
    std::ofstream out(path + ".tmp", std::ios::trunc);
    out << v.dump() << "\n";
    out.close();
    std::rename((path + ".tmp").c_str(), path.c_str());
  }

  void clear() const {
    if (!path.empty()) std::remove(path.c_str());
  }
};

inline ExperimentResult run_legs_growth(const ExperimentSpec& spec) {
  // Accept a single N or a list for sweep plots.
  std::vector<std::uint32_t> n_list;
  if (spec.params.contains("N") && spec.params.at("N").is_array()) {
    for (const auto& v : spec.params.at("N")) n_list.push_back(v.get<std::uint32_t>());
  } else {
    n_list.push_back(param_or<std::uint32_t>(spec.params, "N", 1000));
  }
  GrowingLegsConfig base;
  base.L = param_or<std::uint32_t>(spec.params, "L", 1);
  base.c = param_or<double>(spec.params, "c", 1.0);
  base.k = param_or<std::uint32_t>(spec.params, "k", 1);
  base.trials = spec.trials ? spec.trials : 2000;
  base.enforce_regime = param_or<bool>(spec.params, "enforce_regime", true);
  base.horizon_override = param_or<std::uint64_t>(spec.params, "horizon_override", 0);
  const std::string f_mode = param_or<std::string>(spec.params, "f_mode", "const");
  if (f_mode == "const") base.f_mode = FScaleMode::constant;
  else if (f_mode == "up") base.f_mode = FScaleMode::log_up;
  else if (f_mode == "down") base.f_mode = FScaleMode::log_down;
  else throw UsageError("legs-growth: f_mode must be const, up, or down");

  ExperimentResult result;
  const FirstReturnTable frt;
  std::unique_ptr<StripSampler> strip;
  if (base.L >= 2) strip = std::make_unique<StripSampler>(base.L);

  for (std::size_t cfg_idx = 0; cfg_idx < n_list.size(); ++cfg_idx) {
    GrowingLegsConfig cfg = base;
    cfg.n_legs = n_list[cfg_idx];
    try {
      cfg.validate();
    } catch (const std::invalid_argument& e) {
      throw UsageError(e.what());
    }
    const std::uint64_t horizon = cfg.horizon();
    const RngStream parent = RngStream(spec.seed, 0).substream(cfg_idx);

    AggregateCheckpoint ckpt;
    if (!spec.out.empty()) {
      ckpt.path = spec.out + ".ckpt" + std::to_string(cfg_idx);
      std::ostringstream fp;
      fp << "legs-growth:" << spec.seed << ":" << cfg.n_legs << ":" << cfg.L << ":" << cfg.c
         << ":" << f_mode << ":" << cfg.k << ":" << cfg.trials << ":" << horizon;
      ckpt.fingerprint = fp.str();
      ckpt.load();
    }
    // Chunk size: about 10^7 step-equivalents (one trial costs ~sqrt(horizon)
    // excursion draws, each standing in for ~sqrt(horizon) steps).
    const std::uint64_t chunk = std::max<std::uint64_t>(1, 10000000 / std::max<std::uint64_t>(horizon, 1) + 1);
    while (ckpt.done < cfg.trials) {
      const std::uint64_t hi = std::min(cfg.trials, ckpt.done + chunk);
      for (std::uint64_t trial = ckpt.done; trial < hi; ++trial) {
        RngStream sub = parent.substream(trial);
        const MinVisitFlags flags =
            min_visit_trial(cfg.n_legs, cfg.L, horizon, cfg.k, frt, strip.get(), sub);
        ckpt.acc_a += flags.m_event ? 1 : 0;
        ckpt.acc_b += flags.a_event ? 1 : 0;
      }
      ckpt.done = hi;
      if (ckpt.done < cfg.trials) ckpt.store();
    }
    ckpt.clear();

    const double m_est = static_cast<double>(ckpt.acc_a) / static_cast<double>(cfg.trials);
    const double a_est = static_cast<double>(ckpt.acc_b) / static_cast<double>(cfg.trials);
    const auto m_ci = proportion_ci(ckpt.acc_a, cfg.trials);
    const auto a_ci = proportion_ci(ckpt.acc_b, cfg.trials);
    Json rec;
    rec["N"] = cfg.n_legs;
    rec["L"] = cfg.L;
    rec["c"] = cfg.c;
    rec["f_mode"] = f_mode;
    rec["k"] = cfg.k;
    rec["horizon"] = horizon;
    rec["trials"] = cfg.trials;
    rec["m_estimate"] = m_est;
    rec["m_ci_low"] = m_ci.low;
    rec["m_ci_high"] = m_ci.high;
    rec["a_estimate"] = a_est;
    rec["a_ci_low"] = a_ci.low;
    rec["a_ci_high"] = a_ci.high;
    rec["reference"] = cfg.reference();
    result.records.push_back(std::move(rec));
  }
  result.meta["reference"] = "min-visit limit for growing leg counts";
  return result;
}

inline ExperimentResult run_coupon(const ExperimentSpec& spec) {
  const std::uint32_t N = param_or<std::uint32_t>(spec.params, "N", 10000);
  const std::uint32_t m = param_or<std::uint32_t>(spec.params, "m", 1);
  const std::vector<double> xs = param_vector(spec.params, "x", {-1.0, 0.0, 1.0, 2.0});
  const std::uint64_t trials = spec.trials ? spec.trials : 10000;
  const std::uint64_t balls_override =
      param_or<std::uint64_t>(spec.params, "balls_override", 0);
  if (N < 2) throw UsageError("coupon: need N >= 2");
  if (m < 1 || m > 200) throw UsageError("coupon: need m in 1..200");

  ExperimentResult result;
  std::vector<std::uint8_t> counts(N);
  for (std::size_t xi = 0; xi < xs.size(); ++xi) {
    const double x = xs[xi];
    const std::uint64_t balls = balls_override ? balls_override : coupon_balls(N, m, x);
    const RngStream parent = RngStream(spec.seed, 0).substream(xi);

    AggregateCheckpoint ckpt;
    if (!spec.out.empty()) {
      ckpt.path = spec.out + ".ckpt" + std::to_string(xi);
      std::ostringstream fp;
      fp << "coupon:" << spec.seed << ":" << N << ":" << m << ":" << x << ":" << balls << ":"
         << trials;
      ckpt.fingerprint = fp.str();
      ckpt.load();
    }
    const std::uint64_t chunk =
        std::max<std::uint64_t>(1, 10000000 / std::max<std::uint64_t>(balls, 1) + 1);
    while (ckpt.done < trials) {
      const std::uint64_t hi = std::min(trials, ckpt.done + chunk);
      for (std::uint64_t trial = ckpt.done; trial < hi; ++trial) {
        RngStream sub = parent.substream(trial);
        std::fill(counts.begin(), counts.end(), 0);
        std::uint32_t below_m = N;
        for (std::uint64_t b = 0; b < balls && below_m > 0; ++b) {
          const std::uint64_t u = sub.next_below(N);
          if (counts[u] < m && ++counts[u] == m) --below_m;
        }
        ckpt.acc_a += below_m == 0 ? 1 : 0;
      }
      ckpt.done = hi;
      if (ckpt.done < trials) ckpt.store();
    }
    ckpt.clear();

    const double est = static_cast<double>(ckpt.acc_a) / static_cast<double>(trials);
    const auto ci = proportion_ci(ckpt.acc_a, trials);
    Json rec;
    rec["N"] = N;
    rec["m"] = m;
    rec["x"] = x;
    rec["balls"] = balls;
    rec["trials"] = trials;
    rec["estimate"] = est;
    rec["ci_low"] = ci.low;
    rec["ci_high"] = ci.high;
    rec["limit_reference"] = erdos_renyi_limit(m, x);
    if (m <= 2) rec["finite_reference"] = coupon_exact_coverage(N, balls, m);
    result.records.push_back(std::move(rec));
  }
  result.meta["reference"] = "urn coverage limit exp(-e^{-x}/(m-1)!)";
  return result;
}

// Streaming spider walk for long trace runs: +-1 steps from a bit buffer, a
// fresh uniform-law leg drawn at every departure from the origin.
class StreamingSpiderWalk {
 public:
  StreamingSpiderWalk(const LegWeights& weights, RngStream walk_rng, RngStream leg_rng)
      : weights_(weights), walk_rng_(walk_rng), leg_rng_(leg_rng) {}

  SpiderState next() {
    if (value_ == 0) leg_ = weights_.sample(leg_rng_).index();
    if (bits_left_ == 0) {
      bits_ = walk_rng_.next_u64();
      bits_left_ = 64;
    }
    const bool up = bits_ & 1;
    bits_ >>= 1;
    --bits_left_;
    value_ += up ? 1 : -1;
    if (value_ == 0) return SpiderState::origin();
    return SpiderState::on_leg(static_cast<std::uint32_t>(value_ < 0 ? -value_ : value_),
                               LegId(leg_));
  }

 private:
  LegWeights weights_;
  RngStream walk_rng_;
  RngStream leg_rng_;
  std::int64_t value_ = 0;
  std::uint32_t leg_ = 1;
  std::uint64_t bits_ = 0;
  int bits_left_ = 0;
};

inline ExperimentResult run_hirsch_trace(const ExperimentSpec& spec) {
  const std::uint32_t N = param_or<std::uint32_t>(spec.params, "N", 3);
  const std::uint64_t trials = spec.trials ? spec.trials : 4;
  std::vector<double> cps =
      param_vector(spec.params, "checkpoints", {1.0e4, 1.0e5, 1.0e6, 4.0e6});
  if (N < 1) throw UsageError("hirsch-trace: need N >= 1");
  const LegWeights weights = weights_from_params(spec.params, N);
  std::vector<std::uint64_t> checkpoints;
  for (double c : cps) {
    if (c < 3) throw UsageError("hirsch-trace: checkpoints must be >= 3");
    checkpoints.push_back(static_cast<std::uint64_t>(c));
  }
  for (std::size_t i = 1; i < checkpoints.size(); ++i)
    if (checkpoints[i] <= checkpoints[i - 1])
      throw UsageError("hirsch-trace: checkpoints must be ascending");

  const RngStream parent(spec.seed, 0);
  auto trial_fn = [&](std::uint64_t, RngStream& stream) {
    StreamingSpiderWalk walk(weights, stream.substream(0), stream.substream(1));
    return rescaled_height_trace(N, checkpoints, [&]() { return walk.next(); });
  };
  const auto traces = run_trials(trials, spec.threads, parent, trial_fn);

  ExperimentResult result;
  double final_a_max = 0.0;
  for (std::uint64_t trial = 0; trial < traces.size(); ++trial) {
    for (const TracePoint& pt : traces[trial]) {
      Json rec;
      rec["trial"] = trial;
      rec["n"] = pt.n;
      for (std::uint32_t leg = 1; leg <= N; ++leg)
        rec["a_" + std::to_string(leg)] = pt.a_vector[leg - 1];
      rec["a_value"] = pt.a_value;
      rec["ranked_functional"] = pt.ranked_functional;
      result.records.push_back(std::move(rec));
      if (pt.n == checkpoints.back()) final_a_max = std::max(final_a_max, pt.a_value);
    }
  }
  result.meta["final_a_max"] = final_a_max;
  result.meta["reference"] = "iterated-logarithm admissibility scale (diagnostic)";
  return result;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dispatch.
// ---------------------------------------------------------------------------

inline ExperimentResult run(const ExperimentSpec& spec) {
  const auto start = std::chrono::steady_clock::now();
  ExperimentResult result;
  switch (spec.kind) {
    case ExperimentKind::exact_check: result = detail::run_exact_check(spec); break;
    case ExperimentKind::density_scaling: result = detail::run_density_scaling(spec); break;
    case ExperimentKind::height_dist: result = detail::run_height_dist(spec); break;
    case ExperimentKind::coupling: result = detail::run_coupling(spec); break;
    case ExperimentKind::legs_growth: result = detail::run_legs_growth(spec); break;
    case ExperimentKind::coupon: result = detail::run_coupon(spec); break;
    case ExperimentKind::hirsch_trace: result = detail::run_hirsch_trace(spec); break;
  }
  // Shared meta, placed ahead of kind-specific entries for stable output.
  Json meta = Json::object();
  meta["kind"] = to_string(spec.kind);
  meta["seed"] = spec.seed;
  meta["version"] = version_string();
  meta["params"] = spec.params;
  meta["records"] = result.records.size();
  for (auto it = result.meta.begin(); it != result.meta.end(); ++it) meta[it.key()] = *it;
  result.meta = std::move(meta);
  result.elapsed_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return result;
}

// Run, serialize to spec.out (stdout if empty), and return the result.
inline ExperimentResult run_and_emit(const ExperimentSpec& spec) {
  ExperimentResult result = run(spec);
  if (spec.out.empty()) {
    emit(result, std::cout, spec.format);
  } else {
    std::ofstream out(spec.out, std::ios::trunc | std::ios::binary);
    if (!out) throw std::runtime_error("cannot open output file: " + spec.out);
    emit(result, out, spec.format);
  }
  return result;
}

}  // namespace spider
