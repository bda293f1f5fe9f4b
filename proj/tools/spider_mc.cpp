// spider_mc: command-line front end for the spider-walk experiment library.
//
// One subcommand-style --kind per experiment family; all randomness flows from
// --seed, output is CSV or JSON-lines, and a fixed (flags, seed) pair yields
// byte-identical output files at any --threads value.
//
// Exit codes: 0 success, 2 usage error, 3 runtime invariant violation.

#include <exception>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spider/spider.hpp"

namespace {

std::vector<double> parse_number_list(const std::string& text, const char* flag) {
  std::vector<double> out;
  std::string token;
  std::stringstream ss(text);
  while (std::getline(ss, token, ',')) {
    if (token.empty()) continue;
    try {
      std::size_t pos = 0;
      const double v = std::stod(token, &pos);
      if (pos != token.size()) throw std::invalid_argument(token);
      out.push_back(v);
    } catch (const std::exception&) {
      throw spider::UsageError(std::string(flag) + ": cannot parse '" + token + "'");
    }
  }
  if (out.empty()) throw spider::UsageError(std::string(flag) + ": empty list");
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"spider_mc — Monte Carlo experiments on random walks on a spider"};
  app.set_version_flag("--version", std::string("spider_mc ") + spider::version_string());

  std::string kind_str;
  std::uint64_t seed = 1;
  std::uint64_t trials = 0;
  unsigned threads = 0;
  std::string out_path;
  std::string format_str = "csv";

  app.add_option("--kind", kind_str,
                 "experiment kind: exact-check | density-scaling | height-dist | coupling | "
                 "legs-growth | coupon | hirsch-trace")
      ->required();
  app.add_option("--seed", seed, "master seed (default 1)");
  app.add_option("--trials", trials, "trial count (0 = kind default)");
  app.add_option("--threads", threads,
                 "worker threads (0 = SPIDER_MC_THREADS env or hardware default)");
  app.add_option("--out", out_path, "output file (default stdout)");
  app.add_option("--format", format_str, "csv | jsonl (default csv)");

  // Kind-specific knobs; unused ones are ignored by the other kinds.
  std::string n_list = "";  // one value or comma list (legs-growth sweeps)
  std::string weight_list = "";
  std::string y_grid = "";
  std::string checkpoint_list = "";
  std::string f_mode = "const";
  std::string x_list = "";
  double c_value = 1.0, t_value = 1.0, x_value = 0.5, y_value = 0.5, dt = 1e-4;
  double horizon_factor = 1.125;
  std::uint64_t n_value = 0, n_target = 0, balls_override = 0, horizon_override = 0;
  std::uint32_t L = 1, k = 1, m = 1;
  int n_max = 6, r_max = 4;
  bool relax_regime = false;

  app.add_option("--N", n_list, "leg count (legs-growth accepts a comma list)");
  app.add_option("--p", weight_list, "comma list of leg weights (default uniform)");
  app.add_option("--L", L, "target height (legs-growth)");
  app.add_option("--c", c_value, "horizon constant c (legs-growth)");
  app.add_option("--fN-mode", f_mode, "horizon factor f(N): const | up | down");
  app.add_option("--k", k, "required visits per leg (legs-growth)");
  app.add_option("--m", m, "required balls per urn (coupon)");
  app.add_option("--x", x_list, "comma list of x offsets (coupon) or x height (density)");
  app.add_option("--y", y_value, "start/end height in sqrt(n) units (density-scaling)");
  app.add_option("--t", t_value, "time parameter (density-scaling)");
  app.add_option("--n", n_value, "walk length (density-scaling, height-dist)");
  app.add_option("--y-grid", y_grid, "comma list of CDF evaluation points (height-dist)");
  app.add_option("--checkpoints", checkpoint_list,
                 "comma list of step checkpoints (coupling, hirsch-trace)");
  app.add_option("--dt", dt, "Brownian grid spacing (coupling)");
  app.add_option("--n-target", n_target, "embedded steps per trial (coupling)");
  app.add_option("--horizon-factor", horizon_factor, "Brownian horizon / n-target (coupling)");
  app.add_option("--balls-override", balls_override, "fixed ball count (coupon)");
  app.add_option("--horizon-override", horizon_override, "fixed horizon (legs-growth)");
  app.add_option("--n-max", n_max, "max half-step count (exact-check)");
  app.add_option("--r-max", r_max, "max site radius (exact-check)");
  app.add_flag("--relax-regime", relax_regime, "allow L > N/ln N (legs-growth)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;  // --help/--version exit 0; parse failures are usage errors
  }

  try {
    spider::ExperimentSpec spec;
    spec.kind = spider::kind_from_string(kind_str);
    spec.seed = seed;
    spec.trials = trials;
    spec.threads = threads;
    spec.out = out_path;
    spec.format = spider::format_from_string(format_str);

    spider::Json& params = spec.params;
    if (!n_list.empty()) {
      const auto ns = parse_number_list(n_list, "--N");
      if (ns.size() == 1) {
        params["N"] = static_cast<std::uint64_t>(ns[0]);
      } else {
        std::vector<std::uint64_t> v;
        for (double d : ns) v.push_back(static_cast<std::uint64_t>(d));
        params["N"] = v;
      }
    }
    if (!weight_list.empty()) params["p"] = parse_number_list(weight_list, "--p");
    if (!y_grid.empty()) params["y_grid"] = parse_number_list(y_grid, "--y-grid");
    if (!checkpoint_list.empty())
      params["checkpoints"] = parse_number_list(checkpoint_list, "--checkpoints");
    if (!x_list.empty()) {
      const auto xs = parse_number_list(x_list, "--x");
      if (spec.kind == spider::ExperimentKind::coupon) params["x"] = xs;
      else params["x"] = xs.front();
    }
    if (app.count("--L")) params["L"] = L;
    if (app.count("--c")) params["c"] = c_value;
    if (app.count("--fN-mode")) params["f_mode"] = f_mode;
    if (app.count("--k")) params["k"] = k;
    if (app.count("--m")) params["m"] = m;
    if (app.count("--y")) params["y"] = y_value;
    if (app.count("--t")) params["t"] = t_value;
    if (app.count("--n")) params["n"] = n_value;
    if (app.count("--dt")) params["dt"] = dt;
    if (app.count("--n-target")) params["n_target"] = n_target;
    if (app.count("--horizon-factor")) params["horizon_factor"] = horizon_factor;
    if (app.count("--balls-override")) params["balls_override"] = balls_override;
    if (app.count("--horizon-override")) params["horizon_override"] = horizon_override;
    if (app.count("--n-max")) params["n_max"] = n_max;
    if (app.count("--r-max")) params["r_max"] = r_max;
    if (relax_regime) params["enforce_regime"] = false;

    const spider::ExperimentResult result = spider::run_and_emit(spec);
    std::cerr << "spider_mc: kind=" << spider::to_string(spec.kind) << " seed=" << spec.seed
              << " records=" << result.records.size() << " elapsed=" << result.elapsed_seconds
              << "s\n";
    if (!result.ok) {
      std::cerr << "spider_mc: invariant violation: " << result.failure << "\n";
      return 3;
    }
    return 0;
  } catch (const spider::UsageError& e) {
    std::cerr << "spider_mc: usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    // Parameter validation raised inside the library is still a usage problem.
    std::cerr << "spider_mc: usage error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "spider_mc: runtime error: " << e.what() << "\n";
    return 3;
  }
}
