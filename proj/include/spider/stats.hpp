#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <stdexcept>
#include <vector>

namespace spider {

// Standard normal CDF. Accurate to ~1e-15 absolute over |x| <= 40 and built so
// that phi(-x) == 1 - phi(x) holds exactly in floating point.
inline double phi(double x) {
  if (std::isnan(x)) throw std::invalid_argument("phi: NaN input");
  const double t = 0.5 * std::erfc(std::fabs(x) / std::sqrt(2.0));
  return x < 0.0 ? t : 1.0 - t;
}

// P(|Z| > z) for a standard normal Z (z >= 0).
inline double normal_two_sided_tail(double z) {
  if (z < 0.0) throw std::invalid_argument("normal_two_sided_tail: z must be >= 0");
  return std::erfc(z / std::sqrt(2.0));
}

namespace detail {

// Inverse of phi by bisection; only used in cold paths (CI z-values).
inline double probit(double p) {
  if (!(p > 0.0 && p < 1.0)) throw std::invalid_argument("probit: p outside (0,1)");
  double lo = -40.0, hi = 40.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (phi(mid) < p)
      lo = mid;
    else
      hi = mid;
    if (hi - lo < 1e-14) break;
  }
  return 0.5 * (lo + hi);
}

// Regularized upper incomplete gamma Q(a, x); series/continued-fraction split.
inline double gamma_q(double a, double x) {
  if (a <= 0.0 || x < 0.0) throw std::invalid_argument("gamma_q: bad arguments");
  if (x == 0.0) return 1.0;
  const double gln = std::lgamma(a);
  if (x < a + 1.0) {
    // Lower series, Q = 1 - P.
    double ap = a;
    double sum = 1.0 / a;
    double del = sum;
    for (int i = 0; i < 1000; ++i) {
      ap += 1.0;
      del *= x / ap;
      sum += del;
      if (std::fabs(del) < std::fabs(sum) * 1e-16) break;
    }
    const double p = sum * std::exp(-x + a * std::log(x) - gln);
    return 1.0 - p;
  }
  // Continued fraction (modified Lentz).
  const double fpmin = std::numeric_limits<double>::min() / 1e-30;
  double b = x + 1.0 - a;
  double c = 1.0 / fpmin;
  double d = 1.0 / b;
  double h = d;
  for (int i = 1; i <= 1000; ++i) {
    const double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
    b += 2.0;
    d = an * d + b;
    if (std::fabs(d) < fpmin) d = fpmin;
    c = b + an / c;
    if (std::fabs(c) < fpmin) c = fpmin;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::fabs(del - 1.0) < 1e-16) break;
  }
  return std::exp(-x + a * std::log(x) - gln) * h;
}

}  // namespace detail

// p-value of a chi-square statistic with df degrees of freedom.
inline double chi_square_pvalue(double stat, double df) {
  if (stat < 0.0) throw std::invalid_argument("chi_square_pvalue: negative statistic");
  return detail::gamma_q(0.5 * df, 0.5 * stat);
}

// Empirical CDF over a fixed sample; evaluation is right-continuous.
class EmpiricalCdf {
 public:
  explicit EmpiricalCdf(std::vector<double> samples) : sorted_(std::move(samples)) {
    if (sorted_.empty()) throw std::invalid_argument("EmpiricalCdf: empty sample");
    std::sort(sorted_.begin(), sorted_.end());
  }

  std::size_t size() const { return sorted_.size(); }
  const std::vector<double>& sorted() const { return sorted_; }

  double operator()(double x) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), x);
    return static_cast<double>(it - sorted_.begin()) / static_cast<double>(sorted_.size());
  }

 private:
  std::vector<double> sorted_;
};

// Kolmogorov–Smirnov distance between an empirical CDF and a reference CDF,
// taking the larger of the two one-sided gaps at every sample point.
template <typename Cdf>
double ks_distance(const EmpiricalCdf& emp, Cdf&& reference) {
  const auto& xs = emp.sorted();
  const double n = static_cast<double>(xs.size());
  double d = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    const double fx = reference(xs[i]);
    if (!(fx >= 0.0 && fx <= 1.0))
      throw std::invalid_argument("ks_distance: reference CDF left [0,1]");
    d = std::max(d, fx - static_cast<double>(i) / n);
    d = std::max(d, static_cast<double>(i + 1) / n - fx);
  }
  return d;
}

struct ProportionCi {
  double low = 0.0;
  double high = 1.0;
};

// Wilson score interval for a binomial proportion.
inline ProportionCi proportion_ci(std::uint64_t successes, std::uint64_t trials,
                                  double level = 0.95) {
  if (trials == 0) throw std::invalid_argument("proportion_ci: zero trials");
  if (successes > trials) throw std::invalid_argument("proportion_ci: successes > trials");
  if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("proportion_ci: bad level");
  const double z = detail::probit(1.0 - 0.5 * (1.0 - level));
  const double n = static_cast<double>(trials);
  const double p = static_cast<double>(successes) / n;
  const double z2 = z * z;
  const double denom = 1.0 + z2 / n;
  const double center = (p + z2 / (2.0 * n)) / denom;
  const double half = z * std::sqrt(p * (1.0 - p) / n + z2 / (4.0 * n * n)) / denom;
  ProportionCi ci{std::max(0.0, center - half), std::min(1.0, center + half)};
  // At the boundaries the score interval's endpoint is exactly the boundary;
  // center - half only misses it by cancellation noise.
  if (successes == 0) ci.low = 0.0;
  if (successes == trials) ci.high = 1.0;
  return ci;
}

}  // namespace spider
