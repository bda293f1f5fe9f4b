#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>

namespace spider {

namespace detail {

inline constexpr std::uint64_t golden_gamma = 0x9E3779B97F4A7C15ULL;

// SplitMix64 finalizer: a 64-bit mixing permutation.
inline constexpr std::uint64_t mix64(std::uint64_t z) {
  z ^= z >> 30;
  z *= 0xBF58476D1CE4E5B9ULL;
  z ^= z >> 27;
  z *= 0x94D049BB133111EBULL;
  z ^= z >> 31;
  return z;
}

// 128-layer ziggurat tables for the standard normal (Marsaglia–Tsang layout,
// rescaled to 57-bit signed integers: magnitude < 2^56).
struct ZigguratTables {
  static constexpr double r = 3.442619855899;
  static constexpr double m1 = 7.2057594037927936e16;  // 2^56
  std::array<std::uint64_t, 128> k{};
  std::array<double, 128> w{};
  std::array<double, 128> f{};

  ZigguratTables() {
    const double vn = 9.91256303526217e-3;
    double dn = r;
    double tn = dn;
    const double q = vn / std::exp(-0.5 * dn * dn);
    k[0] = static_cast<std::uint64_t>((dn / q) * m1);
    k[1] = 0;
    w[0] = q / m1;
    w[127] = dn / m1;
    f[0] = 1.0;
    f[127] = std::exp(-0.5 * dn * dn);
    for (int i = 126; i >= 1; --i) {
      dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
      k[i + 1] = static_cast<std::uint64_t>((dn / tn) * m1);
      tn = dn;
      f[i] = std::exp(-0.5 * dn * dn);
      w[i] = dn / m1;
    }
  }
};

inline const ZigguratTables& ziggurat_tables() {
  static const ZigguratTables t;
  return t;
}

}  // namespace detail

// Counter-based random stream: every draw is a pure function of
// (master_seed, stream_id, counter), so trials can be generated independently
// and in parallel with results that do not depend on scheduling or thread
// count. Value-semantic and cheap to copy.
class RngStream {
 public:
  explicit RngStream(std::uint64_t master_seed, std::uint64_t stream_id = 0)
      : master_seed_(master_seed),
        stream_id_(stream_id),
        base_(derive_base(master_seed, stream_id)),
        counter_(0) {}

  std::uint64_t master_seed() const { return master_seed_; }
  std::uint64_t stream_id() const { return stream_id_; }
  std::uint64_t counter() const { return counter_; }

  // Independent child stream; `child` is typically a trial index or a role tag.
  RngStream substream(std::uint64_t child) const {
    return RngStream(master_seed_,
                     detail::mix64(stream_id_ ^ (0x94D049BB133111EBULL +
                                                 child * detail::golden_gamma)));
  }

  std::uint64_t next_u64() {
    ++counter_;
    return detail::mix64(base_ + counter_ * detail::golden_gamma);
  }

  // Uniform double in [0, 1), 53 random bits.
  double next_double() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  // Uniform double in (0, 1): rejects the (probability 2^-53) zero draw.
  double next_double_pos() {
    for (;;) {
      double u = next_double();
      if (u > 0.0) return u;
    }
  }

  // Uniform integer in [0, n). Lemire multiply-then-reject; deterministic.
  std::uint64_t next_below(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("next_below: n must be positive");
    unsigned __int128 m =
        static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
    auto lo = static_cast<std::uint64_t>(m);
    if (lo < n) {
      const std::uint64_t threshold = (0 - n) % n;
      while (lo < threshold) {
        m = static_cast<unsigned __int128>(next_u64()) * static_cast<unsigned __int128>(n);
        lo = static_cast<std::uint64_t>(m);
      }
    }
    return static_cast<std::uint64_t>(m >> 64);
  }

  bool next_bernoulli(double p) { return next_double() < p; }

  // Standard normal draw via the 128-layer ziggurat.
  double next_normal() {
    const auto& t = detail::ziggurat_tables();
    for (;;) {
      const std::uint64_t u = next_u64();
      const unsigned i = static_cast<unsigned>(u & 127u);
      const std::int64_t h = static_cast<std::int64_t>(u) >> 7;  // signed, |h| <= 2^56
      const std::uint64_t mag = static_cast<std::uint64_t>(h < 0 ? -h : h);
      if (mag < t.k[i]) return static_cast<double>(h) * t.w[i];
      if (i == 0) {
        // Tail beyond r: Marsaglia's exponential-rejection tail sampler.
        double x, y;
        do {
          x = -std::log(next_double_pos()) / detail::ZigguratTables::r;
          y = -std::log(next_double_pos());
        } while (y + y < x * x);
        const double v = detail::ZigguratTables::r + x;
        return h >= 0 ? v : -v;
      }
      const double x = static_cast<double>(h) * t.w[i];
      if (t.f[i] + next_double() * (t.f[i - 1] - t.f[i]) < std::exp(-0.5 * x * x))
        return x;
    }
  }

 private:
  static std::uint64_t derive_base(std::uint64_t seed, std::uint64_t id) {
    return detail::mix64(seed ^ detail::mix64(id * detail::golden_gamma + 0xD1B54A32D192ED03ULL));
  }

  std::uint64_t master_seed_;
  std::uint64_t stream_id_;
  std::uint64_t base_;
  std::uint64_t counter_;
};

}  // namespace spider
