#pragma once

#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

namespace scribblemix {

// Counter-based generator: the value at counter i is a pure function of
// (seed, stream, i), so sequences are identical across platforms and safe to
// hand out per (purpose, image id, epoch) without shared state.
class RngStream {
 public:
  RngStream() : RngStream(0, 0) {}
  RngStream(uint64_t seed, uint64_t stream)
      : key_(mix(mix(seed) ^ mix(stream ^ 0x9E3779B97F4A7C15ull))), counter_(0) {}

  // Child stream keyed off this stream's identity, independent of its position.
  RngStream derive(uint64_t stream) const { return RngStream(key_, stream); }
  RngStream derive(uint64_t a, uint64_t b) const { return RngStream(key_ ^ mix(a), b); }

  uint64_t next_u64() { return mix(key_ + 0x9E3779B97F4A7C15ull * ++counter_); }

  uint64_t counter() const { return counter_; }

  // Uniform in [0,1), 53-bit mantissa.
  double next_double() { return double(next_u64() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

  // Uniform integer in [0, n).
  uint64_t next_below(uint64_t n) { return n ? next_u64() % n : 0; }

  // Box-Muller, cosine branch only; consumes two draws per call.
  double normal() {
    double u1 = next_double();
    double u2 = next_double();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  // Marsaglia-Tsang for shape >= 1, boosted below 1.
  double gamma(double shape) {
    if (shape < 1.0) {
      double u = next_double();
      if (u < 1e-300) u = 1e-300;
      return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
    }
    const double d = shape - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x = normal();
      double v = 1.0 + c * x;
      if (v <= 0.0) continue;
      v = v * v * v;
      double u = next_double();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u < 1e-300) u = 1e-300;
      if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

 private:
  // SplitMix64 finalizer.
  static uint64_t mix(uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
  }

  uint64_t key_;
  uint64_t counter_;
};

// Fisher-Yates shuffle driven by an RngStream, so the permutation depends
// only on the stream's key (not on std:: distribution implementations).
template <typename T>
inline void seeded_shuffle(std::vector<T>& v, RngStream rng) {
  for (size_t i = v.size(); i > 1; --i) {
    size_t j = static_cast<size_t>(rng.next_below(static_cast<uint64_t>(i)));
    std::swap(v[i - 1], v[j]);
  }
}

}  // namespace scribblemix
