#ifndef SEPTR_RNG_HPP
#define SEPTR_RNG_HPP

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace septr {

/// Seeded random stream with hand-rolled transforms so that results are
/// reproducible bit-for-bit for a given seed, independent of the standard
/// library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed), engine_seed_(seed) {}

  /// Derive an independent stream, e.g. per sample index.
  Rng fork(std::uint64_t stream) const {
    return Rng(seed_mix(engine_seed_, stream));
  }

  std::uint64_t next_u64() { return engine_(); }

  double uniform() {  // [0, 1)
    return double(engine_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  std::size_t uniform_index(std::size_t n) {
    return std::size_t(uniform() * double(n)) % n;
  }

  double normal() {
    // Box-Muller; one value per call keeps the stream simple.
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double truncated_normal(double stddev, double bound = 2.0) {
    double v;
    do {
      v = normal();
    } while (std::abs(v) > bound);
    return v * stddev;
  }

  /// Marsaglia-Tsang, with the alpha < 1 boost.
  double gamma(double alpha) {
    if (alpha < 1.0) {
      double u = uniform();
      if (u < 1e-300) u = 1e-300;
      return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
    }
    const double d = alpha - 1.0 / 3.0;
    const double c = 1.0 / std::sqrt(9.0 * d);
    for (;;) {
      double x, v;
      do {
        x = normal();
        v = 1.0 + c * x;
      } while (v <= 0.0);
      v = v * v * v;
      double u = uniform();
      if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
      if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v)))
        return d * v;
    }
  }

  double beta(double a, double b) {
    double x = gamma(a);
    double y = gamma(b);
    return x / (x + y);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[uniform_index(i)]);
  }

 private:
  static std::uint64_t seed_mix(std::uint64_t a, std::uint64_t b) {
    // splitmix64 finalizer over the pair
    std::uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  std::mt19937_64 engine_;
  std::uint64_t engine_seed_ = 0;
};

}  // namespace septr

#endif  // SEPTR_RNG_HPP
