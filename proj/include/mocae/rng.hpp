#pragma once
// Deterministic random source. Distribution mapping is done by hand so that
// streams are stable across standard library implementations.

#include <cmath>
#include <cstdint>
#include <random>

namespace mocae {

class Rng {
public:
  explicit Rng(std::uint64_t seed) : eng_(seed), seed_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  // Uniform in [0, 1).
  double uniform() {
    return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Inclusive integer range.
  std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<std::int64_t>(eng_() % span);
  }

  // Standard normal via Box-Muller.
  double normal() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    while (u1 <= 1e-300) u1 = uniform();
    double r = std::sqrt(-2.0 * std::log(u1));
    double a = 6.283185307179586476925286766559 * u2;
    spare_ = r * std::sin(a);
    have_spare_ = true;
    return r * std::cos(a);
  }

  bool bernoulli(double p) { return uniform() < p; }

  // Derive an independent stream, e.g. one per phantom case.
  Rng fork(std::uint64_t salt) const {
    std::uint64_t s = seed_ ^ (salt * 0x9e3779b97f4a7c15ull) ^ 0x6a09e667f3bcc909ull;
    s ^= s >> 30; s *= 0xbf58476d1ce4e5b9ull;
    s ^= s >> 27; s *= 0x94d049bb133111ebull;
    s ^= s >> 31;
    return Rng(s);
  }

private:
  std::mt19937_64 eng_;
  std::uint64_t seed_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace mocae
