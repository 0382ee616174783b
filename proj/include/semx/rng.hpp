// Deterministic random streams. All randomness in the project flows through
// RngStream so runs are reproducible bit-for-bit from a single master seed.
#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace semx {

// FNV-1a over bytes; used for config hashes and other stable fingerprints.
inline std::uint64_t fnv1a64(const std::string& s) {
  std::uint64_t h = 1469598103934665603ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ULL;
  }
  return h;
}

// splitmix64 finalizer, used as a stable seed mixer.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

// Stable derivation of sub-seeds from a master seed and up to three tags.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
  std::uint64_t h = mix64(master ^ 0x5851f42d4c957f2dULL);
  h = mix64(h ^ a);
  h = mix64(h ^ b);
  h = mix64(h ^ c);
  return h;
}

// mt19937_64 with hand-rolled uniform/gaussian transforms. The standard
// distributions are implementation-defined, so we avoid them to keep draws
// identical across standard libraries.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) : seed_(seed), eng_(seed) {}

  std::uint64_t seed() const { return seed_; }

  // (0, 1]
  double uniform() { return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // inclusive range
  int uniform_int(int lo, int hi) {
    const int n = hi - lo + 1;
    int k = static_cast<int>(std::floor(uniform() * n));
    if (k >= n) k = n - 1;
    return lo + k;
  }

  // Box-Muller; fixed consumption of two uniforms per pair.
  double gaussian() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    const double u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double th = 2.0 * std::numbers::pi * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  double gaussian(double mean, double stddev) { return mean + stddev * gaussian(); }

  // Independent child stream; depends only on (seed, tag), not on how much
  // of this stream has been consumed.
  RngStream fork(std::uint64_t tag) const { return RngStream(derive_seed(seed_, tag)); }
  RngStream fork(std::uint64_t a, std::uint64_t b) const {
    return RngStream(derive_seed(seed_, a, b));
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      const std::size_t j = static_cast<std::size_t>(uniform_int(0, static_cast<int>(i) - 1));
      std::swap(v[i - 1], v[j]);
    }
  }

 private:
  std::uint64_t seed_;
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace semx
