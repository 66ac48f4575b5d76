#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace daa {

inline constexpr const char* kToolVersion = "0.1.0";

// Error taxonomy. Everything user-facing is a DaaError; subclasses name the
// failing subsystem so CLI output stays machine-parsable.
struct DaaError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ConfigError : DaaError {
  using DaaError::DaaError;
};
struct ArchiveError : DaaError {
  using DaaError::DaaError;
};
struct GeometryError : DaaError {
  using DaaError::DaaError;
};
struct ModelError : DaaError {
  using DaaError::DaaError;
};
struct TrainError : DaaError {
  using DaaError::DaaError;
};

// Deterministic RNG. All distributions are implemented in-house so sampled
// sequences depend only on the seed, not on the standard library vendor.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // [0, 1)
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // Box-Muller; the sine branch is discarded so one call consumes exactly
  // two raw draws.
  double normal(double mu = 0.0, double sigma = 1.0) {
    double u1 = uniform();
    double u2 = uniform();
    if (u1 <= 0.0) u1 = 0x1.0p-53;
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    return mu + sigma * r * std::cos(two_pi * u2);
  }

  // [0, n)
  int64_t randint(int64_t n) {
    if (n <= 0) return 0;
    int64_t v = static_cast<int64_t>(uniform() * static_cast<double>(n));
    return v >= n ? n - 1 : v;
  }

  template <class T>
  void shuffle(std::vector<T>& v) {
    for (size_t i = v.size(); i > 1; --i) {
      size_t j = static_cast<size_t>(randint(static_cast<int64_t>(i)));
      std::swap(v[i - 1], v[j]);
    }
  }

  template <class T>
  const T& pick(const std::vector<T>& v) {
    return v[static_cast<size_t>(randint(static_cast<int64_t>(v.size())))];
  }

 private:
  std::mt19937_64 gen_;
};

// splitmix64 finalizer; used to derive independent child seeds.
inline uint64_t seed_mix(uint64_t a, uint64_t b) {
  uint64_t z = a + 0x9e3779b97f4a7c15ULL * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

inline uint64_t seed_mix(uint64_t a, uint64_t b, uint64_t c) {
  return seed_mix(seed_mix(a, b), c);
}

inline uint64_t fnv1a64(const void* data, size_t n, uint64_t h = 0xcbf29ce484222325ULL) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

std::string to_hex(uint64_t v, int digits = 16);

}  // namespace daa
