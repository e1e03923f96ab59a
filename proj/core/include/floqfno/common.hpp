#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace floqfno {

/// Caller violated an argument precondition.
struct InvalidArgument : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Input data violated a stated contract (e.g. a non-Hermitian matrix where
/// a Hermitian one is required).
struct ContractViolation : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// A numerical self-check failed beyond tolerance.
struct NumericalInconsistency : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Training loss became non-finite.
struct TrainingDiverged : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// File-level failures, discriminated so callers can map them to exit codes.
struct IoError : std::runtime_error {
  enum class Kind { Open, Truncated, Checksum, Version, Format };
  IoError(Kind k, const std::string& msg) : std::runtime_error(msg), kind(k) {}
  Kind kind;
};

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t& state) {
  std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}
}  // namespace detail

/// Deterministic counter-seeded PRNG (xoshiro256++). Hand-rolled draws so
/// dataset bytes do not depend on the standard library's distribution
/// implementations. One stream per (seed, sample index, purpose) makes
/// parallel generation order-independent.
class RngStream {
 public:
  explicit RngStream(std::uint64_t seed) { reseed(seed); }
  RngStream(std::uint64_t seed, std::uint64_t stream, std::uint64_t purpose) {
    std::uint64_t h = seed;
    detail::splitmix64(h);
    h ^= 0xd1b54a32d192ed03ULL * (stream + 1);
    detail::splitmix64(h);
    h ^= 0x8cb92ba72f3d8dd7ULL * (purpose + 1);
    reseed(detail::splitmix64(h));
  }

  std::uint64_t next_u64() {
    const std::uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
    const std::uint64_t t = s_[1] << 17;
    s_[2] ^= s_[0];
    s_[3] ^= s_[1];
    s_[1] ^= s_[2];
    s_[0] ^= s_[3];
    s_[2] ^= t;
    s_[3] = rotl(s_[3], 45);
    return result;
  }

  /// Uniform on [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform on [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Standard normal via Box-Muller (second value cached).
  double normal() {
    if (have_cached_) {
      have_cached_ = false;
      return cached_;
    }
    double u1 = uniform();
    while (u1 <= 0.0) u1 = uniform();
    const double u2 = uniform();
    const double r = std::sqrt(-2.0 * std::log(u1));
    const double two_pi = 6.283185307179586476925286766559;
    cached_ = r * std::sin(two_pi * u2);
    have_cached_ = true;
    return r * std::cos(two_pi * u2);
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t limit = ~std::uint64_t{0} - (~std::uint64_t{0} % n);
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
  }

 private:
  void reseed(std::uint64_t seed) {
    std::uint64_t h = seed;
    for (auto& s : s_) s = detail::splitmix64(h);
    have_cached_ = false;
  }
  static std::uint64_t rotl(std::uint64_t x, int k) {
    return (x << k) | (x >> (64 - k));
  }

  std::uint64_t s_[4];
  bool have_cached_ = false;
  double cached_ = 0.0;
};

/// Stream purposes used by datagen; fixed ids keep seeding stable across
/// releases.
enum class RngPurpose : std::uint64_t {
  Couplings = 1,
  DriveAmplitudes = 2,
  ParallelField = 3,
  ProductState = 4,
  Partition = 5,
  WeightInit = 6,
  Batching = 7,
  SharedState = 8,
};

}  // namespace floqfno
