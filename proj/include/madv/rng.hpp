#pragma once

#include <cstdint>

namespace madv {

/// Deterministic splitmix64 generator with Box-Muller normals. The stream is
/// fully specified by this file, so identical seeds reproduce identical draws
/// on every platform.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
  }

  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  /// Standard normal via Box-Muller; the pair's second value is cached.
  double normal();

  /// Derives an independent stream seed from a base seed and stream tag.
  static std::uint64_t derive(std::uint64_t seed, std::uint64_t stream);

 private:
  std::uint64_t state_ = 0;
  bool has_spare_ = false;
  double spare_ = 0.0;
};

// Stream tags for the seed-derivation scheme. Keeping them in one place makes
// the data-hygiene contract (disjoint corpora) auditable.
namespace streams {
inline constexpr std::uint64_t kRealTrain = 0x01;
inline constexpr std::uint64_t kRealVal = 0x02;
inline constexpr std::uint64_t kRealTest = 0x03;
inline constexpr std::uint64_t kFakeTrain = 0x11;
inline constexpr std::uint64_t kFakeVal = 0x12;
inline constexpr std::uint64_t kFakeTest = 0x13;
inline constexpr std::uint64_t kAttackSet = 0x21;
inline constexpr std::uint64_t kGanInit = 0x31;
inline constexpr std::uint64_t kGanTrain = 0x32;
inline constexpr std::uint64_t kDetectorInit = 0x41;
inline constexpr std::uint64_t kDetectorTrain = 0x42;
inline constexpr std::uint64_t kFeatureNet = 0x51;
}  // namespace streams

}  // namespace madv
