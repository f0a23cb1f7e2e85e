#include "madv/rng.hpp"

#include <cmath>
#include <numbers>

namespace madv {

double Rng::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  // Box-Muller on (0,1] x [0,1) uniforms; u1 bounded away from zero.
  double u1 = 1.0 - uniform();
  double u2 = uniform();
  double r = std::sqrt(-2.0 * std::log(u1));
  double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

std::uint64_t Rng::derive(std::uint64_t seed, std::uint64_t stream) {
  // One splitmix scramble of the pair keeps derived streams decorrelated.
  Rng mixer(seed ^ (stream * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull));
  return mixer.next_u64();
}

}  // namespace madv
