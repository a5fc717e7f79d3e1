#include "nfgp/random.hpp"

#include <cmath>
#include <numbers>

namespace nfgp {

namespace {
constexpr double kTwoPow53Inv = 1.0 / 9007199254740992.0;
}

double Rng::uniform01() { return static_cast<double>(engine_() >> 11) * kTwoPow53Inv; }

double Rng::uniform(double low, double high) { return low + (high - low) * uniform01(); }

double Rng::normal() {
  if (has_cached_) {
    has_cached_ = false;
    return cached_normal_;
  }
  const double u1 = static_cast<double>((engine_() >> 11) + 1) * kTwoPow53Inv;
  const double u2 = uniform01();
  const double radius = std::sqrt(-2.0 * std::log(u1));
  const double angle = 2.0 * std::numbers::pi * u2;
  cached_normal_ = radius * std::sin(angle);
  has_cached_ = true;
  return radius * std::cos(angle);
}

}  // namespace nfgp
