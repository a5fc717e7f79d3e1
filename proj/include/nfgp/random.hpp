#pragma once

#include <cstdint>
#include <random>

namespace nfgp {

/// Seedable generator with a fixed, platform-independent output sequence.
///
/// Raw bits come from std::mt19937_64, whose sequence is fully specified by
/// the C++ standard. The standard distributions are implementation-defined,
/// so uniforms and normals are derived here explicitly:
///   uniform01  = (bits >> 11) * 2^-53                       in [0, 1)
///   normal     = Box-Muller on u1 = (bits >> 11 + 1) * 2^-53 in (0, 1]
///                and u2 = uniform01; the sine branch is cached for the
///                next call.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01();
  double uniform(double low, double high);
  double normal();

 private:
  std::mt19937_64 engine_;
  double cached_normal_ = 0.0;
  bool has_cached_ = false;
};

}  // namespace nfgp
