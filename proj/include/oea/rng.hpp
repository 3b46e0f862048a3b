#pragma once

#include <cmath>
#include <cstdint>

#include <Eigen/Dense>

namespace oea {

// Deterministic generator used by the instance generators. Only +,-,*,/ and
// sqrt touch doubles, so output bytes are reproducible across platforms.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : state_(seed) {}

  std::uint64_t next_u64() {
    // splitmix64
    std::uint64_t z = (state_ += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
  }

  // Uniform in [0, 1) with 53 random bits.
  double uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

  // Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) { return next_u64() % n; }

  // Uniform direction on the unit sphere via rejection from the cube.
  Eigen::VectorXd unit_vector(int n) {
    Eigen::VectorXd v(n);
    for (;;) {
      double s = 0.0;
      for (int i = 0; i < n; ++i) {
        v(i) = uniform(-1.0, 1.0);
        s += v(i) * v(i);
      }
      if (s > 1e-4 && s <= 1.0) return v / std::sqrt(s);
    }
  }

 private:
  std::uint64_t state_;
};

}  // namespace oea
