#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace brm {

// Seeded generator with a fixed Gaussian algorithm (Marsaglia polar).
// std::normal_distribution is implementation-defined, so curves produced with
// it would not be reproducible across standard libraries; this one is pinned.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  // uniform in [0, 1), 53-bit resolution
  double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  // uniform integer in [0, n), n > 0; unbiased enough for n << 2^64
  int uniform_int(int n) {
    return static_cast<int>((static_cast<unsigned __int128>(gen_()) *
                             static_cast<uint64_t>(n)) >> 64);
  }

  double gaussian() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, q;
    do {
      u = 2.0 * uniform() - 1.0;
      v = 2.0 * uniform() - 1.0;
      q = u * u + v * v;
    } while (q >= 1.0 || q == 0.0);
    const double f = std::sqrt(-2.0 * std::log(q) / q);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  // Derives a decorrelated seed for a named sub-stream (splitmix64 finalizer).
  static uint64_t mix(uint64_t seed, uint64_t stream) {
    uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
  }

 private:
  std::mt19937_64 gen_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

// Named sub-streams of one experiment seed. Keeping them separate means e.g.
// changing the batch sampler cannot perturb the generated trajectory.
enum Stream : uint64_t {
  kStreamTrajectory = 1,
  kStreamInit = 2,
  kStreamBatch = 3,
  kStreamResample = 4,
  kStreamDualInit = 5,
  kStreamProbe = 6,
  kStreamOracle = 7,
};

}  // namespace brm
