#pragma once

#include <cmath>
#include <cstdint>

namespace axwin {

// Counter-based 64-bit generator (splitmix64). The state advances by a
// fixed increment and the output is a bijective hash of the state, so the
// value stream depends only on the seed and the number of draws.
class Rng {
  public:
    explicit Rng(std::uint64_t seed = 0) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via the Marsaglia polar method (sqrt is exact under
    // IEEE-754; log is the only libm dependency).
    double normal() {
        for (;;) {
            double u = 2.0 * uniform() - 1.0;
            double v = 2.0 * uniform() - 1.0;
            double s = u * u + v * v;
            if (s > 0.0 && s < 1.0) {
                return u * std::sqrt(-2.0 * std::log(s) / s);
            }
        }
    }

    // Normal(0, std) restricted to +-2 std by rejection.
    double truncated_normal(double std_dev) {
        for (;;) {
            double z = normal();
            if (z >= -2.0 && z <= 2.0) return z * std_dev;
        }
    }

  private:
    std::uint64_t state_;
};

}  // namespace axwin
