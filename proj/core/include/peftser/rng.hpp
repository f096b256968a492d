#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace peftser {

// Seeded random source that owns its sampling transforms, so a given seed
// always yields the same stream regardless of standard-library internals.
class Rng {
  public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    uint64_t raw() { return gen_(); }

    // Uniform double in [lo, hi).
    double uniform(double lo = 0.0, double hi = 1.0) {
        const double u = static_cast<double>(gen_() >> 11) * 0x1.0p-53;
        return lo + (hi - lo) * u;
    }

    // Standard normal via Box-Muller, scaled to (mean, stddev).
    double normal(double mean = 0.0, double stddev = 1.0) {
        if (have_spare_) {
            have_spare_ = false;
            return mean + stddev * spare_;
        }
        double u1 = uniform();
        while (u1 <= 0.0) {
            u1 = uniform();
        }
        const double u2 = uniform();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double theta = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(theta);
        have_spare_ = true;
        return mean + stddev * radius * std::cos(theta);
    }

    // Uniform integer in [0, n).
    int64_t uniform_int(int64_t n) {
        return n <= 1 ? 0 : static_cast<int64_t>(gen_() % static_cast<uint64_t>(n));
    }

    // Uniform integer in [lo, hi] inclusive.
    int64_t uniform_int(int64_t lo, int64_t hi) { return lo + uniform_int(hi - lo + 1); }

  private:
    std::mt19937_64 gen_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace peftser
