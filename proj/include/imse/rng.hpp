#pragma once

#include <cmath>
#include <cstdint>
#include <iterator>
#include <numbers>
#include <random>
#include <utility>

#include "imse/error.hpp"

namespace imse {

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

/// Deterministic random source. Every random operation in the library draws
/// from an explicit stream so results depend only on the seed, never on
/// platform-specific distribution implementations.
class seed_stream {
  public:
    explicit seed_stream(uint64_t seed = 0) : engine_(splitmix64(seed)) {}

    uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Uniform integer in the closed range [lo, hi].
    int64_t uniform_int(int64_t lo, int64_t hi) {
        detail::require(lo <= hi, errc::bad_range, "uniform_int with lo > hi");
        const uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
        if (span == 0) return static_cast<int64_t>(next());
        const uint64_t limit = UINT64_MAX - (UINT64_MAX % span);
        uint64_t r = next();
        while (r >= limit) r = next();
        return lo + static_cast<int64_t>(r % span);
    }

    /// Standard normal via Box-Muller (no cached second value, so the stream
    /// position only depends on the number of calls).
    double normal() {
        double u1 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Independent child stream; advances this stream by one draw.
    seed_stream split() { return seed_stream(next()); }

    template <class RandomIt>
    void shuffle(RandomIt first, RandomIt last) {
        const auto n = static_cast<int64_t>(std::distance(first, last));
        for (int64_t i = n - 1; i > 0; --i) {
            const int64_t j = uniform_int(0, i);
            using std::swap;
            swap(first[i], first[j]);
        }
    }

  private:
    std::mt19937_64 engine_;
};

} // namespace imse
