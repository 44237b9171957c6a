#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>

namespace fbsde {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Counter-based stream keyed by (global seed, path index, window index).
/// Each draw hashes a fresh counter through splitmix64, so substreams are
/// independent of scheduling order and thread count. Copy freely; streams
/// are plain values.
class CounterRng {
public:
    CounterRng(std::uint64_t seed, std::uint64_t path, std::uint64_t window)
        : key_(mix3(seed, path, window)), counter_(0) {}

    std::uint64_t next_u64() {
        return detail::splitmix64(key_ ^ detail::splitmix64(counter_++));
    }

    /// Uniform in (0,1), never returning an exact endpoint.
    double uniform() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    /// Standard normal via Box-Muller (one value per call; the pair's
    /// second member is discarded to keep the stream position simple).
    double normal() {
        const double u1 = uniform();
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Poisson count by multiplicative inversion; exact for the moderate
    /// means (intensity * dt) used throughout.
    std::uint64_t poisson(double mean) {
        if (mean <= 0.0) return 0;
        // Chunk large means so exp(-mean) does not underflow.
        std::uint64_t count = 0;
        while (mean > 500.0) {
            count += poisson(500.0);
            mean -= 500.0;
        }
        const double limit = std::exp(-mean);
        double prod = uniform();
        while (prod > limit) {
            ++count;
            prod *= uniform();
        }
        return count;
    }

private:
    static std::uint64_t mix3(std::uint64_t a, std::uint64_t b,
                              std::uint64_t c) {
        std::uint64_t h = detail::splitmix64(a);
        h = detail::splitmix64(h ^ b);
        h = detail::splitmix64(h ^ c);
        return h;
    }

    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace fbsde
