#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace mars {

// Counter-based splitmix64 stream. Cheap to construct per detector bin, so
// noise simulation is order-independent and reproducible across platforms.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // [0, 1) with 53-bit resolution
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // standard normal via Box-Muller; draws two uniforms per call
    double gaussian() {
        double u1 = 1.0 - uniform01(); // (0, 1], keeps the log finite
        double u2 = uniform01();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
    }

    // Poisson sample; inversion below mean 30, normal approximation above.
    double poisson(double mean) {
        if (mean <= 0.0) return 0.0;
        if (mean < 30.0) {
            double u = uniform01();
            double p = std::exp(-mean);
            double cdf = p;
            double k = 0.0;
            while (u > cdf && k < 1000.0) {
                k += 1.0;
                p *= mean / k;
                cdf += p;
            }
            return k;
        }
        double k = std::floor(mean + std::sqrt(mean) * gaussian() + 0.5);
        return k < 0.0 ? 0.0 : k;
    }

private:
    std::uint64_t state_;
};

inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001B3ULL;
    }
    return h;
}

// Sub-seed for a named component; all randomness flows from one master seed.
inline std::uint64_t derive_seed(std::uint64_t master, std::string_view component) {
    CounterRng r(master ^ fnv1a64(component));
    return r.next_u64();
}

// Per-stream seed, e.g. one stream per detector bin.
inline std::uint64_t derive_stream(std::uint64_t seed, std::uint64_t index) {
    CounterRng r(seed + (index + 1) * 0x9E3779B97F4A7C15ULL);
    return r.next_u64();
}

} // namespace mars
