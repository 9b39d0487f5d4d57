#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>

namespace augdiff {

// SplitMix64 stream. Counter-based: state advances by a fixed gamma and the
// output is a finalizer of the state, so streams derived from distinct seeds
// are independent and every draw is a pure function of (seed, draw index).
class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) {}

    uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double next_double() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    // uniform in {0, ..., n-1}, n >= 1
    uint64_t next_below(uint64_t n) {
        // rejection sampling to avoid modulo bias
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t v;
        do {
            v = next_u64();
        } while (v >= limit);
        return v % n;
    }

    // standard normal via Box-Muller; consumes exactly two uniforms per draw
    double next_normal() {
        double u1 = 1.0 - next_double();  // (0, 1]
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) *
               std::cos(2.0 * std::numbers::pi * u2);
    }

    // Gamma(shape, 1) via Marsaglia-Tsang; shape > 0
    double next_gamma(double shape) {
        if (shape < 1.0) {
            double u = 1.0 - next_double();
            return next_gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        double d = shape - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = next_normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = 1.0 - next_double();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v;
            }
        }
    }

    double next_beta(double a, double b) {
        double x = next_gamma(a);
        double y = next_gamma(b);
        return x / (x + y);
    }

private:
    uint64_t state_;
};

// Mixes an arbitrary list of 64-bit words into one stream seed.
inline uint64_t mix_seed(std::initializer_list<uint64_t> parts) {
    uint64_t h = 0x8e7df0b7a3156b1full;
    for (uint64_t p : parts) {
        h ^= p + 0x9e3779b97f4a7c15ull + (h << 6) + (h >> 2);
        h *= 0xff51afd7ed558ccdull;
        h ^= h >> 33;
    }
    return h;
}

// Stream purposes, kept distinct so enabling one consumer (e.g. condition
// draws) never shifts another consumer's sequence.
enum class StreamKind : uint64_t {
    Noise = 1,
    Condition = 2,
    Shuffle = 3,
    Mixup = 4,
    Pseudobag = 5,
    Init = 6,
    Data = 7,
};

inline Rng derive_stream(uint64_t global_seed, uint64_t epoch, uint64_t bag_key,
                         uint64_t instance_index, StreamKind kind) {
    return Rng(mix_seed({global_seed, epoch, bag_key, instance_index,
                         static_cast<uint64_t>(kind)}));
}

}  // namespace augdiff
