#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace glocnav {

// Seeded random stream with portable uniform/normal draws. std::normal_distribution
// is implementation-defined, so the draws are built directly from the engine to
// keep rollouts byte-reproducible.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Uniform in [0, 1).
    double uniform() {
        return (engine_() >> 11) * (1.0 / 9007199254740992.0);  // 53-bit mantissa
    }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Standard normal via Box-Muller; one cached deviate.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Integer in [0, n).
    std::uint64_t next_below(std::uint64_t n) {
        // Rejection-free modulo is fine here; n is tiny relative to 2^64.
        return engine_() % n;
    }

    // Independent child stream; used to hand each parallel episode its own rng.
    Rng substream(std::uint64_t index) const {
        std::uint64_t s = seed_mix_ ^ (0x9e3779b97f4a7c15ull * (index + 1));
        Rng child(s);
        child.set_mix(s * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull);
        return child;
    }

    explicit Rng(std::uint64_t seed, bool)  // internal
        : engine_(seed) {}

private:
    friend Rng make_root_rng(std::uint64_t);
    std::mt19937_64 engine_;
    std::uint64_t seed_mix_ = 0;
    double cached_ = 0.0;
    bool has_cached_ = false;

public:
    void set_mix(std::uint64_t m) { seed_mix_ = m; }
};

inline Rng make_root_rng(std::uint64_t seed) {
    Rng r(seed);
    r.set_mix(seed * 0xd1342543de82ef95ull + 0x2545f4914f6cdd1dull);
    return r;
}

}  // namespace glocnav
