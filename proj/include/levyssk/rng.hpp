#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <random>

namespace levyssk {

inline constexpr std::uint64_t kGolden = 0x9e3779b97f4a7c15ULL;

// splitmix64 finalizer (Stafford mix13). Stateless 64-bit permutation.
inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Seed rule shared by every experiment driver and documented in the README:
// trial t of master seed s draws its stream from mix64(s XOR golden*(t+1)).
inline std::uint64_t derive_trial_seed(std::uint64_t master_seed, std::uint64_t trial) {
    return mix64(master_seed ^ (kGolden * (trial + 1)));
}

// Random stream with portable derived draws. The engine is std::mt19937_64
// (bit-exact across standard libraries); uniforms and gaussians are mapped
// here rather than through std::*_distribution, whose outputs are
// implementation-defined.
class Stream {
public:
    explicit Stream(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // uniform on (0, 1]: ((x >> 11) + 1) * 2^-53, never zero
    double uniform01() {
        return static_cast<double>((eng_() >> 11) + 1) * 0x1.0p-53;
    }

    // standard normal, Box-Muller, two uniforms per pair, one value cached
    double gaussian() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        const double u1 = uniform01();
        const double u2 = uniform01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double th = 2.0 * std::numbers::pi * u2;
        cached_ = r * std::sin(th);
        have_cached_ = true;
        return r * std::cos(th);
    }

private:
    std::mt19937_64 eng_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace levyssk
