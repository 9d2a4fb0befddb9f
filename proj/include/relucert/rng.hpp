#pragma once

// Seeded random streams.
//
// Every draw in the library comes from a Stream identified by
// (master seed, purpose tag, index...).  The stream key is a splitmix64 chain
// over those words, so streams are independent of each other and adding a
// layer or a trial never perturbs the draws of earlier ones.
//
// Normals are produced by the Box-Muller transform on 53-bit uniforms taken
// from std::mt19937_64.  Both pieces are fully specified, so a seed yields
// the same numbers on every conforming standard library (unlike
// std::normal_distribution, whose algorithm is implementation-defined).

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numbers>
#include <random>

namespace relucert {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Folds a sequence of words into one 64-bit key.
inline constexpr std::uint64_t mix_seed(std::uint64_t seed, std::initializer_list<std::uint64_t> words) noexcept {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t w : words) h = splitmix64(h ^ splitmix64(w + 0x632be59bd9b4e019ULL));
    return h;
}

/// Purpose tags for stream derivation.  Values are part of the reproducibility
/// contract; append only.
enum class StreamTag : std::uint64_t {
    DataInputs = 1,
    DataLabels = 2,
    LayerWeights = 3,
    LambdaStar = 4,
    BaseRedraw = 5,
    Trial = 6,
    SweepCell = 7,
};

class Stream {
public:
    explicit Stream(std::uint64_t key) : engine_(key) {}

    Stream(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> idx = {})
        : engine_(derive(seed, tag, idx)) {}

    static std::uint64_t derive(std::uint64_t seed, StreamTag tag, std::initializer_list<std::uint64_t> idx) {
        std::uint64_t h = mix_seed(seed, {static_cast<std::uint64_t>(tag)});
        for (std::uint64_t w : idx) h = mix_seed(h, {w});
        return h;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [lo, hi].
    std::uint64_t uniform_int(std::uint64_t lo, std::uint64_t hi) {
        const std::uint64_t span = hi - lo + 1;
        if (span == 0) return engine_();
        // Rejection keeps the result unbiased.
        const std::uint64_t limit = (~std::uint64_t{0}) - ((~std::uint64_t{0}) % span);
        std::uint64_t x;
        do { x = engine_(); } while (x >= limit);
        return lo + x % span;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1;
        do { u1 = uniform(); } while (u1 == 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double t = 2.0 * std::numbers::pi * u2;
        spare_ = r * std::sin(t);
        has_spare_ = true;
        return r * std::cos(t);
    }

private:
    std::mt19937_64 engine_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace relucert
