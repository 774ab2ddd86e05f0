#pragma once

#include <cmath>
#include <cstdint>

namespace mmrec::rng {

// Every random draw in the library is a pure function of (seed, stream, counters).
// One user-facing seed fans out into named streams, so changing e.g. the shuffle
// order can never silently change which negatives get sampled.
enum class Stream : std::uint64_t {
    timestamps = 1,
    param_init = 2,
    shuffle = 3,
    negatives = 4,
    eval_candidates = 5,
    validation_candidates = 6,
    synth_interactions = 7,
    synth_features = 8,
};

// splitmix64 finalizer; full-avalanche mix of one 64-bit word.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t combine(std::uint64_t h, std::uint64_t v) {
    return mix64(h ^ (v + 0x9e3779b97f4a7c15ULL + (h << 6) + (h >> 2)));
}

template <class... Rest>
std::uint64_t hash_of(std::uint64_t first, Rest... rest) {
    std::uint64_t h = mix64(first);
    ((h = combine(h, static_cast<std::uint64_t>(rest))), ...);
    return h;
}

template <class... Keys>
std::uint64_t draw(std::uint64_t seed, Stream stream, Keys... keys) {
    return hash_of(seed, static_cast<std::uint64_t>(stream), keys...);
}

// Map a 64-bit word to [0, 1).
inline double to_unit(std::uint64_t x) {
    return static_cast<double>(x >> 11) * 0x1.0p-53;
}

// Map a 64-bit word to [0, n). Modulo bias is O(n / 2^64), immaterial at the
// catalog sizes this library targets.
inline std::uint64_t to_bounded(std::uint64_t x, std::uint64_t n) {
    return x % n;
}

// Standard normal from two words (Box-Muller).
inline double to_normal(std::uint64_t a, std::uint64_t b) {
    double u1 = to_unit(a);
    double u2 = to_unit(b);
    if (u1 < 1e-300) u1 = 1e-300;
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586 * u2);
}

// Sequential generator over one stream, for code that wants an iterator-style
// source rather than explicit counters (e.g. Fisher-Yates shuffles).
class Sequence {
public:
    Sequence(std::uint64_t seed, Stream stream, std::uint64_t key = 0)
        : state_(hash_of(seed, static_cast<std::uint64_t>(stream), key)) {}

    std::uint64_t next() {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t x = state_;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
        return x ^ (x >> 31);
    }

    std::uint64_t next_bounded(std::uint64_t n) { return to_bounded(next(), n); }
    double next_unit() { return to_unit(next()); }

private:
    std::uint64_t state_;
};

}  // namespace mmrec::rng
