#pragma once

#include <cmath>
#include <cstdint>

namespace c2a {

// splitmix64. Hand-rolled so that streams are bit-identical across platforms
// and standard libraries; std distributions make no such guarantee.
struct SplitMix64 {
    std::uint64_t state = 0;

    SplitMix64() = default;
    explicit SplitMix64(std::uint64_t seed) : state(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    std::size_t index(std::size_t n) { return static_cast<std::size_t>(next_u64() % n); }

    // Box-Muller; one value per call, the pair's second half is dropped to
    // keep the stream position independent of call parity.
    double gaussian() {
        double u1 = uniform();
        double u2 = uniform();
        if (u1 < 0x1.0p-60) u1 = 0x1.0p-60;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * 3.14159265358979323846 * u2);
    }

    // Independent child stream: hash the parent's output with a salt.
    SplitMix64 split(std::uint64_t salt) {
        SplitMix64 mix(next_u64() ^ (salt * 0x9e3779b97f4a7c15ULL));
        mix.next_u64();
        return mix;
    }
};

// Derive a stream from (seed, salt) without advancing any parent state.
inline SplitMix64 stream_for(std::uint64_t seed, std::uint64_t salt) {
    SplitMix64 s(seed ^ (salt * 0xd1342543de82ef95ULL) ^ 0x6a09e667f3bcc909ULL);
    s.next_u64();
    return s;
}

}  // namespace c2a
