#pragma once

#include <cmath>
#include <cstdint>

namespace flowsynth {

// Counter-based generator: every draw is a hash of (seed, stream, counter),
// so draw sequences are reproducible and child streams can be split off
// without sharing state.
class Rng {
public:
    Rng() : Rng(0, 0) {}
    Rng(std::uint64_t seed, std::uint64_t stream = 0)
        : seed_(seed), stream_(stream), key_(derive_key(seed, stream)), counter_(0) {}

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    std::uint64_t next_u64() {
        ++counter_;
        return mix(key_ + counter_ * 0x9E3779B97F4A7C15ULL);
    }

    // Uniform in [0, 1) with 53 random bits.
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [0, 1): strictly positive, for logs inside Box-Muller.
    double next_double_pos() { return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53; }

    std::uint64_t next_below(std::uint64_t n) { return n == 0 ? 0 : next_u64() % n; }

    // Standard normal via Box-Muller; two uniforms per draw keeps the counter
    // advance independent of the values drawn.
    double next_gaussian() {
        double u1 = next_double_pos();
        double u2 = next_double();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    Rng child(std::uint64_t stream_id) const { return Rng(seed_, mix(stream_ ^ mix(stream_id + 0xA24BAED4963EE407ULL))); }

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }
    std::uint64_t counter() const { return counter_; }
    void set_counter(std::uint64_t c) { counter_ = c; }

private:
    static std::uint64_t derive_key(std::uint64_t seed, std::uint64_t stream) {
        return mix(mix(seed + 0x2545F4914F6CDD1DULL) ^ (stream * 0xD6E8FEB86659FD93ULL + 0x9E3779B97F4A7C15ULL));
    }

    std::uint64_t seed_;
    std::uint64_t stream_;
    std::uint64_t key_;
    std::uint64_t counter_;
};

}  // namespace flowsynth
