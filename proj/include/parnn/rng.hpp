#pragma once

#include <cstdint>
#include <string_view>

#include "parnn/math.hpp"

namespace parnn {

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t& x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return h;
}

}  // namespace detail

/// Mixes a seed with a purpose tag; used for documented stream splitting so
/// adding a consumer never perturbs the streams of existing ones.
inline std::uint64_t derive_stream_seed(std::uint64_t seed, std::string_view tag) {
    std::uint64_t x = seed ^ detail::fnv1a(tag);
    return detail::splitmix64(x);
}

/// xoshiro256++ with 256-bit state.
class Rng {
public:
    explicit Rng(std::uint64_t seed) { seed_state(seed); }

    Rng(std::uint64_t seed, std::string_view stream_tag) {
        seed_state(derive_stream_seed(seed, stream_tag));
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[0] + state_[3], 23) + state_[0];
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in the open interval (0,1).
    double uniform01() {
        const std::uint64_t bits = next_u64() >> 11;  // 53 bits
        double u = (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
        return u;
    }

    /// Standard normal via inverse-CDF transform of uniform01, so noise
    /// sequences are reproducible from seeds alone.
    double normal() { return normal_quantile(uniform01()); }

    /// Uniform integer in [0, bound).
    std::uint64_t below(std::uint64_t bound) { return next_u64() % bound; }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    void seed_state(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = detail::splitmix64(s);
    }

    std::uint64_t state_[4];
};

}  // namespace parnn
