#ifndef DGVAE_RNG_HPP
#define DGVAE_RNG_HPP

#include <cmath>
#include <cstdint>
#include <string_view>
#include <vector>

namespace dgvae {

// All randomness in the project flows through these streams so that results
// are bit-reproducible across platforms; the standard <random> distributions
// are implementation-defined and therefore avoided.

inline std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

/// Counter-free pseudo-random stream (xoshiro256**), seeded via splitmix64.
/// Independent streams are derived by mixing a seed with stream tags, so any
/// (seed, tag...) pair names the same stream regardless of execution order.
class RngStream {
public:
    explicit RngStream(std::uint64_t seed) {
        std::uint64_t s = seed;
        for (auto& w : state_) w = splitmix64(s);
    }

    std::uint64_t next_u64() {
        const std::uint64_t result = rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = rotl(state_[3], 45);
        return result;
    }

    /// Uniform in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    /// Uniform in the open interval (0, 1); safe under log().
    double uniform_open() {
        return (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
    }

    double uniform_range(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (two uniforms per draw, no cached spare).
    double normal() {
        const double u1 = uniform_open();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        return r * std::cos(6.283185307179586476925286766559 * u2);
    }

    /// Gumbel(0, 1) via -log(-log(U)).
    double gumbel() { return -std::log(-std::log(uniform_open())); }

    /// Uniform integer in [0, n), n > 0. Lemire multiply-shift (no rejection).
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

private:
    static std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::uint64_t state_[4];
};

inline std::uint64_t mix_tag(std::uint64_t key, std::string_view tag) {
    std::uint64_t s = key ^ 0x6a09e667f3bcc908ull;
    for (unsigned char c : tag) {
        s ^= c;
        (void)splitmix64(s);
    }
    return splitmix64(s);
}

inline std::uint64_t mix_tag(std::uint64_t key, std::uint64_t index) {
    std::uint64_t s = key ^ (index * 0xff51afd7ed558ccdull + 0x2545f4914f6cdd1dull);
    return splitmix64(s);
}

/// Derives a named substream: derive_stream(seed, "gumbel"),
/// derive_stream(seed, "rollout", i), ...
inline RngStream derive_stream(std::uint64_t seed, std::string_view tag) {
    return RngStream(mix_tag(seed, tag));
}
inline RngStream derive_stream(std::uint64_t seed, std::string_view tag, std::uint64_t a) {
    return RngStream(mix_tag(mix_tag(seed, tag), a));
}
inline RngStream derive_stream(std::uint64_t seed, std::string_view tag, std::uint64_t a,
                               std::uint64_t b) {
    return RngStream(mix_tag(mix_tag(mix_tag(seed, tag), a), b));
}

// Fisher-Yates with an explicit stream (std::shuffle is implementation-defined).
template <typename T>
void shuffle_in_place(std::vector<T>& v, RngStream& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.uniform_int(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace dgvae

#endif  // DGVAE_RNG_HPP
