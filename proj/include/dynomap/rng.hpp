#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace dynomap {

// Deterministic, platform-independent random streams. Every consumer derives
// its own substream from (seed, tag, counters), so the order in which
// components draw numbers never couples them and results do not depend on
// thread count. std facilities (std::shuffle, distributions) are
// implementation-defined, so they are not used anywhere results must be
// reproducible.

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline uint64_t hash_combine(uint64_t a, uint64_t b) {
    return splitmix64(a ^ (0x9e3779b97f4a7c15ull + b + (a << 6) + (a >> 2)));
}

// xoshiro256** seeded via splitmix64.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t x = seed;
        for (auto& w : s_) {
            x = splitmix64(x);
            w = x;
        }
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[1] * 5, 7) * 9;
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() { return double(next_u64() >> 11) * 0x1.0p-53; }

    // Uniform in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Rejection-free modulo of a wide draw
    // is biased; use Lemire-style rejection.
    uint64_t uniform_index(uint64_t n) {
        uint64_t x = next_u64();
        __uint128_t m = (__uint128_t)x * n;
        uint64_t l = (uint64_t)m;
        if (l < n) {
            uint64_t t = (0 - n) % n;
            while (l < t) {
                x = next_u64();
                m = (__uint128_t)x * n;
                l = (uint64_t)m;
            }
        }
        return (uint64_t)(m >> 64);
    }

    // Standard normal via polar method.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = uniform(-1.0, 1.0);
            v = uniform(-1.0, 1.0);
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        have_spare_ = true;
        return u * f;
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }

    uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

// Derive a substream seed from a run seed, a component tag and counters.
inline uint64_t substream(uint64_t seed, uint64_t tag, uint64_t a = 0, uint64_t b = 0) {
    return hash_combine(hash_combine(hash_combine(seed, tag), a), b);
}

// Component tags for substream derivation.
namespace stream_tag {
inline constexpr uint64_t coords   = 0x636f6f7264ull; // "coord"
inline constexpr uint64_t init     = 0x696e6974ull;   // "init"
inline constexpr uint64_t shuffle  = 0x73687566ull;   // "shuf"
inline constexpr uint64_t dropout  = 0x64726f70ull;   // "drop"
inline constexpr uint64_t folds    = 0x666f6c64ull;   // "fold"
inline constexpr uint64_t valid    = 0x76616c69ull;   // "vali"
inline constexpr uint64_t permute  = 0x7065726dull;   // "perm"
inline constexpr uint64_t repel    = 0x726570656cull; // "repel"
} // namespace stream_tag

// Fisher-Yates with our own index draws, deterministic everywhere.
template <class T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (size_t i = v.size(); i > 1; --i) {
        const size_t j = (size_t)rng.uniform_index(i);
        std::swap(v[i - 1], v[j]);
    }
}

// In-place random permutation of 0..n-1.
inline std::vector<int> random_permutation(int n, Rng& rng) {
    std::vector<int> p(n);
    for (int i = 0; i < n; ++i) p[i] = i;
    shuffle(p, rng);
    return p;
}

} // namespace dynomap
