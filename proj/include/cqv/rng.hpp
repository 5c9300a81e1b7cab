#pragma once

#include <cmath>
#include <cstdint>

namespace cqv {

// splitmix64; used both as a stream splitter and to expand seeds.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic per-path seed derived from (master_seed, path_index).
// Paths can be simulated in any order / on any thread and still reproduce.
inline uint64_t split_seed(uint64_t master_seed, uint64_t stream_index) {
    uint64_t s = master_seed ^ (0x9e3779b97f4a7c15ULL * (stream_index + 1));
    uint64_t a = splitmix64(s);
    uint64_t b = splitmix64(s);
    return a ^ (b << 1);
}

// xoshiro256++ with Box-Muller normals. We avoid std::normal_distribution on
// purpose: its output is implementation-defined, and the determinism contract
// covers the exact byte stream.
class Rng {
public:
    explicit Rng(uint64_t seed) {
        uint64_t sm = seed;
        for (auto& si : s_) si = splitmix64(sm);
        have_spare_ = false;
    }

    uint64_t next_u64() {
        const uint64_t result = rotl(s_[0] + s_[3], 23) + s_[0];
        const uint64_t t = s_[1] << 17;
        s_[2] ^= s_[0];
        s_[3] ^= s_[1];
        s_[1] ^= s_[2];
        s_[0] ^= s_[3];
        s_[2] ^= t;
        s_[3] = rotl(s_[3], 45);
        return result;
    }

    // Uniform in (0, 1]; never returns 0 so log() below is safe.
    double next_uniform() {
        return static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    }

    double next_normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = next_uniform();
        const double u2 = next_uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        have_spare_ = true;
        return r * std::cos(theta);
    }

private:
    static uint64_t rotl(uint64_t x, int k) { return (x << k) | (x >> (64 - k)); }
    uint64_t s_[4];
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace cqv
