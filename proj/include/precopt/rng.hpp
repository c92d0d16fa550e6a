// Deterministic random source for task generation: xoshiro256++ seeded
// through SplitMix64, with non-overlapping substreams via the generator's
// jump function (2^128 steps apart). One substream per purpose so that
// input sampling, teacher weights and initial weights never share draws.

#pragma once

#include <cstdint>
#include <string_view>

namespace precopt {

inline constexpr std::string_view rng_identity =
    "xoshiro256++ (splitmix64-seeded, jump substreams)";

/// Purpose tags double as substream indices.
enum class RngStream : std::uint64_t { Inputs = 0, Teacher = 1, Init = 2 };

class Rng {
public:
    explicit Rng(std::uint64_t seed, RngStream stream = RngStream::Inputs)
        : Rng(seed, static_cast<std::uint64_t>(stream)) {}

    Rng(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t sm = seed;
        for (auto& word : state_) word = splitmix64(sm);
        for (std::uint64_t i = 0; i < stream; ++i) jump();
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

    /// Uniform on [0, 1), 53 random bits.
    double uniform_unit() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    /// Uniform on [-1, 1).
    double uniform_symmetric() { return 2.0 * uniform_unit() - 1.0; }

    /// Uniform on [lo, hi).
    double uniform_range(double lo, double hi) {
        return lo + (hi - lo) * uniform_unit();
    }

    /// Advances 2^128 steps; partitions the sequence into substreams.
    void jump() {
        static constexpr std::uint64_t kJump[4] = {
            0x180ec6d33cfd0abaULL, 0xd5a61266f0c9392cULL,
            0xa9582618e03fc9aaULL, 0x39abdc4529b1661cULL};
        std::uint64_t s0 = 0, s1 = 0, s2 = 0, s3 = 0;
        for (const std::uint64_t word : kJump) {
            for (int bit = 0; bit < 64; ++bit) {
                if (word & (1ULL << bit)) {
                    s0 ^= state_[0];
                    s1 ^= state_[1];
                    s2 ^= state_[2];
                    s3 ^= state_[3];
                }
                next_u64();
            }
        }
        state_[0] = s0;
        state_[1] = s1;
        state_[2] = s2;
        state_[3] = s3;
    }

private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    static std::uint64_t splitmix64(std::uint64_t& s) {
        std::uint64_t z = (s += 0x9e3779b97f4a7c15ULL);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    std::uint64_t state_[4];
};

}  // namespace precopt
