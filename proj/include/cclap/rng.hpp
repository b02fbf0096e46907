#pragma once

#include <cstdint>
#include <random>

namespace cclap {

// Deterministic RNG. All draws go through double-precision distributions so
// float and double codepaths consume the same underlying stream.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    double normal() { return normal_(gen_); }
    double uniform() { return uniform_(gen_); }

    // Uniform integer in [0, n).
    int uniform_int(int n) {
        std::uniform_int_distribution<int> d(0, n - 1);
        return d(gen_);
    }

    uint64_t next_u64() { return gen_(); }

    // Stable per-item sub-seed so items can be rendered independently.
    static uint64_t mix(uint64_t seed, uint64_t index) {
        uint64_t x = seed + 0x9e3779b97f4a7c15ULL * (index + 1);
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ULL;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebULL;
        x ^= x >> 31;
        return x;
    }

private:
    std::mt19937_64 gen_;
    std::normal_distribution<double> normal_{0.0, 1.0};
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

}  // namespace cclap
