#pragma once

#include <cstdint>
#include <cstddef>
#include <vector>

namespace esgstack {

// Counter-based deterministic generator. Draw i from seed s is the SplitMix64
// finalizer applied to s + i * 0x9E3779B97F4A7C15:
//
//   z  = s + i * 0x9E3779B97F4A7C15
//   z ^= z >> 30;  z *= 0xBF58476D1CE4E5B9
//   z ^= z >> 27;  z *= 0x94D049BB133111EB
//   z ^= z >> 31
//
// The stream depends only on (seed, draw index), so any language that
// implements these three constants reproduces it bit for bit.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : seed_(seed) {}

    std::uint64_t seed() const { return seed_; }
    std::uint64_t draws() const { return counter_; }

    std::uint64_t next_u64();

    // Uniform in [0, 1) with 53 random bits.
    double uniform01();

    // Uniform in [lo, hi); lo < hi required.
    double uniform(double lo, double hi);

    // Uniform integer in [0, n); n > 0 required. Computed as next_u64() % n.
    std::size_t below(std::size_t n);

    // Fisher-Yates permutation of 0..n-1, high index down.
    std::vector<std::size_t> permutation(std::size_t n);

    // In-place Fisher-Yates shuffle, same index walk as permutation().
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) std::swap(v[i - 1], v[below(i)]);
    }

private:
    std::uint64_t seed_ = 0;
    std::uint64_t counter_ = 0;
};

} // namespace esgstack
