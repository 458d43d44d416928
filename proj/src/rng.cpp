#include "esgstack/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace esgstack {

std::uint64_t Rng::next_u64() {
    ++counter_;
    std::uint64_t z = seed_ + counter_ * 0x9E3779B97F4A7C15ULL;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

double Rng::uniform01() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) {
    if (!(lo < hi)) {
        throw std::invalid_argument("Rng::uniform: requires lo < hi, got [" +
                                    std::to_string(lo) + ", " + std::to_string(hi) + ")");
    }
    if (!std::isfinite(lo) || !std::isfinite(hi)) {
        throw std::invalid_argument("Rng::uniform: non-finite bound");
    }
    double v = lo + uniform01() * (hi - lo);
    if (v >= hi) v = std::nextafter(hi, lo);
    return v;
}

std::size_t Rng::below(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("Rng::below: n must be positive");
    }
    return static_cast<std::size_t>(next_u64() % static_cast<std::uint64_t>(n));
}

std::vector<std::size_t> Rng::permutation(std::size_t n) {
    std::vector<std::size_t> p(n);
    for (std::size_t i = 0; i < n; ++i) p[i] = i;
    for (std::size_t i = n; i > 1; --i) {
        const std::size_t j = below(i);
        std::swap(p[i - 1], p[j]);
    }
    return p;
}

} // namespace esgstack
