#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <utility>
#include <vector>

namespace cohort {

/// SplitMix64 (Steele, Lea & Flood 2014). The state is the seed itself; each
/// draw adds 0x9E3779B97F4A7C15 and mixes. Chosen so other implementations
/// can reproduce generated corpora and samples bit for bit.
class SplitMix64 {
public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, n) by rejection: draws below (2^64 mod n) are discarded,
    /// the rest reduced modulo n. n must be > 0.
    std::uint64_t below(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            auto x = next();
            if (x >= threshold)
                return x % n;
        }
    }

    /// Uniform in [lo, hi], inclusive.
    std::int64_t between(std::int64_t lo, std::int64_t hi) {
        return lo + static_cast<std::int64_t>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    bool chance(std::uint64_t numerator, std::uint64_t denominator) { return below(denominator) < numerator; }

    template <typename T>
    const T& pick(const std::vector<T>& items) {
        return items[below(items.size())];
    }

    /// Fisher-Yates from the front: position i swaps with i + below(n - i).
    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = 0; i + 1 < items.size(); ++i)
            std::swap(items[i], items[i + below(items.size() - i)]);
    }

private:
    std::uint64_t state_;
};

/// First min(k, n) elements of a partial Fisher-Yates pass over `items`,
/// in draw order.
template <typename T>
std::vector<T> sample_without_replacement(std::vector<T> items, std::size_t k, std::uint64_t seed) {
    SplitMix64 rng(seed);
    auto m = std::min(k, items.size());
    for (std::size_t i = 0; i < m; ++i)
        std::swap(items[i], items[i + rng.below(items.size() - i)]);
    items.resize(m);
    return items;
}

} // namespace cohort
