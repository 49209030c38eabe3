#pragma once

#include <array>
#include <cstdint>
#include <string_view>
#include <vector>

namespace batchflip {

// Algorithm identifier recorded in reports and manifests so intervals can be
// reproduced on any machine.
inline constexpr std::string_view kRngAlgorithm = "splitmix64+xoshiro256ss";

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    std::uint64_t z = x;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// Deterministic sub-stream seeds: parallel and serial execution draw the
// same numbers because every work item derives its seed from (seed, index)
// alone.
constexpr std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
    return splitmix64(seed ^ splitmix64(index + 1));
}

constexpr std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t a,
                                 std::uint64_t b) {
    return sub_seed(sub_seed(seed, a), b);
}

class Xoshiro256ss {
  public:
    explicit Xoshiro256ss(std::uint64_t seed) {
        std::uint64_t x = seed;
        for (auto& word : state_) {
            x = splitmix64(x);
            word = x;
        }
    }

    std::uint64_t next() {
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

    // Uniform on [0,1) with 53 bits of precision.
    double next_double() {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    // Uniform on [0, n) via rejection sampling; portable and unbiased.
    std::uint64_t bounded(std::uint64_t n) {
        const std::uint64_t threshold = (0 - n) % n;
        for (;;) {
            const std::uint64_t r = next();
            if (r >= threshold) return r % n;
        }
    }

  private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }
    std::array<std::uint64_t, 4> state_{};
};

// Fisher-Yates, deterministic for a given seed.
template <typename T>
void seeded_shuffle(std::vector<T>& items, std::uint64_t seed) {
    Xoshiro256ss rng(seed);
    for (std::size_t i = items.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.bounded(i));
        using std::swap;
        swap(items[i - 1], items[j]);
    }
}

}  // namespace batchflip
