#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace selnet {

// Stream tags: one master seed per trial, independent streams derived per purpose.
enum class Stream : std::uint64_t {
    Split = 1,
    Init = 2,
    Noise = 3,
    Shuffle = 4,
};

// splitmix64 finalizer; decorrelates master^tag into a fresh seed.
inline std::uint64_t derive_seed(std::uint64_t master, Stream stream) {
    std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (static_cast<std::uint64_t>(stream) + 1);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

// mt19937_64 wrapper with a portable uniform: (x >> 11) * 2^-53 gives the same
// double sequence on every platform, unlike std::uniform_real_distribution.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    double uniform01() {  // [0, 1)
        return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Fisher-Yates; index j from next_u64() % (i+1) — fine for our sizes.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(next_u64() % i);
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
};

}  // namespace selnet
