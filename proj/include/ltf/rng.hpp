#pragma once

#include <cstdint>
#include <random>
#include <string_view>
#include <vector>

namespace ltf {

// Deterministic RNG used everywhere. The normal() stream is pinned by this
// code (Marsaglia polar), not by the standard library's unspecified
// normal_distribution, so a given seed reproduces the same values on any
// build of this project.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t next_u64() { return eng_(); }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(eng_() >> 11) * 0x1.0p-53;
    }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi);

    double normal();
    std::vector<double> normal_vec(std::size_t n);

    // Fisher-Yates.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            auto j = static_cast<std::size_t>(
                uniform_int(0, static_cast<std::int64_t>(i) - 1));
            std::swap(v[i - 1], v[j]);
        }
    }

  private:
    std::mt19937_64 eng_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

// Seed-splitting rule: every component derives its stream from the global
// seed and its own name, so adding components never perturbs existing
// streams. derive = splitmix64(seed ^ fnv1a64(name)).
std::uint64_t fnv1a64(std::string_view s);
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, std::string_view component);

// Per-chain stream for parallel sampling: chain i gets
// splitmix64(base ^ (i + 1)).
std::uint64_t chain_seed(std::uint64_t base, std::uint64_t chain_index);

}  // namespace ltf
