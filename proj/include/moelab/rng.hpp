#pragma once

#include <cmath>
#include <cstdint>
#include <random>

namespace moe {

// All randomness in the project flows through this wrapper. std::mt19937_64 is
// bit-exact across platforms, but the std distributions are not, so the
// variate transforms are spelled out here by hand.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : gen_(scramble(seed)) {}

    std::uint64_t next_u64() { return gen_(); }

    // uniform in [0, 1) with 53 random bits
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // standard exponential via inversion; 1-u keeps the argument in (0, 1]
    double exponential() { return -std::log(1.0 - uniform()); }

    // standard normal, Box-Muller (both values consumed to keep the stream
    // position independent of caller usage patterns)
    double gaussian() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    // splitmix64, used both to whiten user seeds and to derive stream seeds
    static std::uint64_t scramble(std::uint64_t x) {
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

  private:
    std::mt19937_64 gen_;
};

// Deterministic per-trial seed derivation: trial i of a run seeded with `base`
// always sees the same stream no matter how trials are scheduled.
inline std::uint64_t derive_seed(std::uint64_t base, std::uint64_t index) {
    return Rng::scramble(base ^ Rng::scramble(index + 1));
}

} // namespace moe
