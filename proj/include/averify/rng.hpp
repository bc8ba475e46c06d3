#pragma once

#include <cstdint>
#include <random>
#include <vector>

namespace averify {

/// Deterministic random source used everywhere seeds appear.
///
/// The generator is std::mt19937_64, whose output sequence is fixed by the
/// C++ standard, so identical seeds give identical streams on every
/// platform. Floating-point draws use the 53-bit mantissa mapping below
/// rather than std::uniform_real_distribution, whose output is
/// implementation-defined.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next_u64() { return gen_(); }

    /// Uniform in [0, 1): top 53 bits of one draw scaled by 2^-53.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    /// Uniform integer in [0, n), unbiased via rejection sampling. n > 0.
    std::uint64_t below(std::uint64_t n);

    /// Fisher-Yates shuffle driven by below(); stable across platforms.
    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Decorrelates substreams: splitmix64 applied to seed xor stream id.
    /// Used to give datasets, layers, and experiment samples independent
    /// streams derived from one user-facing seed.
    static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream);

private:
    std::mt19937_64 gen_;
};

}  // namespace averify
