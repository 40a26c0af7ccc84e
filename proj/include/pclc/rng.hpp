#pragma once

#include <cstdint>
#include <random>

namespace pclc {

/// Seeded random stream. One engine per purpose so that changing how often one
/// consumer draws never shifts another consumer's sequence.
///
/// Algorithm: std::mt19937_64 seeded through splitmix64(seed, stream id), with
/// libstdc++'s uniform_real and normal distributions. Runs replay exactly
/// within one build; bit equality across standard libraries is not promised.
class Rng {
public:
    explicit Rng(std::uint64_t seed, std::uint64_t stream = 0) : engine_(mix(seed, stream)) {}

    double uniform() { return uniform_(engine_); }

    double normal(double mean, double sd) {
        if (sd <= 0.0) return mean;
        return mean + sd * normal_(engine_);
    }

    [[nodiscard]] static std::uint64_t mix(std::uint64_t seed, std::uint64_t stream) {
        std::uint64_t z = seed + 0x9E3779B97F4A7C15ull * (stream + 1);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
    std::uniform_real_distribution<double> uniform_{0.0, 1.0};
    std::normal_distribution<double> normal_{0.0, 1.0};
};

/// Stream ids used by the engine.
namespace stream {
inline constexpr std::uint64_t seizure = 1;
inline constexpr std::uint64_t sensing = 2;
inline constexpr std::uint64_t ecap_noise = 3;
inline constexpr std::uint64_t dose_response = 4;
} // namespace stream

} // namespace pclc
