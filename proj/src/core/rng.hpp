#pragma once

#include <cstdint>
#include <random>
#include <string_view>

namespace prism {

/// Derive an independent stream seed from a base seed and a purpose tag, so
/// e.g. weight init and sample shuffling never share a stream.
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    std::uint64_t h = base ^ 0x9e3779b97f4a7c15ULL;
    for (char ch : tag) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(ch));
        h *= 0x100000001b3ULL;
    }
    h ^= h >> 33;
    h *= 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return h;
}

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}
    Rng(std::uint64_t base, std::string_view tag) : engine_(derive_seed(base, tag)) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal(double mean, double stddev) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }
    int uniform_int(int lo, int hi) { // inclusive bounds
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }
    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

} // namespace prism
