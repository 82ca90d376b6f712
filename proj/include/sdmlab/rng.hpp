#pragma once

#include <cstdint>
#include <random>
#include <string>

namespace sdmlab {

/// Deterministic named RNG stream. Every stochastic component owns its own
/// stream derived from (run seed, stream name), so reordering unrelated draws
/// cannot perturb reproducibility.
class RngStream {
public:
    RngStream() : RngStream(0, "default") {}

    RngStream(std::uint64_t seed, const std::string& name)
        : engine_(mix(seed, fnv1a(name))) {}

    std::mt19937_64& engine() { return engine_; }

    double uniform(double lo = 0.0, double hi = 1.0) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }

    double normal(double mean = 0.0, double stddev = 1.0) {
        return std::normal_distribution<double>(mean, stddev)(engine_);
    }

    // uniform integer in [0, n)
    std::size_t index(std::size_t n) {
        return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
    }

    RngStream fork(const std::string& child) {
        return RngStream(engine_(), child);
    }

private:
    static std::uint64_t fnv1a(const std::string& s) {
        std::uint64_t h = 14695981039346656037ull;
        for (unsigned char c : s) {
            h ^= c;
            h *= 1099511628211ull;
        }
        return h;
    }

    static std::uint64_t mix(std::uint64_t a, std::uint64_t b) {
        std::uint64_t x = a ^ (b + 0x9e3779b97f4a7c15ull + (a << 6) + (a >> 2));
        x ^= x >> 30;
        x *= 0xbf58476d1ce4e5b9ull;
        x ^= x >> 27;
        x *= 0x94d049bb133111ebull;
        x ^= x >> 31;
        return x;
    }

    std::mt19937_64 engine_;
};

} // namespace sdmlab
