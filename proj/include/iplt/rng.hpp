#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <vector>

namespace iplt {

// Deterministic random source. The engine is std::mt19937_64, whose output
// sequence is pinned by the C++ standard, and all distribution transforms
// are implemented here (53-bit uniforms, Box-Muller normals, Lemire bounded
// ints) so that a given seed yields the identical stream on every platform.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

    std::uint64_t seed() const { return seed_; }

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1) with 53 bits of precision.
    double uniform01() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }

    // Standard normal via Box-Muller; the spare value is cached.
    double normal();

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // Uniform integer in [0, n). n must be nonzero.
    std::uint64_t below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    // State round-trips through a text form (engine state plus the cached
    // Box-Muller spare) for checkpointing.
    std::string serialize() const;
    void restore(const std::string& state);

    bool operator==(const Rng& other) const {
        return engine_ == other.engine_ && has_spare_ == other.has_spare_ &&
               (!has_spare_ || spare_ == other.spare_);
    }

private:
    std::uint64_t seed_ = 0;
    std::mt19937_64 engine_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace iplt
