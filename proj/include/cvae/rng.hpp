#pragma once

#include <cstdint>
#include <random>

namespace cvae {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

// Seeded RNG with cheap derived substreams so that per-instance / per-batch
// sampling stays reproducible regardless of evaluation order.
class Rng {
   public:
    explicit Rng(std::uint64_t seed) : key_(splitmix64(seed)), engine_(key_) {}

    double uniform(double lo, double hi) {
        return std::uniform_real_distribution<double>(lo, hi)(engine_);
    }
    double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
    std::uint64_t next_u64() { return engine_(); }
    int uniform_int(int lo, int hi) {  // inclusive bounds
        return std::uniform_int_distribution<int>(lo, hi)(engine_);
    }

    // Substream keyed by this stream's key and up to three indices.
    Rng derive(std::uint64_t a, std::uint64_t b = 0, std::uint64_t c = 0) const {
        std::uint64_t h = key_;
        h = splitmix64(h ^ a);
        h = splitmix64(h ^ b);
        h = splitmix64(h ^ c);
        return Rng(h);
    }

    std::mt19937_64& engine() { return engine_; }

   private:
    std::uint64_t key_;
    std::mt19937_64 engine_;
};

}  // namespace cvae
