#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "cscl/common.hpp"

namespace cscl {

/// Deterministic random source. mt19937_64 is bit-exact across platforms by
/// the standard; the distribution transforms below are pinned by hand because
/// std::*_distribution output is implementation-defined.
class Rng {
public:
    explicit Rng(uint64_t seed) : engine_(seed), seed_(seed) {}

    uint64_t next_u64() { return engine_(); }

    /// Uniform double in [0, 1) with 53 random bits.
    double u01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). Rejection sampling, no modulo bias.
    uint64_t uniform_int(uint64_t n) {
        require(n > 0, "uniform_int: n must be positive");
        const uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform double in [lo, hi).
    double uniform(double lo, double hi) { return lo + (hi - lo) * u01(); }

    /// Standard normal via Box-Muller.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        const double u1 = (static_cast<double>(engine_() >> 11) + 1.0) * 0x1.0p-53;
        const double u2 = u01();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (size_t i = v.size(); i > 1; --i) {
            const size_t j = static_cast<size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// k distinct values from [0, n), in random order.
    std::vector<size_t> sample_without_replacement(size_t n, size_t k) {
        require(k <= n, "sample_without_replacement: k > n");
        std::vector<size_t> pool(n);
        for (size_t i = 0; i < n; ++i) pool[i] = i;
        for (size_t i = 0; i < k; ++i) {
            const size_t j = i + static_cast<size_t>(uniform_int(n - i));
            std::swap(pool[i], pool[j]);
        }
        pool.resize(k);
        return pool;
    }

    /// Derives an independent stream from this rng's seed, e.g. one per epoch.
    /// Depends only on (seed, salt), not on how much this stream was consumed.
    Rng derive(uint64_t salt) const { return Rng(mix(seed_, salt)); }

    uint64_t seed() const { return seed_; }

    static uint64_t mix(uint64_t seed, uint64_t salt) {
        uint64_t z = seed ^ (salt + 0x9e3779b97f4a7c15ull);
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
    uint64_t seed_;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

}  // namespace cscl
