#pragma once

#include <cstdint>
#include <cmath>
#include <string_view>
#include <vector>

namespace gti {

// Counter-based generator: output depends only on (key, counter), so any
// draw can be reproduced without replaying the stream. Streams are derived
// by hashing a label into the key; there is no global state anywhere.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : key_(mix(seed ^ 0x9e3779b97f4a7c15ull)) {}

    Rng derive(std::string_view label) const {
        std::uint64_t h = key_;
        for (char c : label) h = mix(h ^ static_cast<std::uint8_t>(c));
        return Rng(h, 0);
    }
    Rng derive(std::uint64_t n) const { return Rng(mix(key_ ^ mix(n + 0x6a09e667f3bcc909ull)), 0); }

    std::uint64_t next_u64() { return mix(key_ + 0x9e3779b97f4a7c15ull * ++counter_); }

    // uniform in [0, 1)
    double next_double() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n)
    std::uint64_t next_below(std::uint64_t n) {
        // 128-bit multiply keeps the mapping unbiased enough for data generation
        // while staying branch-free and reproducible.
        return static_cast<std::uint64_t>((static_cast<__uint128_t>(next_u64()) * n) >> 64);
    }

    double next_gaussian() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = next_double(), u2 = next_double();
        while (u1 <= 1e-300) u1 = next_double();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(a);
        have_spare_ = true;
        return r * std::cos(a);
    }

    void fill_gaussian(double* out, std::size_t n, double stddev = 1.0) {
        for (std::size_t i = 0; i < n; ++i) out[i] = stddev * next_gaussian();
    }

    std::uint64_t key() const { return key_; }

private:
    Rng(std::uint64_t key, std::uint64_t counter) : key_(key), counter_(counter) {}

    static std::uint64_t mix(std::uint64_t x) {
        // splitmix64 finalizer
        x += 0x9e3779b97f4a7c15ull;
        x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
        x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
        return x ^ (x >> 31);
    }

    std::uint64_t key_ = 0;
    std::uint64_t counter_ = 0;
    bool have_spare_ = false;
    double spare_ = 0.0;
};

} // namespace gti
