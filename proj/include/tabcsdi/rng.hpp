#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string_view>

namespace tabcsdi {

// Deterministic RNG used everywhere. Gaussians come from Box-Muller on top of
// mt19937_64 so that streams do not depend on the standard library's
// distribution implementations.
class Rng {
public:
    explicit Rng(uint64_t seed) : gen_(seed) {}

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    // uniform integer in [0, n), n >= 1
    uint64_t integer(uint64_t n) {
        // rejection sampling, unbiased
        uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        uint64_t x;
        do {
            x = gen_();
        } while (x >= limit);
        return x % n;
    }

    double normal() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        while (u1 == 0.0) u1 = uniform();
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double theta = 6.283185307179586476925286766559 * u2;
        spare_ = r * std::sin(theta);
        has_spare_ = true;
        return r * std::cos(theta);
    }

private:
    std::mt19937_64 gen_;
    bool has_spare_ = false;
    double spare_ = 0.0;
};

namespace detail {
inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline uint64_t fnv1a(std::string_view s) {
    uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}
} // namespace detail

// Counter-based derivation: one master seed fans out into independent streams
// for split/mask/init/sampler without overlap.
inline uint64_t derive_seed(uint64_t master, std::string_view purpose, uint64_t counter = 0) {
    uint64_t h = detail::splitmix64(master ^ detail::fnv1a(purpose));
    return detail::splitmix64(h + 0x632be59bd9b4e019ULL * (counter + 1));
}

} // namespace tabcsdi
