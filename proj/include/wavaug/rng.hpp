#pragma once
#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace wavaug {

// Deterministic RNG with explicitly specified output mappings.
// std::mt19937_64 is pinned bit-for-bit by the standard; the distribution
// adapters in <random> are not, so bits are mapped to doubles here to keep
// streams identical across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t bits() { return eng_(); }

    // uniform in [0,1) with 53-bit resolution
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Box-Muller, cosine branch only; two fresh draws per call
    double normal() {
        double u1;
        do { u1 = uniform(); } while (u1 == 0.0);
        double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925287;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    double normal(double mean, double stddev) { return mean + stddev * normal(); }

    // unbiased integer in [0, n)
    std::uint64_t below(std::uint64_t n) {
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do { x = eng_(); } while (x >= limit);
        return x % n;
    }

    // Knuth's product method; exact and fast enough for the moderate rates
    // used by shot noise (λ ≤ ~100)
    std::uint64_t poisson(double lambda) {
        double limit = std::exp(-lambda), p = 1.0;
        std::uint64_t k = 0;
        do { ++k; p *= uniform(); } while (p > limit);
        return k - 1;
    }

    template <typename T>
    void shuffle(std::vector<T>& xs) {
        for (std::size_t i = xs.size(); i > 1; --i) std::swap(xs[i - 1], xs[below(i)]);
    }

private:
    std::mt19937_64 eng_;
};

} // namespace wavaug
