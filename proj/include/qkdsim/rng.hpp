#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

namespace qkdsim {

// SplitMix64 step, used to derive independent sub-stream seeds.
inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream) {
    std::uint64_t s = master ^ (0xa0761d6478bd642fULL * (stream + 1));
    return splitmix64(s);
}

// Seeded generator with its own distribution transforms. std::mt19937_64 output
// is pinned by the standard; the transforms below are pinned by this file, so a
// (seed, call sequence) pair reproduces bit-identical draws on any build.
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t u64() { return eng_(); }

    // Uniform double in [0, 1) with 53 random bits.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased-enough index draw via 128-bit multiply (bias < n / 2^64).
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(eng_()) * n) >> 64);
    }

    bool bernoulli(double p) {
        if (p <= 0.0) return false;
        if (p >= 1.0) return true;
        return uniform() < p;
    }

    // Box-Muller with the usual pair cache.
    double normal() {
        if (have_cache_) {
            have_cache_ = false;
            return cache_;
        }
        double u1 = 0.0;
        do {
            u1 = uniform();
        } while (u1 <= 0.0);
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cache_ = r * std::sin(a);
        have_cache_ = true;
        return r * std::cos(a);
    }

    double normal(double mean, double sigma) { return mean + sigma * normal(); }

    // Knuth product method below 30, normal approximation above. The large-mean
    // branch feeds only aggregate count draws where the tails are irrelevant.
    std::uint64_t poisson(double lambda) {
        if (lambda <= 0.0) return 0;
        if (lambda < 30.0) {
            const double limit = std::exp(-lambda);
            double prod = uniform();
            std::uint64_t n = 0;
            while (prod > limit) {
                prod *= uniform();
                ++n;
            }
            return n;
        }
        const double x = std::round(normal(lambda, std::sqrt(lambda)));
        return x <= 0.0 ? 0 : static_cast<std::uint64_t>(x);
    }

  private:
    std::mt19937_64 eng_;
    double cache_ = 0.0;
    bool have_cache_ = false;
};

// In-place Fisher-Yates, pinned here rather than delegated to std::shuffle so
// the permutation sequence does not depend on the standard library build.
template <typename T>
void shuffle(std::vector<T>& v, Rng& rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        const std::size_t j = static_cast<std::size_t>(rng.below(i));
        std::swap(v[i - 1], v[j]);
    }
}

}  // namespace qkdsim
