#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <span>

#include "psephos/common.hpp"

namespace psephos {

inline std::uint64_t splitmix64(std::uint64_t& state) {
    std::uint64_t z = (state += 0x9E3779B97F4A7C15ULL);
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

// Seeded generator with hand-rolled distributions. The std:: distribution
// objects are implementation-defined, so using them would tie reproducibility
// to a particular standard library; everything here is fully specified.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    // Independent stream addressed by (seed, index). Pre-assigning stream
    // indices to work items keeps parallel results schedule-independent.
    static Rng substream(std::uint64_t seed, std::uint64_t index) {
        std::uint64_t s = seed;
        std::uint64_t a = splitmix64(s);
        s ^= index * 0xD1342543DE82EF95ULL + 0x2545F4914F6CDD1DULL;
        std::uint64_t b = splitmix64(s);
        return Rng(a ^ (b + 0x9E3779B97F4A7C15ULL));
    }

    std::uint64_t next_u64() { return eng_(); }

    // Uniform on [0, 1), 53-bit resolution.
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), rejection-corrected.
    std::uint64_t uniform_int(std::uint64_t n) {
        if (n == 0) throw DomainError("uniform_int: n must be positive");
        std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
        std::uint64_t x;
        do {
            x = eng_();
        } while (x >= limit);
        return x % n;
    }

    // Box-Muller (cosine branch only, so one draw costs two uniforms and the
    // stream advance is input-independent).
    double normal() {
        double u1 = 1.0 - uniform();
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925287 * u2);
    }

    double exponential() { return -std::log(1.0 - uniform()); }

    // Marsaglia-Tsang; the alpha < 1 case boosts through alpha + 1.
    double gamma(double alpha) {
        if (alpha <= 0.0) throw DomainError("gamma: alpha must be positive");
        if (alpha < 1.0) {
            double u = 1.0 - uniform();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        double d = alpha - 1.0 / 3.0;
        double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            double u = 1.0 - uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    // Symmetric Dirichlet via normalized Gamma(alpha, 1) draws.
    void dirichlet(double alpha, std::span<double> out) {
        double total = 0.0;
        for (double& z : out) {
            z = gamma(alpha);
            total += z;
        }
        if (total <= 0.0) {
            // Underflow of every component; fall back to the barycenter.
            for (double& z : out) z = 1.0 / static_cast<double>(out.size());
            return;
        }
        for (double& z : out) z /= total;
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(uniform_int(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 eng_;
};

}  // namespace psephos
