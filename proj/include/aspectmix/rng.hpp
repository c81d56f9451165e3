#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace aspectmix {

// Stream purposes, mixed into derived seeds so distinct uses never overlap.
enum class SeedPurpose : std::uint64_t {
    corpus_sampling = 1,
    init_noise      = 2,
    mc_likelihood   = 3,
    perplexity      = 4,
    concat          = 5,
    experiment      = 6,
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t root, SeedPurpose purpose, std::uint64_t index) {
    std::uint64_t s = splitmix64(root ^ 0xD1B54A32D192ED03ull * static_cast<std::uint64_t>(purpose));
    return splitmix64(s ^ 0xEB44ACCAB455D165ull * index);
}

// mt19937_64 engine with fixed-algorithm distributions on top, so streams are
// identical across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t raw() { return engine_(); }

    // uniform in [0, 1), 53-bit resolution
    double uniform() {
        return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
    }

    // uniform in (0, 1]
    double uniform_pos() {
        return 1.0 - uniform();
    }

    // standard normal, Box-Muller (cosine branch)
    double normal() {
        const double u1 = uniform_pos();
        const double u2 = uniform();
        constexpr double two_pi = 6.283185307179586476925286766559;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(two_pi * u2);
    }

    // Gamma(shape, 1), Marsaglia-Tsang squeeze; shapes below one are boosted.
    double gamma(double shape) {
        if (!(shape > 0.0)) {
            throw std::domain_error("Rng::gamma: shape must be positive");
        }
        if (shape < 1.0) {
            const double u = uniform_pos();
            return gamma(shape + 1.0) * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = 0.0;
            double v = 0.0;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform_pos();
            if (std::log(u) < 0.5 * x * x + d - d * v + d * std::log(v)) {
                return d * v;
            }
        }
    }

    std::vector<double> dirichlet(std::span<const double> alpha) {
        if (alpha.empty()) {
            throw std::invalid_argument("Rng::dirichlet: empty parameter vector");
        }
        std::vector<double> draw(alpha.size());
        for (;;) {
            double total = 0.0;
            for (std::size_t a = 0; a < alpha.size(); ++a) {
                draw[a] = gamma(alpha[a]);
                total += draw[a];
            }
            if (total > 0.0) {
                for (double& d : draw) {
                    // tiny shapes can underflow a component to zero, which breaks
                    // log-density consumers; keep every coordinate positive
                    d = std::max(d / total, std::numeric_limits<double>::min());
                }
                return draw;
            }
            // all gammas underflowed; extremely small shapes, try again
        }
    }

    // index with probability probs[i] / sum(probs)
    std::size_t categorical(std::span<const double> probs) {
        if (probs.empty()) {
            throw std::invalid_argument("Rng::categorical: empty weights");
        }
        double total = 0.0;
        for (double p : probs) {
            if (!(p >= 0.0)) {
                throw std::invalid_argument("Rng::categorical: negative weight");
            }
            total += p;
        }
        if (!(total > 0.0)) {
            throw std::invalid_argument("Rng::categorical: zero total weight");
        }
        const double target = uniform() * total;
        double acc = 0.0;
        for (std::size_t i = 0; i < probs.size(); ++i) {
            acc += probs[i];
            if (target < acc) {
                return i;
            }
        }
        return probs.size() - 1;
    }

private:
    std::mt19937_64 engine_;
};

}  // namespace aspectmix
