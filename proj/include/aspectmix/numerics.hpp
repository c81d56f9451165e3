#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace aspectmix {

// Digamma. Bernoulli asymptotic series after shifting the argument to >= 10.
inline double digamma(double x) {
    if (!(x > 0.0)) {
        throw std::domain_error("digamma: argument must be positive");
    }
    double acc = 0.0;
    while (x < 10.0) {
        acc -= 1.0 / x;
        x += 1.0;
    }
    const double r  = 1.0 / x;
    const double r2 = r * r;
    // sum_k B_{2k}/(2k x^{2k}), eight terms
    const double series =
        r2 * (1.0 / 12.0 -
        r2 * (1.0 / 120.0 -
        r2 * (1.0 / 252.0 -
        r2 * (1.0 / 240.0 -
        r2 * (1.0 / 132.0 -
        r2 * (691.0 / 32760.0 -
        r2 * (1.0 / 12.0 -
        r2 * (3617.0 / 8160.0))))))));
    return acc + std::log(x) - 0.5 * r - series;
}

// Trigamma, same construction as digamma.
inline double trigamma(double x) {
    if (!(x > 0.0)) {
        throw std::domain_error("trigamma: argument must be positive");
    }
    double acc = 0.0;
    while (x < 10.0) {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    const double r  = 1.0 / x;
    const double r2 = r * r;
    // 1/x + 1/(2x^2) + sum_k B_{2k}/x^{2k+1}
    const double series =
        r2 * r * (1.0 / 6.0 -
        r2 * (1.0 / 30.0 -
        r2 * (1.0 / 42.0 -
        r2 * (1.0 / 30.0 -
        r2 * (5.0 / 66.0 -
        r2 * (691.0 / 2730.0 -
        r2 * (7.0 / 6.0)))))));
    return acc + r + 0.5 * r2 + series;
}

// ln Gamma(x). Stirling series after shifting to >= 10.
inline double log_gamma(double x) {
    if (!(x > 0.0)) {
        throw std::domain_error("log_gamma: argument must be positive");
    }
    double acc = 0.0;
    while (x < 10.0) {
        acc -= std::log(x);
        x += 1.0;
    }
    constexpr double half_log_two_pi = 0.91893853320467274178;
    const double r  = 1.0 / x;
    const double r2 = r * r;
    // sum_k B_{2k} / (2k(2k-1) x^{2k-1})
    const double series =
        r * (1.0 / 12.0 -
        r2 * (1.0 / 360.0 -
        r2 * (1.0 / 1260.0 -
        r2 * (1.0 / 1680.0 -
        r2 * (1.0 / 1188.0 -
        r2 * (691.0 / 360360.0 -
        r2 * (1.0 / 156.0 -
        r2 * (3617.0 / 122400.0))))))));
    return acc + (x - 0.5) * std::log(x) - x + half_log_two_pi + series;
}

// ln sum_i exp(x_i), stable under large magnitudes; -inf entries carry zero weight.
inline double log_sum_exp(std::span<const double> xs) {
    if (xs.empty()) {
        throw std::invalid_argument("log_sum_exp: empty input");
    }
    const double m = *std::max_element(xs.begin(), xs.end());
    if (!std::isfinite(m)) {
        return m;  // all -inf (or a +inf/nan dominates)
    }
    double s = 0.0;
    for (double x : xs) {
        s += std::exp(x - m);
    }
    return m + std::log(s);
}

inline double log_sum_exp(const std::vector<double>& xs) {
    return log_sum_exp(std::span<const double>(xs));
}

// Parameters of a Dirichlet distribution; every entry strictly positive.
struct DirichletParams {
    std::vector<double> values;

    DirichletParams() = default;
    explicit DirichletParams(std::vector<double> v) : values(std::move(v)) { validate(); }

    std::size_t size() const { return values.size(); }
    double sum() const { return std::accumulate(values.begin(), values.end(), 0.0); }

    void validate() const {
        if (values.empty()) {
            throw std::invalid_argument("DirichletParams: needs at least one component");
        }
        for (double v : values) {
            if (!(v > 0.0) || !std::isfinite(v)) {
                throw std::invalid_argument("DirichletParams: entries must be positive and finite");
            }
        }
    }
};

inline std::vector<double> dirichlet_mean(const DirichletParams& g) {
    g.validate();
    const double total = g.sum();
    std::vector<double> mean(g.size());
    for (std::size_t a = 0; a < g.size(); ++a) {
        mean[a] = g.values[a] / total;
    }
    return mean;
}

// Log density of D(lambda | g) with respect to the simplex measure.
// Conventions at the boundary: a zero coordinate contributes 0 when its
// parameter is exactly 1, -inf when it is > 1, +inf when it is < 1.
inline double dirichlet_log_pdf(const DirichletParams& g, std::span<const double> lambda) {
    if (lambda.size() != g.size()) {
        throw std::invalid_argument("dirichlet_log_pdf: dimension mismatch");
    }
    double lp = log_gamma(g.sum());
    for (std::size_t a = 0; a < g.size(); ++a) {
        lp -= log_gamma(g.values[a]);
        const double e = g.values[a] - 1.0;
        if (lambda[a] > 0.0) {
            lp += e * std::log(lambda[a]);
        } else if (e > 0.0) {
            return -std::numeric_limits<double>::infinity();
        } else if (e < 0.0) {
            return std::numeric_limits<double>::infinity();
        }
    }
    return lp;
}

// First and second moments of the density D(lambda|g) * (sum_a p_a lambda_a) / Z,
// Z = sum_a p_a g_a / sum_a g_a.  Closed forms:
//   m_a  = g_a (p_a + S) / (S (G+1)),          S = sum_b p_b g_b, G = sum_b g_b
//   m2_a = g_a (g_a+1)(2 p_a + S) / (S (G+1)(G+2))
struct TiltedMoments {
    std::vector<double> mean;
    std::vector<double> second;
    double normalizer = 0.0;
};

inline TiltedMoments dirichlet_tilted_moments(const DirichletParams& g,
                                              std::span<const double> word_probs) {
    g.validate();
    if (word_probs.size() != g.size()) {
        throw std::invalid_argument("dirichlet_tilted_moments: dimension mismatch");
    }
    const std::size_t n = g.size();
    const double total = g.sum();
    double weighted = 0.0;
    for (std::size_t a = 0; a < n; ++a) {
        if (word_probs[a] < 0.0) {
            throw std::invalid_argument("dirichlet_tilted_moments: negative probability");
        }
        weighted += word_probs[a] * g.values[a];
    }
    if (!(weighted > 0.0)) {
        throw std::invalid_argument("dirichlet_tilted_moments: tilt has zero mass");
    }
    TiltedMoments out;
    out.normalizer = weighted / total;
    out.mean.resize(n);
    out.second.resize(n);
    for (std::size_t a = 0; a < n; ++a) {
        const double ga = g.values[a];
        out.mean[a]   = ga * (word_probs[a] + weighted) / (weighted * (total + 1.0));
        out.second[a] = ga * (ga + 1.0) * (2.0 * word_probs[a] + weighted) /
                        (weighted * (total + 1.0) * (total + 2.0));
    }
    return out;
}

// Finds a Dirichlet matching the mean and total variance of the tilted density.
// Returns nullopt when the variance ratio is degenerate (the caller skips the word).
inline std::optional<DirichletParams>
dirichlet_moment_match(const DirichletParams& g_old, std::span<const double> word_probs) {
    if (g_old.size() == 1) {
        // one-point simplex: the tilt is constant, nothing to refit
        return g_old;
    }
    const TiltedMoments mm = dirichlet_tilted_moments(g_old, word_probs);
    double num = 0.0;
    double den = 0.0;
    for (std::size_t a = 0; a < g_old.size(); ++a) {
        num += mm.mean[a] - mm.second[a];
        den += mm.second[a] - mm.mean[a] * mm.mean[a];
    }
    if (!(den > 1e-12 * std::abs(num))) {
        return std::nullopt;
    }
    const double precision = num / den;
    if (!(precision > 0.0) || !std::isfinite(precision)) {
        return std::nullopt;
    }
    std::vector<double> fitted(g_old.size());
    for (std::size_t a = 0; a < g_old.size(); ++a) {
        fitted[a] = precision * mm.mean[a];
        if (!(fitted[a] > 0.0)) {
            return std::nullopt;
        }
    }
    return DirichletParams(std::move(fitted));
}

// Inverse of digamma via Newton iterations.
inline double inverse_digamma(double y) {
    double x = (y >= -2.22) ? std::exp(y) + 0.5 : -1.0 / (y + 0.5772156649015329);
    for (int it = 0; it < 50; ++it) {
        const double f = digamma(x) - y;
        if (std::abs(f) <= 1e-13 * std::max(1.0, std::abs(y))) {
            break;
        }
        double step = f / trigamma(x);
        double next = x - step;
        while (next <= 0.0) {
            step *= 0.5;
            next = x - step;
        }
        x = next;
    }
    return x;
}

// Average per-document Dirichlet log-likelihood at alpha, with suff_stats the
// across-document means of E[ln lambda_a].
inline double dirichlet_ml_objective(std::span<const double> alpha,
                                     std::span<const double> suff_stats) {
    double total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
    double obj = log_gamma(total);
    for (std::size_t a = 0; a < alpha.size(); ++a) {
        obj -= log_gamma(alpha[a]);
        obj += (alpha[a] - 1.0) * suff_stats[a];
    }
    return obj;
}

// Thrown when the maximum-likelihood fit stalls; carries the last iterate.
class DirichletFitError : public std::runtime_error {
public:
    DirichletFitError(std::string what, DirichletParams last)
        : std::runtime_error(std::move(what)), last_iterate(std::move(last)) {}
    DirichletParams last_iterate;
};

// Maximum-likelihood Dirichlet from mean log-simplex coordinates, solved by the
// fixed point psi(alpha_a) = psi(sum_b alpha_b) + s_a with a Newton inner solve.
inline DirichletParams dirichlet_ml_fit(std::span<const double> suff_stats,
                                        std::size_t n_docs,
                                        int max_iters = 1000,
                                        double tol = 1e-10) {
    if (suff_stats.empty() || n_docs == 0) {
        throw std::invalid_argument("dirichlet_ml_fit: empty input");
    }
    for (double s : suff_stats) {
        if (!(s < 0.0) || !std::isfinite(s)) {
            throw std::invalid_argument(
                "dirichlet_ml_fit: statistics must be negative (means of log-simplex coordinates)");
        }
    }
    const std::size_t n = suff_stats.size();
    std::vector<double> alpha(n, 1.0);
    for (int it = 0; it < max_iters; ++it) {
        const double psi_total = digamma(std::accumulate(alpha.begin(), alpha.end(), 0.0));
        for (std::size_t a = 0; a < n; ++a) {
            alpha[a] = inverse_digamma(psi_total + suff_stats[a]);
        }
        // gradient of the objective is psi(sum) - psi(alpha_a) + s_a
        const double psi_new = digamma(std::accumulate(alpha.begin(), alpha.end(), 0.0));
        double residual = 0.0;
        for (std::size_t a = 0; a < n; ++a) {
            residual = std::max(residual, std::abs(psi_new - digamma(alpha[a]) + suff_stats[a]));
        }
        if (residual <= tol) {
            return DirichletParams(std::move(alpha));
        }
    }
    throw DirichletFitError("dirichlet_ml_fit: no convergence", DirichletParams(alpha));
}

}  // namespace aspectmix
