#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <vector>

#include "model.hpp"
#include "numerics.hpp"

namespace aspectmix {

struct VbConfig {
    int max_iters = 1000;
    double convergence_tol = 1e-8;  // on the bound improvement

    void validate() const {
        if (max_iters < 1 || !(convergence_tol > 0.0)) {
            throw std::invalid_argument("VbConfig: bad iteration controls");
        }
    }
};

// Mean-field fit with per-word aspect responsibilities and a Dirichlet over
// the mixing weights.
struct VbState {
    std::vector<double> resp;   // n_terms x n_aspects, term-major
    std::vector<double> gamma;  // alpha + count-weighted responsibilities
    bool impossible = false;
};

namespace detail {

inline void vb_e_step(VbState& state, const AspectModel& model, const Document& doc) {
    const std::size_t A = model.n_aspects();
    state.gamma.assign(model.alpha.begin(), model.alpha.end());
    for (std::size_t t = 0; t < doc.counts.size(); ++t) {
        const double c = doc.counts[t].second;
        for (std::size_t a = 0; a < A; ++a) {
            state.gamma[a] += c * state.resp[t * A + a];
        }
    }
}

}  // namespace detail

inline VbState vb_init(const AspectModel& model, const Document& doc) {
    model.validate();
    check_document(model, doc);
    VbState state;
    state.impossible = document_impossible(model, doc);
    const std::size_t A = model.n_aspects();
    state.resp.assign(doc.counts.size() * A, 1.0 / static_cast<double>(A));
    detail::vb_e_step(state, model, doc);
    return state;
}

// One coordinate pass: responsibilities from the current gamma, then gamma
// from the new responsibilities.
inline void vb_update(VbState& state, const AspectModel& model, const Document& doc) {
    const std::size_t A = model.n_aspects();
    std::vector<double> psi(A);
    for (std::size_t a = 0; a < A; ++a) {
        psi[a] = digamma(state.gamma[a]);
    }
    std::vector<double> logs(A);
    for (std::size_t t = 0; t < doc.counts.size(); ++t) {
        const std::size_t w = doc.counts[t].first;
        for (std::size_t a = 0; a < A; ++a) {
            const double p = model.word_prob(a, w);
            logs[a] = (p > 0.0) ? std::log(p) + psi[a]
                                : -std::numeric_limits<double>::infinity();
        }
        const double norm = log_sum_exp(logs);
        for (std::size_t a = 0; a < A; ++a) {
            state.resp[t * A + a] = std::isfinite(norm) ? std::exp(logs[a] - norm)
                                                        : 1.0 / static_cast<double>(A);
        }
    }
    detail::vb_e_step(state, model, doc);
}

// The evidence lower bound at the current state.
inline double vb_bound_value(const VbState& state, const AspectModel& model,
                             const Document& doc) {
    if (state.impossible) {
        return -std::numeric_limits<double>::infinity();
    }
    const std::size_t A = model.n_aspects();
    double bound = 0.0;
    for (std::size_t t = 0; t < doc.counts.size(); ++t) {
        const std::size_t w = doc.counts[t].first;
        const double c = doc.counts[t].second;
        for (std::size_t a = 0; a < A; ++a) {
            const double q = state.resp[t * A + a];
            if (q <= 0.0) {
                continue;
            }
            const double p = model.word_prob(a, w);
            if (!(p > 0.0)) {
                return -std::numeric_limits<double>::infinity();
            }
            bound += c * q * (std::log(p) - std::log(q));
        }
    }
    const double alpha_total = std::accumulate(model.alpha.begin(), model.alpha.end(), 0.0);
    bound += log_gamma(alpha_total);
    double gamma_total = 0.0;
    for (std::size_t a = 0; a < A; ++a) {
        bound -= log_gamma(model.alpha[a]);
        bound += log_gamma(state.gamma[a]);
        gamma_total += state.gamma[a];
    }
    bound -= log_gamma(gamma_total);
    return bound;
}

struct VbResult {
    double log_bound = 0.0;
    DirichletParams posterior;
    bool converged = false;
    int iters_used = 0;
};

namespace detail {

inline VbResult vb_run(VbState& state, const AspectModel& model, const Document& doc,
                       const VbConfig& config) {
    VbResult result;
    result.posterior = DirichletParams{std::vector<double>(state.gamma)};
    if (state.impossible) {
        result.log_bound = -std::numeric_limits<double>::infinity();
        result.converged = true;
        return result;
    }
    if (doc.counts.empty()) {
        result.converged = true;
        return result;
    }
    double prev = vb_bound_value(state, model, doc);
    for (int it = 1; it <= config.max_iters; ++it) {
        vb_update(state, model, doc);
        const double bound = vb_bound_value(state, model, doc);
        result.iters_used = it;
        result.log_bound = bound;
        if (std::abs(bound - prev) < config.convergence_tol) {
            result.converged = true;
            break;
        }
        prev = bound;
    }
    result.posterior = DirichletParams{std::vector<double>(state.gamma)};
    return result;
}

}  // namespace detail

inline VbResult vb_infer(const AspectModel& model, const Document& doc,
                         const VbConfig& config = {}) {
    config.validate();
    VbState state = vb_init(model, doc);
    return detail::vb_run(state, model, doc, config);
}

// Continues from an existing state after the model may have changed; the
// responsibilities carry over and gamma is rebuilt before iterating.
inline VbResult vb_infer_warm(VbState& state, const AspectModel& model, const Document& doc,
                              const VbConfig& config = {}) {
    config.validate();
    check_document(model, doc);
    state.impossible = document_impossible(model, doc);
    if (state.resp.size() != doc.counts.size() * model.n_aspects()) {
        state = vb_init(model, doc);
    } else {
        detail::vb_e_step(state, model, doc);
    }
    return detail::vb_run(state, model, doc, config);
}

}  // namespace aspectmix
