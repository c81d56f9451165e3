#pragma once

#include <algorithm>
#include <cassert>
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

enum class StepsizeMode {
    safe,   // per-word stepsize 1/n_w, keeps the posterior at the matched fit
    fixed,  // constant stepsize from EpConfig::fixed_mu
};

struct EpConfig {
    int max_sweeps = 200;
    double convergence_tol = 1e-6;
    StepsizeMode stepsize_mode = StepsizeMode::safe;
    double fixed_mu = 1.0;

    void validate() const {
        if (max_sweeps < 1 || !(convergence_tol > 0.0)) {
            throw std::invalid_argument("EpConfig: bad sweep controls");
        }
        if (stepsize_mode == StepsizeMode::fixed && !(fixed_mu > 0.0 && fixed_mu <= 1.0)) {
            throw std::invalid_argument("EpConfig: fixed stepsize must be in (0, 1]");
        }
    }
};

// One approximating term per distinct word: s_w prod_a lambda_a^{beta_wa},
// raised to the word's count inside the posterior.
struct EpTerm {
    std::size_t word = 0;
    double count = 0.0;
    std::vector<double> beta;
    double log_scale = 0.0;
};

struct EpState {
    std::vector<EpTerm> terms;
    DirichletParams gamma;               // prior alpha plus count-weighted betas
    std::vector<std::size_t> skipped;    // words skipped in the latest sweep
    bool impossible = false;             // some word has zero mass in every aspect
};

inline EpState ep_init(const AspectModel& model, const Document& doc) {
    model.validate();
    check_document(model, doc);
    EpState state;
    state.gamma = DirichletParams{std::vector<double>(model.alpha)};
    state.impossible = document_impossible(model, doc);
    for (const auto& [w, c] : doc.counts) {
        EpTerm term;
        term.word = w;
        term.count = c;
        term.beta.assign(model.n_aspects(), 0.0);
        state.terms.push_back(std::move(term));
    }
    return state;
}

namespace detail {

inline void ep_refresh_gamma(EpState& state, const AspectModel& model) {
    std::vector<double>& g = state.gamma.values;
    g.assign(model.alpha.begin(), model.alpha.end());
    for (const EpTerm& term : state.terms) {
        for (std::size_t a = 0; a < g.size(); ++a) {
            g[a] += term.count * term.beta[a];
        }
    }
}

}  // namespace detail

// One pass over all words: delete, moment-match, update the term with the
// stepsize rule, and fold it back in.  Returns the largest parameter change.
inline double ep_sweep(EpState& state, const AspectModel& model, const EpConfig& config) {
    config.validate();
    if (state.impossible) {
        throw std::logic_error("ep_sweep: document is impossible under the model");
    }
    const std::size_t A = model.n_aspects();
    state.skipped.clear();
    double max_delta = 0.0;
    std::vector<double> held_out(A);
    std::vector<double> probs(A);
    for (EpTerm& term : state.terms) {
        bool ok = true;
        for (std::size_t a = 0; a < A; ++a) {
            held_out[a] = state.gamma.values[a] - term.beta[a];
            if (!(held_out[a] > 0.0)) {
                ok = false;
            }
        }
        if (!ok) {
            state.skipped.push_back(term.word);
            continue;
        }
        for (std::size_t a = 0; a < A; ++a) {
            probs[a] = model.word_prob(a, term.word);
        }
        const DirichletParams old_fit{std::vector<double>(held_out)};
        const auto matched = dirichlet_moment_match(old_fit, probs);
        if (!matched) {
            state.skipped.push_back(term.word);
            continue;
        }
        const double mu = (config.stepsize_mode == StepsizeMode::safe)
                              ? 1.0 / term.count
                              : config.fixed_mu;
        std::vector<double> new_beta(A);
        std::vector<double> new_gamma(A);
        ok = true;
        for (std::size_t a = 0; a < A; ++a) {
            new_beta[a] = mu * (matched->values[a] - held_out[a]) + (1.0 - mu) * term.beta[a];
            new_gamma[a] = state.gamma.values[a] + term.count * (new_beta[a] - term.beta[a]);
            if (!(new_gamma[a] > 0.0)) {
                ok = false;
            }
        }
        if (!ok) {
            state.skipped.push_back(term.word);
            continue;
        }
        const double held_total = std::accumulate(held_out.begin(), held_out.end(), 0.0);
        double weighted = 0.0;
        for (std::size_t a = 0; a < A; ++a) {
            weighted += probs[a] * held_out[a];
        }
        double new_log_scale = std::log(weighted / held_total) +
                               log_gamma(matched->sum()) - log_gamma(held_total);
        for (std::size_t a = 0; a < A; ++a) {
            new_log_scale += log_gamma(held_out[a]) - log_gamma(matched->values[a]);
        }
        for (std::size_t a = 0; a < A; ++a) {
            max_delta = std::max(max_delta, std::abs(new_beta[a] - term.beta[a]));
        }
        max_delta = std::max(max_delta, std::abs(new_log_scale - term.log_scale));
        term.beta = new_beta;
        term.log_scale = new_log_scale;
        state.gamma.values = new_gamma;
#ifndef NDEBUG
        if (config.stepsize_mode == StepsizeMode::safe) {
            for (std::size_t a = 0; a < A; ++a) {
                assert(std::abs(state.gamma.values[a] - matched->values[a]) <=
                       1e-9 * (1.0 + matched->values[a]));
            }
        }
        for (std::size_t a = 0; a < A; ++a) {
            double expected = model.alpha[a];
            for (const EpTerm& t : state.terms) {
                expected += t.count * t.beta[a];
            }
            assert(std::abs(state.gamma.values[a] - expected) <=
                   1e-8 * (1.0 + std::abs(expected)));
        }
#endif
    }
    state.gamma.validate();
    return max_delta;
}

// ln of the normalizer estimate: the Dirichlet ratio between posterior and
// prior times the accumulated term scales.
inline double ep_log_evidence(const EpState& state, const AspectModel& model) {
    if (state.impossible) {
        return -std::numeric_limits<double>::infinity();
    }
    const double alpha_total = std::accumulate(model.alpha.begin(), model.alpha.end(), 0.0);
    double value = log_gamma(alpha_total) - log_gamma(state.gamma.sum());
    for (std::size_t a = 0; a < model.n_aspects(); ++a) {
        value += log_gamma(state.gamma.values[a]) - log_gamma(model.alpha[a]);
    }
    for (const EpTerm& term : state.terms) {
        value += term.count * term.log_scale;
    }
    return value;
}

struct EpResult {
    double log_likelihood = 0.0;
    DirichletParams posterior;
    bool converged = false;
    int sweeps_used = 0;
    std::size_t n_skipped = 0;  // words still skipped at the last sweep
};

namespace detail {

inline EpResult ep_run(EpState& state, const AspectModel& model, const EpConfig& config) {
    EpResult result;
    result.posterior = state.gamma;
    if (state.impossible) {
        result.log_likelihood = -std::numeric_limits<double>::infinity();
        result.converged = true;
        return result;
    }
    if (state.terms.empty()) {
        result.converged = true;
        return result;
    }
    for (int sweep = 1; sweep <= config.max_sweeps; ++sweep) {
        const double delta = ep_sweep(state, model, config);
        result.sweeps_used = sweep;
        if (delta < config.convergence_tol) {
            result.converged = state.skipped.empty();
            break;
        }
    }
    result.n_skipped = state.skipped.size();
    result.log_likelihood = ep_log_evidence(state, model);
    result.posterior = state.gamma;
    return result;
}

}  // namespace detail

inline EpResult ep_infer(const AspectModel& model, const Document& doc,
                         const EpConfig& config = {}) {
    config.validate();
    EpState state = ep_init(model, doc);
    return detail::ep_run(state, model, config);
}

// Re-runs sweeps on an existing state after the model may have changed; the
// stored betas seed the fit.  When they are stale enough to push the rebuilt
// posterior out of range, the state is reset instead.
inline EpResult ep_infer_warm(EpState& state, const AspectModel& model, const Document& doc,
                              const EpConfig& config = {}) {
    config.validate();
    check_document(model, doc);
    state.impossible = document_impossible(model, doc);
    if (state.impossible) {
        state.gamma = DirichletParams{std::vector<double>(model.alpha)};
    } else {
        detail::ep_refresh_gamma(state, model);
        bool valid = true;
        for (double g : state.gamma.values) {
            if (!(g > 0.0)) {
                valid = false;
            }
        }
        if (!valid) {
            state = ep_init(model, doc);
        }
    }
    return detail::ep_run(state, model, config);
}

}  // namespace aspectmix
