#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "ep.hpp"
#include "model.hpp"
#include "numerics.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "vb.hpp"

namespace aspectmix {

enum class LearnMethod {
    vb_max,  // VB E-step with the direct count-matching M-step
    em_vb,   // VB E-step with the expectation-corrected M-step
    em_ep,   // EP E-step with the expectation-corrected M-step
};

enum class WordProbUpdate {
    taylor_second_order,  // second-order expansion of the posterior expectation
    psi_point,            // expectation collapsed to lambda_a = exp(psi(gamma_a))
};

struct LearnConfig {
    LearnMethod method = LearnMethod::em_ep;
    std::size_t n_aspects = 2;
    int em_iters = 100;
    EpConfig ep;
    VbConfig vb;
    bool learn_alpha = false;
    std::vector<double> fixed_alpha;  // empty means all-ones
    std::uint64_t init_seed = 0;
    double init_noise = 0.1;
    double param_floor = 1e-10;
    double param_change_stop = 0.0;  // 0 disables the early stop
    WordProbUpdate wordprob_update = WordProbUpdate::taylor_second_order;
    int threads = 1;

    void validate() const {
        if (n_aspects == 0 || em_iters < 1) {
            throw std::invalid_argument("LearnConfig: bad size or iteration count");
        }
        if (!(param_floor >= 0.0) || !(init_noise >= 0.0) || !(param_change_stop >= 0.0)) {
            throw std::invalid_argument("LearnConfig: negative tolerance");
        }
        if (!fixed_alpha.empty() && fixed_alpha.size() != n_aspects) {
            throw std::invalid_argument("LearnConfig: fixed_alpha arity mismatch");
        }
        for (double a : fixed_alpha) {
            if (!(a > 0.0)) {
                throw std::invalid_argument("LearnConfig: fixed_alpha must be positive");
            }
        }
        ep.validate();
        vb.validate();
    }
};

struct TrainIterRecord {
    int iteration = 0;
    double objective = 0.0;    // sum over documents of the method's fit value
    double max_delta = 0.0;    // largest parameter change in the M-step
    std::size_t n_unconverged_docs = 0;
};

struct TrainResult {
    AspectModel model;
    std::vector<TrainIterRecord> trace;
};

namespace detail {

inline void floor_and_normalize_row(std::vector<double>& probs, std::size_t offset,
                                    std::size_t n_words, double floor) {
    double total = 0.0;
    for (std::size_t w = 0; w < n_words; ++w) {
        double& p = probs[offset + w];
        p = std::max(p, floor);
        total += p;
    }
    for (std::size_t w = 0; w < n_words; ++w) {
        probs[offset + w] /= total;
    }
}

}  // namespace detail

// Starting point: every aspect is the corpus unigram distribution perturbed by
// seeded multiplicative log-normal noise, one noise stream per aspect.
inline AspectModel init_model(const Corpus& corpus, const LearnConfig& config) {
    config.validate();
    if (corpus.documents.empty()) {
        throw std::invalid_argument("init_model: empty corpus");
    }
    corpus.check_word_ids();
    const std::size_t W = corpus.vocabulary.size();
    const std::vector<double> unigram = corpus_unigram(corpus);
    AspectModel model;
    model.n_words = W;
    model.alpha = config.fixed_alpha.empty() ? std::vector<double>(config.n_aspects, 1.0)
                                             : config.fixed_alpha;
    model.word_probs.assign(config.n_aspects * W, 0.0);
    for (std::size_t a = 0; a < config.n_aspects; ++a) {
        Rng rng(derive_seed(config.init_seed, SeedPurpose::init_noise, a));
        double total = 0.0;
        for (std::size_t w = 0; w < W; ++w) {
            const double z = rng.normal();
            const double base = std::max(unigram[w], config.param_floor);
            model.word_probs[a * W + w] = base * std::exp(config.init_noise * z);
            total += model.word_probs[a * W + w];
        }
        for (std::size_t w = 0; w < W; ++w) {
            model.word_probs[a * W + w] /= total;
        }
    }
    model.validate();
    return model;
}

struct MStepResult {
    AspectModel model;
    std::vector<std::size_t> reset_aspects;  // rows that had no mass and were reset
};

// Maximum-likelihood Dirichlet for count vectors (one per document), by the
// monotone multiplicative fixed point on the Polya likelihood.
inline DirichletParams polya_alpha_fit(const DirichletParams& init,
                                       const std::vector<std::vector<double>>& counts,
                                       int max_iters = 1000, double tol = 1e-10) {
    init.validate();
    const std::size_t A = init.size();
    std::vector<double> alpha = init.values;
    std::vector<double> totals(counts.size(), 0.0);
    for (std::size_t i = 0; i < counts.size(); ++i) {
        if (counts[i].size() != A) {
            throw std::invalid_argument("polya_alpha_fit: count arity mismatch");
        }
        totals[i] = std::accumulate(counts[i].begin(), counts[i].end(), 0.0);
    }
    for (int it = 0; it < max_iters; ++it) {
        const double alpha_total = std::accumulate(alpha.begin(), alpha.end(), 0.0);
        double den = 0.0;
        for (double t : totals) {
            den += digamma(alpha_total + t) - digamma(alpha_total);
        }
        if (!(den > 0.0)) {
            break;  // no tokens anywhere, nothing to fit
        }
        double delta = 0.0;
        for (std::size_t a = 0; a < A; ++a) {
            double num = 0.0;
            for (const auto& c : counts) {
                num += digamma(alpha[a] + c[a]) - digamma(alpha[a]);
            }
            const double updated = std::clamp(alpha[a] * num / den, 1e-8, 1e8);
            delta = std::max(delta, std::abs(updated - alpha[a]));
            alpha[a] = updated;
        }
        if (delta <= tol * (1.0 + *std::max_element(alpha.begin(), alpha.end()))) {
            break;
        }
    }
    return DirichletParams(std::move(alpha));
}

// Count-matching M-step: p(w|a) follows the responsibility-weighted counts,
// and alpha optionally refits the Polya likelihood of those counts.
inline MStepResult vb_max_step(const Corpus& corpus, const AspectModel& current,
                               const std::vector<VbState>& states, bool learn_alpha,
                               double param_floor) {
    if (states.size() != corpus.size()) {
        throw std::invalid_argument("vb_max_step: one state per document required");
    }
    const std::size_t A = current.n_aspects();
    const std::size_t W = current.n_words;
    MStepResult out;
    out.model = current;
    std::fill(out.model.word_probs.begin(), out.model.word_probs.end(), 0.0);
    std::vector<std::vector<double>> doc_counts(corpus.size(), std::vector<double>(A, 0.0));
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const Document& doc = corpus.documents[i];
        for (std::size_t t = 0; t < doc.counts.size(); ++t) {
            const auto& [w, c] = doc.counts[t];
            for (std::size_t a = 0; a < A; ++a) {
                const double mass = c * states[i].resp[t * A + a];
                out.model.word_probs[a * W + w] += mass;
                doc_counts[i][a] += mass;
            }
        }
    }
    for (std::size_t a = 0; a < A; ++a) {
        double total = 0.0;
        for (std::size_t w = 0; w < W; ++w) {
            total += out.model.word_probs[a * W + w];
        }
        if (total > 0.0) {
            for (std::size_t w = 0; w < W; ++w) {
                out.model.word_probs[a * W + w] /= total;
            }
        } else {
            out.reset_aspects.push_back(a);
            std::fill_n(out.model.word_probs.begin() + a * W, W, 1.0 / W);
        }
        detail::floor_and_normalize_row(out.model.word_probs, a * W, W, param_floor);
    }
    if (learn_alpha) {
        out.model.alpha =
            polya_alpha_fit(DirichletParams{std::vector<double>(current.alpha)}, doc_counts)
                .values;
    }
    return out;
}

// Refits alpha to the per-document posteriors via maximum likelihood on the
// expected log mixing weights.
inline DirichletParams em_alpha_step(const std::vector<DirichletParams>& posteriors) {
    if (posteriors.empty()) {
        throw std::invalid_argument("em_alpha_step: no posteriors");
    }
    const std::size_t A = posteriors.front().size();
    std::vector<double> stats(A, 0.0);
    for (const DirichletParams& g : posteriors) {
        if (g.size() != A) {
            throw std::invalid_argument("em_alpha_step: posterior arity mismatch");
        }
        const double psi_total = digamma(g.sum());
        for (std::size_t a = 0; a < A; ++a) {
            stats[a] += digamma(g.values[a]) - psi_total;
        }
    }
    for (double& s : stats) {
        s /= static_cast<double>(posteriors.size());
    }
    return dirichlet_ml_fit(stats, posteriors.size());
}

// Expectation-corrected M-step: each word's responsibility is averaged over
// the document posterior rather than evaluated at a point.  The expectation
// uses moments of the posterior, either to second order or collapsed to the
// geometric-mean point.
inline MStepResult em_wordprob_step(const Corpus& corpus, const AspectModel& current,
                                    const std::vector<DirichletParams>& posteriors,
                                    WordProbUpdate update, double param_floor) {
    if (posteriors.size() != corpus.size()) {
        throw std::invalid_argument("em_wordprob_step: one posterior per document required");
    }
    const std::size_t A = current.n_aspects();
    const std::size_t W = current.n_words;
    MStepResult out;
    out.model = current;
    std::fill(out.model.word_probs.begin(), out.model.word_probs.end(), 0.0);
    std::vector<double> point(A);
    for (std::size_t i = 0; i < corpus.size(); ++i) {
        const DirichletParams& g = posteriors[i];
        if (g.size() != A) {
            throw std::invalid_argument("em_wordprob_step: posterior arity mismatch");
        }
        const Document& doc = corpus.documents[i];
        const double total = g.sum();
        if (update == WordProbUpdate::psi_point) {
            for (std::size_t a = 0; a < A; ++a) {
                point[a] = std::exp(digamma(g.values[a]));
            }
        }
        for (const auto& [w, c] : doc.counts) {
            if (update == WordProbUpdate::taylor_second_order) {
                double sp = 0.0;
                double sp2 = 0.0;
                for (std::size_t a = 0; a < A; ++a) {
                    const double p = current.word_prob(a, w);
                    sp += p * g.values[a];
                    sp2 += p * p * g.values[a];
                }
                if (!(sp > 0.0)) {
                    continue;
                }
                for (std::size_t a = 0; a < A; ++a) {
                    const double p = current.word_prob(a, w);
                    // E[lambda | one draw of w] has mean shifted toward aspect a
                    const double mean_mix = (sp + p) / (total + 1.0);
                    const double mean_sq = (sp2 + p * p) / (total + 1.0);
                    const double curvature = mean_sq / (mean_mix * mean_mix) - 1.0;
                    out.model.word_probs[a * W + w] +=
                        c * p * (g.values[a] / total) / mean_mix *
                        (1.0 + curvature / (total + 2.0));
                }
            } else {
                double mix = 0.0;
                for (std::size_t a = 0; a < A; ++a) {
                    mix += current.word_prob(a, w) * point[a];
                }
                if (!(mix > 0.0)) {
                    continue;
                }
                for (std::size_t a = 0; a < A; ++a) {
                    out.model.word_probs[a * W + w] +=
                        c * current.word_prob(a, w) * point[a] / mix;
                }
            }
        }
    }
    for (std::size_t a = 0; a < A; ++a) {
        double row_total = 0.0;
        for (std::size_t w = 0; w < W; ++w) {
            row_total += out.model.word_probs[a * W + w];
        }
        if (row_total > 0.0) {
            for (std::size_t w = 0; w < W; ++w) {
                out.model.word_probs[a * W + w] /= row_total;
            }
        } else {
            out.reset_aspects.push_back(a);
            std::fill_n(out.model.word_probs.begin() + a * W, W, 1.0 / W);
        }
        detail::floor_and_normalize_row(out.model.word_probs, a * W, W, param_floor);
    }
    return out;
}

inline TrainResult train(const Corpus& corpus, const LearnConfig& config) {
    config.validate();
    if (corpus.documents.empty()) {
        throw std::invalid_argument("train: empty corpus");
    }
    corpus.check_word_ids();
    const std::size_t N = corpus.size();
    TrainResult out;
    AspectModel model = init_model(corpus, config);
    const bool use_vb = config.method != LearnMethod::em_ep;
    std::vector<VbState> vb_states(use_vb ? N : 0);
    std::vector<EpState> ep_states(use_vb ? 0 : N);
    std::vector<DirichletParams> posteriors(N);
    std::vector<double> doc_objective(N, 0.0);
    std::vector<char> doc_converged(N, 0);
    for (int iter = 1; iter <= config.em_iters; ++iter) {
        parallel_for(N, config.threads, [&](std::size_t i) {
            const Document& doc = corpus.documents[i];
            if (use_vb) {
                const VbResult r = vb_infer_warm(vb_states[i], model, doc, config.vb);
                posteriors[i] = r.posterior;
                doc_objective[i] = r.log_bound;
                doc_converged[i] = r.converged ? 1 : 0;
            } else {
                if (ep_states[i].terms.empty() && !doc.counts.empty()) {
                    ep_states[i] = ep_init(model, doc);
                }
                const EpResult r = ep_infer_warm(ep_states[i], model, doc, config.ep);
                posteriors[i] = r.posterior;
                doc_objective[i] = r.log_likelihood;
                doc_converged[i] = r.converged ? 1 : 0;
            }
        });
        TrainIterRecord rec;
        rec.iteration = iter;
        for (std::size_t i = 0; i < N; ++i) {
            rec.objective += doc_objective[i];
            if (!doc_converged[i]) {
                ++rec.n_unconverged_docs;
            }
        }
        MStepResult step;
        if (config.method == LearnMethod::vb_max) {
            step = vb_max_step(corpus, model, vb_states, config.learn_alpha, config.param_floor);
        } else {
            step = em_wordprob_step(corpus, model, posteriors, config.wordprob_update,
                                    config.param_floor);
            if (config.learn_alpha) {
                try {
                    step.model.alpha = em_alpha_step(posteriors).values;
                } catch (const DirichletFitError& err) {
                    step.model.alpha = err.last_iterate.values;
                }
            }
        }
        for (std::size_t k = 0; k < model.word_probs.size(); ++k) {
            rec.max_delta = std::max(rec.max_delta,
                                     std::abs(step.model.word_probs[k] - model.word_probs[k]));
        }
        for (std::size_t a = 0; a < model.alpha.size(); ++a) {
            rec.max_delta = std::max(rec.max_delta,
                                     std::abs(step.model.alpha[a] - model.alpha[a]));
        }
        out.trace.push_back(rec);
        model = std::move(step.model);
        if (config.param_change_stop > 0.0 && rec.max_delta < config.param_change_stop) {
            break;
        }
    }
    out.model = std::move(model);
    return out;
}

}  // namespace aspectmix
