#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
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

enum class ProposalKind {
    ep_posterior,  // importance-sample from the per-document fitted Dirichlet
    prior,         // plain Monte Carlo from D(alpha)
};

struct PerplexityReport {
    double total_log_likelihood = 0.0;
    double token_count = 0.0;
    double perplexity = 0.0;
    double log_likelihood_std_error = 0.0;  // jackknife, summed over documents
    double per_token_std_error = 0.0;
    std::size_t n_docs = 0;
    std::size_t n_proposal_fallbacks = 0;  // documents where the fit failed and the prior stood in
};

namespace detail {

struct DocEstimate {
    double log_prob = 0.0;
    double variance = 0.0;
    bool fallback = false;
};

inline DocEstimate is_doc_log_prob(const AspectModel& model, const Document& doc,
                                   std::size_t n_samples, std::uint64_t doc_seed,
                                   ProposalKind proposal, const EpConfig& ep_cfg) {
    DocEstimate out;
    if (doc.counts.empty()) {
        return out;
    }
    if (document_impossible(model, doc)) {
        out.log_prob = -std::numeric_limits<double>::infinity();
        return out;
    }
    const DirichletParams prior{std::vector<double>(model.alpha)};
    DirichletParams draw_from = prior;
    if (proposal == ProposalKind::ep_posterior) {
        const EpResult fit = ep_infer(model, doc, ep_cfg);
        bool usable = fit.posterior.size() == model.n_aspects();
        for (double g : fit.posterior.values) {
            if (!(g > 0.0) || !std::isfinite(g)) {
                usable = false;
            }
        }
        if (usable) {
            draw_from = fit.posterior;
        } else {
            out.fallback = true;
        }
    }
    const bool from_prior = draw_from.values == prior.values;
    Rng rng(doc_seed);
    std::vector<double> log_w(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::vector<double> lambda = rng.dirichlet(draw_from.values);
        double lw = doc_log_prob_at(model, doc, lambda);
        if (!from_prior && std::isfinite(lw)) {
            lw += dirichlet_log_pdf(prior, lambda) - dirichlet_log_pdf(draw_from, lambda);
        }
        log_w[s] = lw;
    }
    const double m = *std::max_element(log_w.begin(), log_w.end());
    if (!std::isfinite(m)) {
        out.log_prob = m;
        return out;
    }
    const double S = static_cast<double>(n_samples);
    double total = 0.0;
    for (double lw : log_w) {
        total += std::exp(lw - m);
    }
    out.log_prob = m + std::log(total / S);
    // jackknife over the sample weights
    std::vector<double> loo(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const double rest = std::max(total - std::exp(log_w[s] - m), total * 1e-17);
        loo[s] = m + std::log(rest / (S - 1.0));
    }
    const double loo_mean = std::accumulate(loo.begin(), loo.end(), 0.0) / S;
    double acc = 0.0;
    for (double v : loo) {
        acc += (v - loo_mean) * (v - loo_mean);
    }
    out.variance = (S - 1.0) / S * acc;
    return out;
}

}  // namespace detail

// Held-out perplexity exp(-LL / tokens) with importance-sampled per-document
// log probabilities and a jackknife standard error.
inline PerplexityReport perplexity(const AspectModel& model, const Corpus& corpus,
                                   std::size_t n_samples, std::uint64_t seed,
                                   ProposalKind proposal = ProposalKind::ep_posterior,
                                   const EpConfig& ep_cfg = {}, int threads = 1) {
    model.validate();
    corpus.check_word_ids();
    if (n_samples < 100) {
        throw std::invalid_argument("perplexity: needs at least 100 samples");
    }
    if (corpus.documents.empty()) {
        throw std::invalid_argument("perplexity: empty corpus");
    }
    const std::size_t N = corpus.size();
    std::vector<detail::DocEstimate> per_doc(N);
    parallel_for(N, threads, [&](std::size_t i) {
        per_doc[i] = detail::is_doc_log_prob(model, corpus.documents[i], n_samples,
                                             derive_seed(seed, SeedPurpose::perplexity, i),
                                             proposal, ep_cfg);
    });
    PerplexityReport report;
    report.n_docs = N;
    double var_total = 0.0;
    for (std::size_t i = 0; i < N; ++i) {
        report.total_log_likelihood += per_doc[i].log_prob;
        report.token_count += corpus.documents[i].length();
        var_total += per_doc[i].variance;
        if (per_doc[i].fallback) {
            ++report.n_proposal_fallbacks;
        }
    }
    report.log_likelihood_std_error = std::sqrt(var_total);
    if (report.token_count > 0.0) {
        report.per_token_std_error = report.log_likelihood_std_error / report.token_count;
        report.perplexity = std::exp(-report.total_log_likelihood / report.token_count);
    }
    return report;
}

struct CurveSpec {
    std::size_t aspect = 0;
    std::size_t word = 0;
    std::vector<double> grid;
};

struct CurveMethodResult {
    std::string name;
    std::vector<double> values;  // corpus log likelihood per grid point
    std::size_t argmax = 0;      // first index attaining the maximum finite value
};

struct CurveReport {
    std::vector<double> grid;
    std::vector<CurveMethodResult> methods;
};

// Base model with p(word|aspect) set to value and the rest of that aspect row
// rescaled to keep it a distribution.
inline AspectModel model_with_prob(const AspectModel& base, std::size_t aspect,
                                   std::size_t word, double value) {
    if (aspect >= base.n_aspects() || word >= base.n_words) {
        throw std::invalid_argument("model_with_prob: index out of range");
    }
    if (!(value >= 0.0) || value > 1.0) {
        throw std::invalid_argument("model_with_prob: probability out of range");
    }
    if (base.n_words == 1 && value != 1.0) {
        throw std::invalid_argument("model_with_prob: single-word row must stay at one");
    }
    AspectModel out = base;
    const std::size_t W = base.n_words;
    double rest = 0.0;
    for (std::size_t w = 0; w < W; ++w) {
        if (w != word) {
            rest += base.word_prob(aspect, w);
        }
    }
    for (std::size_t w = 0; w < W; ++w) {
        if (w == word) {
            out.word_probs[aspect * W + w] = value;
        } else if (rest > 0.0) {
            out.word_probs[aspect * W + w] = base.word_prob(aspect, w) * (1.0 - value) / rest;
        } else {
            out.word_probs[aspect * W + w] = (1.0 - value) / static_cast<double>(W - 1);
        }
    }
    return out;
}

inline double corpus_score(const AspectModel& model, const Corpus& corpus,
                           const std::string& method, const EpConfig& ep_cfg,
                           const VbConfig& vb_cfg) {
    double total = 0.0;
    for (const Document& doc : corpus.documents) {
        if (method == "exact") {
            total += exact_log_likelihood(model, doc);
        } else if (method == "max") {
            total += max_log_likelihood(model, doc).log_value;
        } else if (method == "vb") {
            total += vb_infer(model, doc, vb_cfg).log_bound;
        } else if (method == "ep") {
            total += ep_infer(model, doc, ep_cfg).log_likelihood;
        } else {
            throw std::invalid_argument("unknown likelihood method '" + method + "'");
        }
    }
    return total;
}

inline CurveReport likelihood_curve(const Corpus& corpus, const AspectModel& base,
                                    const CurveSpec& spec,
                                    const std::vector<std::string>& methods,
                                    const EpConfig& ep_cfg = {}, const VbConfig& vb_cfg = {},
                                    int threads = 1) {
    base.validate();
    corpus.check_word_ids();
    if (spec.grid.empty() || methods.empty()) {
        throw std::invalid_argument("likelihood_curve: empty grid or method list");
    }
    CurveReport report;
    report.grid = spec.grid;
    report.methods.resize(methods.size());
    for (std::size_t m = 0; m < methods.size(); ++m) {
        report.methods[m].name = methods[m];
        report.methods[m].values.assign(spec.grid.size(), 0.0);
    }
    std::vector<AspectModel> grid_models;
    grid_models.reserve(spec.grid.size());
    for (double g : spec.grid) {
        grid_models.push_back(model_with_prob(base, spec.aspect, spec.word, g));
    }
    for (std::size_t m = 0; m < methods.size(); ++m) {
        std::vector<double>& values = report.methods[m].values;
        parallel_for(spec.grid.size(), threads, [&](std::size_t k) {
            values[k] = corpus_score(grid_models[k], corpus, methods[m], ep_cfg, vb_cfg);
        });
        std::size_t best = 0;
        for (std::size_t k = 1; k < values.size(); ++k) {
            const bool better = values[k] > values[best] ||
                                (!std::isfinite(values[best]) && std::isfinite(values[k]));
            if (better) {
                best = k;
            }
        }
        report.methods[m].argmax = best;
    }
    return report;
}

struct ClassifyReport {
    std::vector<std::size_t> predicted;
    std::vector<std::vector<std::size_t>> confusion;  // [true label][predicted]
    std::size_t n_errors = 0;
    double error_rate = 0.0;
};

// Labels each document with the class whose model gives it the highest
// likelihood under the chosen method; ties go to the lower class index.
inline ClassifyReport classify(const std::vector<AspectModel>& models, const Corpus& corpus,
                               const std::string& method, const EpConfig& ep_cfg = {},
                               const VbConfig& vb_cfg = {}, int threads = 1) {
    if (models.size() < 2) {
        throw std::invalid_argument("classify: needs at least two class models");
    }
    for (const AspectModel& m : models) {
        m.validate();
        if (m.n_words != models.front().n_words) {
            throw std::invalid_argument("classify: models disagree on vocabulary size");
        }
    }
    if (corpus.labels.size() != corpus.size()) {
        throw std::invalid_argument("classify: corpus must be fully labeled");
    }
    for (int label : corpus.labels) {
        if (label < 0 || static_cast<std::size_t>(label) >= models.size()) {
            throw std::invalid_argument("classify: label outside the class range");
        }
    }
    corpus.check_word_ids();
    const std::size_t N = corpus.size();
    ClassifyReport report;
    report.predicted.assign(N, 0);
    parallel_for(N, threads, [&](std::size_t i) {
        const Document& doc = corpus.documents[i];
        std::size_t best = 0;
        double best_score = -std::numeric_limits<double>::infinity();
        for (std::size_t c = 0; c < models.size(); ++c) {
            double score = 0.0;
            if (method == "exact") {
                score = exact_log_likelihood(models[c], doc);
            } else if (method == "max") {
                score = max_log_likelihood(models[c], doc).log_value;
            } else if (method == "vb") {
                score = vb_infer(models[c], doc, vb_cfg).log_bound;
            } else if (method == "ep") {
                score = ep_infer(models[c], doc, ep_cfg).log_likelihood;
            } else {
                throw std::invalid_argument("unknown likelihood method '" + method + "'");
            }
            if (c == 0 || score > best_score) {
                best = c;
                best_score = score;
            }
        }
        report.predicted[i] = best;
    });
    report.confusion.assign(models.size(), std::vector<std::size_t>(models.size(), 0));
    for (std::size_t i = 0; i < N; ++i) {
        const auto truth = static_cast<std::size_t>(corpus.labels[i]);
        report.confusion[truth][report.predicted[i]] += 1;
        if (truth != report.predicted[i]) {
            ++report.n_errors;
        }
    }
    report.error_rate = static_cast<double>(report.n_errors) / static_cast<double>(N);
    return report;
}

struct TopWordsReport {
    std::vector<std::vector<std::pair<std::string, double>>> per_aspect;
};

// Highest-probability words per aspect; words whose background frequency
// exceeds the threshold are dropped first (stopword-style filtering).
inline TopWordsReport top_words(const AspectModel& model, const Vocabulary& vocab,
                                std::size_t n_per_aspect,
                                const std::vector<double>* background = nullptr,
                                double background_threshold = 1.0) {
    model.validate();
    if (vocab.size() != model.n_words) {
        throw std::invalid_argument("top_words: vocabulary size mismatch");
    }
    if (background && background->size() != model.n_words) {
        throw std::invalid_argument("top_words: background size mismatch");
    }
    TopWordsReport report;
    report.per_aspect.resize(model.n_aspects());
    for (std::size_t a = 0; a < model.n_aspects(); ++a) {
        std::vector<std::size_t> ids;
        for (std::size_t w = 0; w < model.n_words; ++w) {
            if (background && (*background)[w] > background_threshold) {
                continue;
            }
            ids.push_back(w);
        }
        std::stable_sort(ids.begin(), ids.end(), [&](std::size_t x, std::size_t y) {
            return model.word_prob(a, x) > model.word_prob(a, y);
        });
        if (ids.size() > n_per_aspect) {
            ids.resize(n_per_aspect);
        }
        for (std::size_t w : ids) {
            report.per_aspect[a].emplace_back(vocab.word(w), model.word_prob(a, w));
        }
    }
    return report;
}

}  // namespace aspectmix
