#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "numerics.hpp"
#include "rng.hpp"

namespace aspectmix {

// Mixture-of-aspects word model: documents draw mixing weights lambda from
// D(lambda|alpha) and words from sum_a lambda_a p(w|a).
struct AspectModel {
    std::vector<double> alpha;
    std::size_t n_words = 0;
    std::vector<double> word_probs;  // n_aspects x n_words, aspect-major

    std::size_t n_aspects() const { return alpha.size(); }

    double word_prob(std::size_t aspect, std::size_t word) const {
        return word_probs[aspect * n_words + word];
    }

    std::span<const double> aspect_row(std::size_t aspect) const {
        return std::span<const double>(word_probs).subspan(aspect * n_words, n_words);
    }

    void validate() const {
        if (alpha.empty() || n_words == 0) {
            throw std::invalid_argument("AspectModel: empty model");
        }
        if (word_probs.size() != alpha.size() * n_words) {
            throw std::invalid_argument("AspectModel: word_probs has wrong size");
        }
        for (double a : alpha) {
            if (!(a > 0.0) || !std::isfinite(a)) {
                throw std::invalid_argument("AspectModel: alpha must be positive and finite");
            }
        }
        for (std::size_t a = 0; a < n_aspects(); ++a) {
            double row_sum = 0.0;
            for (std::size_t w = 0; w < n_words; ++w) {
                const double p = word_prob(a, w);
                if (!(p >= 0.0) || p > 1.0 + 1e-12) {
                    throw std::invalid_argument("AspectModel: word probability out of range");
                }
                row_sum += p;
            }
            if (std::abs(row_sum - 1.0) > 1e-9) {
                throw std::invalid_argument("AspectModel: aspect row does not sum to one");
            }
        }
    }
};

inline AspectModel make_aspect_model(std::vector<double> alpha,
                                     const std::vector<std::vector<double>>& rows) {
    AspectModel m;
    m.alpha = std::move(alpha);
    if (rows.empty() || rows.size() != m.alpha.size()) {
        throw std::invalid_argument("make_aspect_model: need one row per aspect");
    }
    m.n_words = rows[0].size();
    for (const auto& row : rows) {
        if (row.size() != m.n_words) {
            throw std::invalid_argument("make_aspect_model: ragged rows");
        }
        m.word_probs.insert(m.word_probs.end(), row.begin(), row.end());
    }
    m.validate();
    return m;
}

inline void check_simplex(std::span<const double> lambda, std::size_t dim) {
    if (lambda.size() != dim) {
        throw std::invalid_argument("mixing weights: dimension mismatch");
    }
    double total = 0.0;
    for (double l : lambda) {
        if (!(l >= -1e-12)) {
            throw std::invalid_argument("mixing weights: negative entry");
        }
        total += l;
    }
    if (std::abs(total - 1.0) > 1e-9) {
        throw std::invalid_argument("mixing weights: must sum to one");
    }
}

inline std::vector<double> mixed_word_probs(const AspectModel& model,
                                            std::span<const double> lambda) {
    check_simplex(lambda, model.n_aspects());
    std::vector<double> mix(model.n_words, 0.0);
    for (std::size_t a = 0; a < model.n_aspects(); ++a) {
        for (std::size_t w = 0; w < model.n_words; ++w) {
            mix[w] += lambda[a] * model.word_prob(a, w);
        }
    }
    return mix;
}

inline void check_document(const AspectModel& model, const Document& doc) {
    for (const auto& [w, c] : doc.counts) {
        if (w >= model.n_words) {
            throw std::invalid_argument("document references word id outside the model");
        }
    }
}

// sum_w n_w ln(sum_a lambda_a p(w|a)); -inf when some observed word has no mass
inline double doc_log_prob_at(const AspectModel& model, const Document& doc,
                              std::span<const double> lambda) {
    double ll = 0.0;
    for (const auto& [w, c] : doc.counts) {
        double mix = 0.0;
        for (std::size_t a = 0; a < model.n_aspects(); ++a) {
            mix += lambda[a] * model.word_prob(a, w);
        }
        if (!(mix > 0.0)) {
            return -std::numeric_limits<double>::infinity();
        }
        ll += c * std::log(mix);
    }
    return ll;
}

// True when some observed word has zero probability under every aspect, which
// makes the document impossible regardless of the mixing weights.
inline bool document_impossible(const AspectModel& model, const Document& doc) {
    for (const auto& [w, c] : doc.counts) {
        double mass = 0.0;
        for (std::size_t a = 0; a < model.n_aspects(); ++a) {
            mass += model.word_prob(a, w);
        }
        if (!(mass > 0.0)) {
            return true;
        }
    }
    return false;
}

namespace detail {

struct GaussLegendre {
    std::array<double, 64> nodes;    // on [0, 1]
    std::array<double, 64> weights;
};

// Nodes and weights by Newton iteration on the Legendre recurrence.
inline const GaussLegendre& gauss_legendre_64() {
    static const GaussLegendre table = [] {
        GaussLegendre t{};
        const int n = 64;
        constexpr double pi = 3.14159265358979323846;
        for (int i = 0; i < n / 2; ++i) {
            double z = std::cos(pi * (i + 0.75) / (n + 0.5));
            double p1 = 0.0;
            double pp = 0.0;
            for (int it = 0; it < 100; ++it) {
                p1 = 1.0;
                double p2 = 0.0;
                for (int j = 1; j <= n; ++j) {
                    const double p3 = p2;
                    p2 = p1;
                    p1 = ((2.0 * j - 1.0) * z * p2 - (j - 1.0) * p3) / j;
                }
                pp = n * (z * p1 - p2) / (z * z - 1.0);
                const double dz = p1 / pp;
                z -= dz;
                if (std::abs(dz) < 1e-15) {
                    break;
                }
            }
            const double w = 1.0 / ((1.0 - z * z) * pp * pp);  // [0,1] scaling
            t.nodes[i] = 0.5 - 0.5 * z;
            t.nodes[n - 1 - i] = 0.5 + 0.5 * z;
            t.weights[i] = w;
            t.weights[n - 1 - i] = w;
        }
        return t;
    }();
    return table;
}

// ln of int_0^{1/2} x^{lp-1} (1-x)^{rp-1} exp(F(x)) dx.  The substitution
// x = (1/2) u^{1/lp} turns the x^{lp-1} factor into a constant, so endpoint
// singularities vanish analytically and plain panels converge fast.
inline double log_integrate_left_half(const std::function<double(double)>& F,
                                      double lp, double rp,
                                      double tol, int max_panels) {
    const GaussLegendre& gl = gauss_legendre_64();
    const double log_const = -lp * std::log(2.0) - std::log(lp);
    double prev = std::numeric_limits<double>::quiet_NaN();
    for (int panels = 2; panels <= max_panels; panels *= 2) {
        std::vector<double> terms;
        terms.reserve(static_cast<std::size_t>(panels) * gl.nodes.size());
        const double width = 1.0 / panels;
        for (int k = 0; k < panels; ++k) {
            for (std::size_t i = 0; i < gl.nodes.size(); ++i) {
                const double u = (k + gl.nodes[i]) * width;
                if (u <= 0.0) {
                    continue;
                }
                const double x = 0.5 * std::pow(u, 1.0 / lp);
                const double lg = (rp - 1.0) * std::log1p(-x) + F(x);
                terms.push_back(std::log(gl.weights[i] * width) + lg);
            }
        }
        const double value = log_const + log_sum_exp(terms);
        if (std::isfinite(prev) && std::abs(value - prev) < tol) {
            return value;
        }
        if (!std::isfinite(value) && !std::isfinite(prev) && panels > 2) {
            return value;  // integrand is identically zero
        }
        prev = value;
    }
    return prev;
}

}  // namespace detail

// ln of int_0^1 x^{left_pow-1} (1-x)^{right_pow-1} exp(F(x)) dx for positive
// powers; F may return -inf.  Panels are doubled until the log value settles.
inline double log_integrate_01(const std::function<double(double)>& F,
                               double left_pow, double right_pow,
                               double tol = 1e-8, int max_panels = 256) {
    if (!(left_pow > 0.0) || !(right_pow > 0.0)) {
        throw std::invalid_argument("log_integrate_01: powers must be positive");
    }
    const double left = detail::log_integrate_left_half(F, left_pow, right_pow, tol, max_panels);
    const double right = detail::log_integrate_left_half(
        [&F](double x) { return F(1.0 - x); }, right_pow, left_pow, tol, max_panels);
    const std::array<double, 2> halves = {left, right};
    return log_sum_exp(std::span<const double>(halves));
}

// ln p(doc | model) by quadrature over the mixing weights; dimensions above
// three are not supported.
inline double exact_log_likelihood(const AspectModel& model, const Document& doc) {
    model.validate();
    check_document(model, doc);
    const std::size_t A = model.n_aspects();
    if (doc.counts.empty()) {
        return 0.0;
    }
    if (document_impossible(model, doc)) {
        return -std::numeric_limits<double>::infinity();
    }
    if (A == 1) {
        std::array<double, 1> one = {1.0};
        return doc_log_prob_at(model, doc, one);
    }
    const double alpha_total = std::accumulate(model.alpha.begin(), model.alpha.end(), 0.0);
    double log_beta = log_gamma(alpha_total);
    for (double a : model.alpha) {
        log_beta -= log_gamma(a);
    }
    if (A == 2) {
        auto F = [&](double x) {
            const std::array<double, 2> lambda = {x, 1.0 - x};
            return doc_log_prob_at(model, doc, lambda);
        };
        return log_beta + log_integrate_01(F, model.alpha[0], model.alpha[1]);
    }
    if (A == 3) {
        // lambda = (u, (1-u)v, (1-u)(1-v)); the Jacobian (1-u) joins the outer
        // (1-u)^{a2+a3-2} factor to give right_pow = a2 + a3
        auto outer = [&](double u) {
            auto inner = [&](double v) {
                const std::array<double, 3> lambda = {u, (1.0 - u) * v, (1.0 - u) * (1.0 - v)};
                return doc_log_prob_at(model, doc, lambda);
            };
            return log_integrate_01(inner, model.alpha[1], model.alpha[2]);
        };
        return log_beta +
               log_integrate_01(outer, model.alpha[0], model.alpha[1] + model.alpha[2]);
    }
    throw std::invalid_argument("exact_log_likelihood: supports at most three aspects");
}

struct MaxLikelihood {
    double log_value = 0.0;
    std::vector<double> lambda_hat;
    bool prior_warning = false;  // alpha below one: the maximized value is not a bound
};

// max over lambda of D(lambda|alpha) * prod_w p(w|lambda)^{n_w}, in logs.
// Solved by EM on the mixture with (alpha_a - 1) pseudo-counts; when some
// alpha is below one the pseudo-counts would be negative, so the weights are
// fit to the data alone and the prior is evaluated at that point.
inline MaxLikelihood max_log_likelihood(const AspectModel& model, const Document& doc,
                                        int max_iters = 200000, double tol = 1e-12) {
    model.validate();
    check_document(model, doc);
    const std::size_t A = model.n_aspects();
    MaxLikelihood out;
    out.lambda_hat.assign(A, 1.0 / A);
    for (double a : model.alpha) {
        if (a < 1.0) {
            out.prior_warning = true;
        }
    }
    if (document_impossible(model, doc)) {
        out.log_value = -std::numeric_limits<double>::infinity();
        return out;
    }
    std::vector<double> pseudo(A, 0.0);
    if (!out.prior_warning) {
        for (std::size_t a = 0; a < A; ++a) {
            pseudo[a] = model.alpha[a] - 1.0;
        }
    }
    if (A > 1) {
        std::vector<double> next(A);
        for (int it = 0; it < max_iters; ++it) {
            std::copy(pseudo.begin(), pseudo.end(), next.begin());
            for (const auto& [w, c] : doc.counts) {
                double mix = 0.0;
                for (std::size_t a = 0; a < A; ++a) {
                    mix += out.lambda_hat[a] * model.word_prob(a, w);
                }
                if (!(mix > 0.0)) {
                    continue;  // this word sits outside the current support
                }
                for (std::size_t a = 0; a < A; ++a) {
                    next[a] += c * out.lambda_hat[a] * model.word_prob(a, w) / mix;
                }
            }
            double total = 0.0;
            for (double v : next) {
                total += std::max(v, 0.0);
            }
            if (!(total > 0.0)) {
                break;  // empty document with flat prior
            }
            double delta = 0.0;
            for (std::size_t a = 0; a < A; ++a) {
                const double value = std::max(next[a], 0.0) / total;
                delta = std::max(delta, std::abs(value - out.lambda_hat[a]));
                out.lambda_hat[a] = value;
            }
            if (delta < tol) {
                break;
            }
        }
    }
    const DirichletParams prior{std::vector<double>(model.alpha)};
    out.log_value = dirichlet_log_pdf(prior, out.lambda_hat) +
                    doc_log_prob_at(model, doc, out.lambda_hat);
    return out;
}

struct McLikelihood {
    double log_value = 0.0;
    double std_error = 0.0;
};

// Simple Monte Carlo over the prior: ln (1/S sum_s p(doc|lambda_s)).
inline McLikelihood mc_log_likelihood(const AspectModel& model, const Document& doc,
                                      std::size_t n_samples, std::uint64_t seed) {
    model.validate();
    check_document(model, doc);
    if (n_samples < 100) {
        throw std::invalid_argument("mc_log_likelihood: needs at least 100 samples");
    }
    Rng rng(derive_seed(seed, SeedPurpose::mc_likelihood, 0));
    std::vector<double> logs(n_samples);
    for (std::size_t s = 0; s < n_samples; ++s) {
        const std::vector<double> lambda = rng.dirichlet(model.alpha);
        logs[s] = doc_log_prob_at(model, doc, lambda);
    }
    McLikelihood out;
    const double m = *std::max_element(logs.begin(), logs.end());
    if (!std::isfinite(m)) {
        out.log_value = m;
        return out;
    }
    double mean = 0.0;
    for (double l : logs) {
        mean += std::exp(l - m);
    }
    mean /= static_cast<double>(n_samples);
    double var = 0.0;
    for (double l : logs) {
        const double d = std::exp(l - m) - mean;
        var += d * d;
    }
    var /= static_cast<double>(n_samples - 1);
    out.log_value = m + std::log(mean);
    out.std_error = std::sqrt(var / static_cast<double>(n_samples)) / mean;
    return out;
}

// Draws documents from the model; word identities are "w<id>" unless a
// vocabulary is supplied.  Each document gets its own derived seed stream.
inline Corpus sample_corpus(const AspectModel& model, std::size_t n_docs,
                            std::size_t doc_length, std::uint64_t seed,
                            const Vocabulary* vocab = nullptr) {
    model.validate();
    if (n_docs == 0 || doc_length == 0) {
        throw std::invalid_argument("sample_corpus: need positive counts");
    }
    Corpus corpus;
    if (vocab) {
        if (vocab->size() != model.n_words) {
            throw std::invalid_argument("sample_corpus: vocabulary size mismatch");
        }
        corpus.vocabulary = *vocab;
    } else {
        for (std::size_t w = 0; w < model.n_words; ++w) {
            corpus.vocabulary.add("w" + std::to_string(w));
        }
    }
    for (std::size_t i = 0; i < n_docs; ++i) {
        Rng rng(derive_seed(seed, SeedPurpose::corpus_sampling, i));
        const std::vector<double> lambda = rng.dirichlet(model.alpha);
        const std::vector<double> mix = mixed_word_probs(model, lambda);
        std::vector<double> counts(model.n_words, 0.0);
        for (std::size_t t = 0; t < doc_length; ++t) {
            counts[rng.categorical(mix)] += 1.0;
        }
        std::vector<std::pair<std::size_t, double>> entries;
        for (std::size_t w = 0; w < model.n_words; ++w) {
            if (counts[w] > 0.0) {
                entries.emplace_back(w, counts[w]);
            }
        }
        corpus.documents.push_back(make_document(entries));
        corpus.doc_ids.push_back("d" + std::to_string(i));
    }
    return corpus;
}

inline void save_model(const AspectModel& model, const std::string& path,
                       const std::vector<std::string>& header_lines = {}) {
    model.validate();
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write model file: " + path);
    }
    for (const std::string& h : header_lines) {
        out << "# " << h << "\n";
    }
    out << "aspectmodel 1\n";
    out << "aspects " << model.n_aspects() << "\n";
    out << "words " << model.n_words << "\n";
    out << "alpha";
    for (double a : model.alpha) {
        out << " ";
        write_number(out, a);
    }
    out << "\n";
    for (std::size_t w = 0; w < model.n_words; ++w) {
        out << "word " << w;
        for (std::size_t a = 0; a < model.n_aspects(); ++a) {
            out << " ";
            write_number(out, model.word_prob(a, w));
        }
        out << "\n";
    }
    if (!out) {
        throw std::runtime_error("failed while writing model file: " + path);
    }
}

inline AspectModel load_model(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open model file: " + path);
    }
    std::string line;
    std::vector<std::string> lines;
    while (std::getline(in, line)) {
        if (!detail::is_comment_or_blank(line)) {
            lines.push_back(line);
        }
    }
    auto fail = [&path](const std::string& why) -> std::runtime_error {
        return std::runtime_error(path + ": " + why);
    };
    if (lines.size() < 4) {
        throw fail("truncated model file");
    }
    std::size_t k = 0;
    {
        std::istringstream ss(lines[k++]);
        std::string tag;
        int version = 0;
        ss >> tag >> version;
        if (tag != "aspectmodel" || version != 1) {
            throw fail("unrecognized model header");
        }
    }
    AspectModel model;
    std::size_t n_aspects = 0;
    {
        std::istringstream ss(lines[k++]);
        std::string tag;
        ss >> tag >> n_aspects;
        if (tag != "aspects" || n_aspects == 0) {
            throw fail("bad aspects line");
        }
    }
    {
        std::istringstream ss(lines[k++]);
        std::string tag;
        ss >> tag >> model.n_words;
        if (tag != "words" || model.n_words == 0) {
            throw fail("bad words line");
        }
    }
    {
        std::istringstream ss(lines[k++]);
        std::string tag;
        ss >> tag;
        if (tag != "alpha") {
            throw fail("bad alpha line");
        }
        double v = 0.0;
        while (ss >> v) {
            model.alpha.push_back(v);
        }
        if (model.alpha.size() != n_aspects) {
            throw fail("alpha line has wrong arity");
        }
    }
    model.word_probs.assign(n_aspects * model.n_words, 0.0);
    if (lines.size() != k + model.n_words) {
        throw fail("wrong number of word lines");
    }
    for (std::size_t w = 0; w < model.n_words; ++w) {
        std::istringstream ss(lines[k + w]);
        std::string tag;
        std::size_t id = 0;
        ss >> tag >> id;
        if (tag != "word" || id != w) {
            throw fail("bad word line " + std::to_string(w));
        }
        for (std::size_t a = 0; a < n_aspects; ++a) {
            double v = 0.0;
            if (!(ss >> v)) {
                throw fail("word line " + std::to_string(w) + " has wrong arity");
            }
            model.word_probs[a * model.n_words + w] = v;
        }
        double extra = 0.0;
        if (ss >> extra) {
            throw fail("word line " + std::to_string(w) + " has wrong arity");
        }
    }
    model.validate();
    return model;
}

}  // namespace aspectmix
