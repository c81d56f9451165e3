#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "corpus.hpp"
#include "ep.hpp"
#include "evaluate.hpp"
#include "learn.hpp"
#include "model.hpp"
#include "rng.hpp"
#include "vb.hpp"

namespace aspectmix {

// ---- scenario sources ----

// Two aspects over two words: the first aspect mixes the words, the second is
// concentrated on the first word.
inline AspectModel two_word_model(double p_first = 0.5) {
    return make_aspect_model({1.0, 1.0}, {{p_first, 1.0 - p_first}, {1.0, 0.0}});
}

inline AspectModel uniform_unigram_model(std::size_t n_words) {
    std::vector<double> row(n_words, 1.0 / static_cast<double>(n_words));
    return make_aspect_model({1.0}, {row});
}

// Word probabilities proportional to 1..W.
inline AspectModel ramp_unigram_model(std::size_t n_words) {
    std::vector<double> row(n_words);
    const double total = n_words * (n_words + 1) / 2.0;
    for (std::size_t w = 0; w < n_words; ++w) {
        row[w] = (w + 1) / total;
    }
    return make_aspect_model({1.0}, {row});
}

// Unigram with 80% of its mass on one block of 10 words and the rest spread
// evenly; topics with disjoint blocks overlap only through the spread mass.
inline AspectModel block_unigram_model(std::size_t n_words, std::size_t block_start,
                                       std::size_t block_size = 10) {
    if (block_start + block_size > n_words) {
        throw std::invalid_argument("block_unigram_model: block out of range");
    }
    std::vector<double> row(n_words, 0.2 / static_cast<double>(n_words));
    for (std::size_t w = block_start; w < block_start + block_size; ++w) {
        row[w] += 0.8 / static_cast<double>(block_size);
    }
    return make_aspect_model({1.0}, {row});
}

// Appends the documents of `extra` to `base`, which must share a vocabulary;
// every document is labeled with the given class.
inline Corpus labeled_union(const Corpus& base, int base_label, const Corpus& extra,
                            int extra_label) {
    if (base.vocabulary.size() != extra.vocabulary.size()) {
        throw std::invalid_argument("labeled_union: vocabulary mismatch");
    }
    for (std::size_t w = 0; w < base.vocabulary.size(); ++w) {
        if (base.vocabulary.word(w) != extra.vocabulary.word(w)) {
            throw std::invalid_argument("labeled_union: vocabulary mismatch");
        }
    }
    Corpus out;
    out.vocabulary = base.vocabulary;
    for (std::size_t i = 0; i < base.documents.size(); ++i) {
        out.documents.push_back(base.documents[i]);
        out.labels.push_back(base_label);
    }
    for (std::size_t i = 0; i < extra.documents.size(); ++i) {
        out.documents.push_back(extra.documents[i]);
        out.labels.push_back(extra_label);
    }
    for (std::size_t i = 0; i < out.documents.size(); ++i) {
        out.doc_ids.push_back("d" + std::to_string(i));
    }
    return out;
}

inline Corpus subset_corpus(const Corpus& corpus, std::size_t begin, std::size_t end) {
    if (begin > end || end > corpus.size()) {
        throw std::out_of_range("subset_corpus: bad range");
    }
    Corpus out;
    out.vocabulary = corpus.vocabulary;
    for (std::size_t i = begin; i < end; ++i) {
        out.documents.push_back(corpus.documents[i]);
        out.doc_ids.push_back(i < corpus.doc_ids.size() ? corpus.doc_ids[i]
                                                        : "d" + std::to_string(i));
        if (corpus.labels.size() == corpus.size()) {
            out.labels.push_back(corpus.labels[i]);
        }
    }
    return out;
}

// ---- two-word profile experiment ----

// Fits the free parameter p(w=0|aspect 0) of the two-word family, holding the
// second aspect at (1, 0) and alpha at ones, by alternating inference with the
// method's own M-step.
inline double fit_two_word_prob(const Corpus& corpus, LearnMethod method,
                                double p_init = 0.5, int max_iters = 3000,
                                double tol = 1e-9) {
    AspectModel model = two_word_model(p_init);
    const std::size_t N = corpus.size();
    std::vector<DirichletParams> posteriors(N);
    for (int it = 0; it < max_iters; ++it) {
        double p_new = 0.0;
        if (method == LearnMethod::vb_max) {
            double num = 0.0;
            double den = 0.0;
            for (std::size_t i = 0; i < N; ++i) {
                VbState state = vb_init(model, corpus.documents[i]);
                vb_infer_warm(state, model, corpus.documents[i]);
                for (std::size_t t = 0; t < corpus.documents[i].counts.size(); ++t) {
                    const auto& [w, c] = corpus.documents[i].counts[t];
                    const double mass = c * state.resp[t * 2 + 0];
                    den += mass;
                    if (w == 0) {
                        num += mass;
                    }
                }
            }
            p_new = (den > 0.0) ? num / den : p_init;
        } else {
            for (std::size_t i = 0; i < N; ++i) {
                if (method == LearnMethod::em_vb) {
                    posteriors[i] = vb_infer(model, corpus.documents[i]).posterior;
                } else {
                    posteriors[i] = ep_infer(model, corpus.documents[i]).posterior;
                }
            }
            const MStepResult step = em_wordprob_step(
                corpus, model, posteriors, WordProbUpdate::taylor_second_order, 1e-12);
            p_new = step.model.word_prob(0, 0);
        }
        const double delta = std::abs(p_new - model.word_prob(0, 0));
        model = two_word_model(p_new);
        if (delta < tol) {
            break;
        }
    }
    return model.word_prob(0, 0);
}

struct TwoWordCurveRun {
    std::vector<double> grid;
    std::vector<double> exact_values, ep_values, vb_values, max_values;
    std::size_t exact_argmax = 0;
    double max_ep_deviation = 0.0;  // over the grid, corpus log-likelihood nats
    double min_vb_slack = 0.0;      // min of exact - vb; negative means bound violation
    double est_vb_max = 0.0;
    double est_em_vb = 0.0;
    double est_em_ep = 0.0;
};

inline TwoWordCurveRun run_two_word_curve(std::uint64_t seed, std::size_t grid_points = 101) {
    const AspectModel truth = two_word_model(0.5);
    const Corpus corpus =
        sample_corpus(truth, 10, 10, derive_seed(seed, SeedPurpose::experiment, 1));
    CurveSpec spec;
    spec.aspect = 0;
    spec.word = 0;
    for (std::size_t k = 0; k < grid_points; ++k) {
        spec.grid.push_back(static_cast<double>(k) / static_cast<double>(grid_points - 1));
    }
    const CurveReport curve =
        likelihood_curve(corpus, truth, spec, {"exact", "ep", "vb", "max"});
    TwoWordCurveRun run;
    run.grid = spec.grid;
    run.exact_values = curve.methods[0].values;
    run.ep_values = curve.methods[1].values;
    run.vb_values = curve.methods[2].values;
    run.max_values = curve.methods[3].values;
    run.exact_argmax = curve.methods[0].argmax;
    for (std::size_t k = 0; k < grid_points; ++k) {
        const double exact = run.exact_values[k];
        const double ep = run.ep_values[k];
        const double vb = run.vb_values[k];
        if (std::isfinite(exact) || std::isfinite(ep)) {
            run.max_ep_deviation = std::max(run.max_ep_deviation, std::abs(ep - exact));
        }
        if (std::isfinite(exact) || std::isfinite(vb)) {
            run.min_vb_slack = std::min(run.min_vb_slack, exact - vb);
        }
    }
    run.est_vb_max = fit_two_word_prob(corpus, LearnMethod::vb_max);
    run.est_em_vb = fit_two_word_prob(corpus, LearnMethod::em_vb);
    run.est_em_ep = fit_two_word_prob(corpus, LearnMethod::em_ep);
    return run;
}

// ---- five-word experiment ----

struct FiveWordRun {
    TrainResult em_ep;
    TrainResult vb_max;
    double em_ep_min_prob = 1.0;
    double em_ep_max_prob = 0.0;
    std::size_t vb_small_entries = 0;  // probabilities below 0.02
    int em_ep_cross_iter = -1;         // first M-step with max_delta < 1e-4
    int vb_max_cross_iter = -1;
};

inline int first_crossing(const std::vector<TrainIterRecord>& trace, double threshold) {
    for (const TrainIterRecord& rec : trace) {
        if (rec.max_delta < threshold) {
            return rec.iteration;
        }
    }
    return -1;
}

inline FiveWordRun run_five_word(std::uint64_t seed, int threads = 1) {
    const AspectModel source = uniform_unigram_model(5);
    const Corpus train_set =
        sample_corpus(source, 100, 100, derive_seed(seed, SeedPurpose::experiment, 2));
    LearnConfig ep_cfg;
    ep_cfg.method = LearnMethod::em_ep;
    ep_cfg.n_aspects = 3;
    ep_cfg.fixed_alpha = {1.0, 1.0, 1.0};
    ep_cfg.em_iters = 1500;
    ep_cfg.param_change_stop = 1e-5;
    ep_cfg.init_seed = derive_seed(seed, SeedPurpose::experiment, 3);
    ep_cfg.threads = threads;
    LearnConfig vb_cfg = ep_cfg;
    vb_cfg.method = LearnMethod::vb_max;
    vb_cfg.em_iters = 20000;
    vb_cfg.param_floor = 0.0;
    FiveWordRun run;
    run.em_ep = train(train_set, ep_cfg);
    run.vb_max = train(train_set, vb_cfg);
    for (double p : run.em_ep.model.word_probs) {
        run.em_ep_min_prob = std::min(run.em_ep_min_prob, p);
        run.em_ep_max_prob = std::max(run.em_ep_max_prob, p);
    }
    for (double p : run.vb_max.model.word_probs) {
        if (p < 0.02) {
            ++run.vb_small_entries;
        }
    }
    run.em_ep_cross_iter = first_crossing(run.em_ep.trace, 1e-4);
    run.vb_max_cross_iter = first_crossing(run.vb_max.trace, 1e-4);
    return run;
}

struct FiveWordPerplexity {
    PerplexityReport em_ep;
    PerplexityReport vb_max;
};

inline FiveWordPerplexity five_word_perplexity(const AspectModel& em_ep_model,
                                               const AspectModel& vb_max_model,
                                               std::uint64_t seed, int threads = 1) {
    const AspectModel source = uniform_unigram_model(5);
    const Corpus test_set =
        sample_corpus(source, 1000, 100, derive_seed(seed, SeedPurpose::experiment, 4));
    FiveWordPerplexity out;
    out.em_ep = perplexity(em_ep_model, test_set, 1024,
                           derive_seed(seed, SeedPurpose::experiment, 5),
                           ProposalKind::ep_posterior, {}, threads);
    out.vb_max = perplexity(vb_max_model, test_set, 1024,
                            derive_seed(seed, SeedPurpose::experiment, 6),
                            ProposalKind::ep_posterior, {}, threads);
    return out;
}

// ---- two-class experiment ----

struct TwoClassRun {
    std::size_t ep_errors = 0;
    std::size_t vb_errors = 0;
    std::size_t n_test_docs = 0;
};

inline TwoClassRun run_two_class(std::uint64_t seed, int threads = 1) {
    const AspectModel source0 = uniform_unigram_model(5);
    const AspectModel source1 = ramp_unigram_model(5);
    const Corpus train0 =
        sample_corpus(source0, 50, 50, derive_seed(seed, SeedPurpose::experiment, 10));
    const Corpus train1 =
        sample_corpus(source1, 50, 50, derive_seed(seed, SeedPurpose::experiment, 11));
    auto fit = [&](const Corpus& data, LearnMethod method, std::uint64_t init_index) {
        LearnConfig cfg;
        cfg.method = method;
        cfg.n_aspects = 3;
        cfg.fixed_alpha = {1.0, 1.0, 1.0};
        cfg.init_seed = derive_seed(seed, SeedPurpose::experiment, init_index);
        cfg.threads = threads;
        if (method == LearnMethod::em_ep) {
            cfg.em_iters = 800;
            cfg.param_change_stop = 1e-5;
        } else {
            cfg.em_iters = 8000;
            cfg.param_change_stop = 1e-6;
            cfg.param_floor = 0.0;
        }
        return train(data, cfg).model;
    };
    const std::vector<AspectModel> ep_models = {fit(train0, LearnMethod::em_ep, 12),
                                                fit(train1, LearnMethod::em_ep, 13)};
    const std::vector<AspectModel> vb_models = {fit(train0, LearnMethod::vb_max, 12),
                                                fit(train1, LearnMethod::vb_max, 13)};
    const Corpus test0 =
        sample_corpus(source0, 1000, 50, derive_seed(seed, SeedPurpose::experiment, 14));
    const Corpus test1 =
        sample_corpus(source1, 1000, 50, derive_seed(seed, SeedPurpose::experiment, 15));
    const Corpus test_set = labeled_union(test0, 0, test1, 1);
    TwoClassRun run;
    run.n_test_docs = test_set.size();
    run.ep_errors = classify(ep_models, test_set, "ep", {}, {}, threads).n_errors;
    run.vb_errors = classify(vb_models, test_set, "vb", {}, {}, threads).n_errors;
    return run;
}

// ---- concatenated-topics experiment ----

struct ConcatTopicsRun {
    PerplexityReport ep_perplexity;
    PerplexityReport vb_perplexity;
    double ep_alpha_spread = 0.0;  // max / min of the learned alpha
    double vb_alpha_spread = 0.0;
    std::vector<double> ep_alpha;
    std::vector<double> vb_alpha;
};

inline double alpha_spread(const std::vector<double>& alpha) {
    const auto [lo, hi] = std::minmax_element(alpha.begin(), alpha.end());
    return *hi / *lo;
}

// Documents are concatenations of three pool snippets, each snippet drawn from
// one of six block-structured topics; mirrors mixing documents of known topics.
inline ConcatTopicsRun run_concat_topics(std::uint64_t seed, int threads = 1) {
    const std::size_t n_topics = 6;
    const std::size_t n_words = 60;
    std::vector<std::vector<Document>> pools;
    Vocabulary vocab;
    for (std::size_t w = 0; w < n_words; ++w) {
        vocab.add("w" + std::to_string(w));
    }
    for (std::size_t t = 0; t < n_topics; ++t) {
        const AspectModel topic = block_unigram_model(n_words, 10 * t);
        pools.push_back(
            sample_corpus(topic, 50, 60, derive_seed(seed, SeedPurpose::experiment, 20 + t))
                .documents);
    }
    const Corpus full = concat_topic_documents(
        vocab, pools, 3, 200, derive_seed(seed, SeedPurpose::experiment, 30));
    const Corpus train_set = subset_corpus(full, 0, 150);
    const Corpus test_set = subset_corpus(full, 150, 200);
    auto fit = [&](LearnMethod method) {
        LearnConfig cfg;
        cfg.method = method;
        cfg.n_aspects = n_topics;
        cfg.learn_alpha = true;
        cfg.init_seed = derive_seed(seed, SeedPurpose::experiment, 31);
        cfg.threads = threads;
        if (method == LearnMethod::em_ep) {
            cfg.em_iters = 200;
            cfg.param_change_stop = 1e-4;
        } else {
            cfg.em_iters = 3000;
            cfg.param_change_stop = 1e-6;
        }
        return train(train_set, cfg).model;
    };
    const AspectModel ep_model = fit(LearnMethod::em_ep);
    const AspectModel vb_model = fit(LearnMethod::vb_max);
    ConcatTopicsRun run;
    run.ep_alpha = ep_model.alpha;
    run.vb_alpha = vb_model.alpha;
    run.ep_alpha_spread = alpha_spread(ep_model.alpha);
    run.vb_alpha_spread = alpha_spread(vb_model.alpha);
    run.ep_perplexity = perplexity(ep_model, test_set, 1024,
                                   derive_seed(seed, SeedPurpose::experiment, 32),
                                   ProposalKind::ep_posterior, {}, threads);
    run.vb_perplexity = perplexity(vb_model, test_set, 1024,
                                   derive_seed(seed, SeedPurpose::experiment, 33),
                                   ProposalKind::ep_posterior, {}, threads);
    return run;
}

}  // namespace aspectmix
