#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include <aspectmix/aspectmix.hpp>

namespace {

using namespace aspectmix;

std::string fmt(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

std::string trim(const std::string& s) {
    const auto first = s.find_first_not_of(" \t\r");
    if (first == std::string::npos) {
        return "";
    }
    return s.substr(first, s.find_last_not_of(" \t\r") - first + 1);
}

void add_config_option(CLI::App* cmd) {
    cmd->add_option("--config", "option values file (key=value lines); command-line flags win");
}

// Expands --config files into command-line tokens before parsing.  Flat
// key=value lines, '#' starts a comment, values optionally double-quoted;
// keys already present on the command line keep their explicit values.
std::vector<std::string> expand_config_args(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    std::string path;
    for (std::size_t i = 0; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            path = args[i + 1];
            break;
        }
        if (args[i].rfind("--config=", 0) == 0) {
            path = args[i].substr(9);
            break;
        }
    }
    if (path.empty()) {
        return args;
    }
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error(path + ": cannot open config file");
    }
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        const std::string stripped = trim(line);
        if (stripped.empty() || stripped.front() == '#') {
            continue;
        }
        const auto eq = stripped.find('=');
        if (eq == std::string::npos) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key=value");
        }
        const std::string key = trim(stripped.substr(0, eq));
        std::string value = trim(stripped.substr(eq + 1));
        if (key.empty() || value.empty()) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": expected key=value");
        }
        if (key == "config") {
            continue;
        }
        const std::string flag = "--" + key;
        bool given = false;
        for (const std::string& a : args) {
            if (a == flag || a.rfind(flag + "=", 0) == 0) {
                given = true;
                break;
            }
        }
        if (given) {
            continue;
        }
        std::vector<std::string> tokens;
        if (value.size() >= 2 && value.front() == '"' && value.back() == '"') {
            tokens.push_back(value.substr(1, value.size() - 2));
        } else {
            std::istringstream parts(value);
            std::string tok;
            while (parts >> tok) {
                tokens.push_back(tok);
            }
        }
        if (tokens.size() == 1) {
            args.push_back(flag + "=" + tokens.front());
        } else {
            args.push_back(flag);
            args.insert(args.end(), tokens.begin(), tokens.end());
        }
    }
    return args;
}

// Resolved option values of the subcommand, embedded as comments in every
// output file so results carry their own provenance.
std::vector<std::string> config_header(const CLI::App& cmd) {
    std::vector<std::string> lines;
    lines.push_back("command: " + cmd.get_name());
    std::istringstream ss(cmd.config_to_str(true, false));
    std::string line;
    while (std::getline(ss, line)) {
        if (!line.empty()) {
            lines.push_back(line);
        }
    }
    return lines;
}

std::filesystem::path out_file(const std::string& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    return std::filesystem::path(dir) / name;
}

std::ofstream open_output(const std::string& dir, const std::string& name,
                          const std::vector<std::string>& header) {
    const auto path = out_file(dir, name);
    std::ofstream out(path);
    if (!out) {
        throw std::runtime_error("cannot write " + path.string());
    }
    for (const std::string& h : header) {
        out << "# " << h << "\n";
    }
    return out;
}

struct CorpusArgs {
    std::string corpus_path;
    std::string vocab_path;
    std::string format = "bow";

    void attach(CLI::App* cmd) {
        cmd->add_option("--corpus", corpus_path, "corpus file")->required();
        cmd->add_option("--vocab", vocab_path,
                        "vocabulary file (default: the corpus path with a .vocab extension)");
        cmd->add_option("--format", format, "corpus format")
            ->check(CLI::IsMember({"bow", "text"}));
    }

    Corpus load() const { return load_corpus(corpus_path, format, vocab_path); }
};

struct EpArgs {
    int max_sweeps = 200;
    double tol = 1e-6;
    std::string stepsize = "safe";
    double mu = 1.0;

    void attach(CLI::App* cmd) {
        cmd->add_option("--ep-max-sweeps", max_sweeps, "EP sweep cap");
        cmd->add_option("--ep-tol", tol, "EP convergence tolerance");
        cmd->add_option("--ep-stepsize", stepsize, "EP stepsize rule")
            ->check(CLI::IsMember({"safe", "fixed"}));
        cmd->add_option("--ep-mu", mu, "stepsize for --ep-stepsize fixed");
    }

    EpConfig config() const {
        EpConfig cfg;
        cfg.max_sweeps = max_sweeps;
        cfg.convergence_tol = tol;
        cfg.stepsize_mode = stepsize == "safe" ? StepsizeMode::safe : StepsizeMode::fixed;
        cfg.fixed_mu = mu;
        return cfg;
    }
};

struct VbArgs {
    int max_iters = 1000;
    double tol = 1e-8;

    void attach(CLI::App* cmd) {
        cmd->add_option("--vb-max-iters", max_iters, "VB iteration cap");
        cmd->add_option("--vb-tol", tol, "VB bound-improvement tolerance");
    }

    VbConfig config() const {
        VbConfig cfg;
        cfg.max_iters = max_iters;
        cfg.convergence_tol = tol;
        return cfg;
    }
};

void add_out_option(CLI::App* cmd, std::string& out_dir) {
    cmd->add_option("--out", out_dir, "output directory")->envname("ASPECTMIX_OUT_DIR");
}

// ---- synth ----

struct SynthArgs {
    std::string scenario;
    std::string model_path;
    std::size_t docs = 100;
    std::size_t length = 100;
    std::uint64_t seed = 0;
    std::string out_dir = ".";
};

void run_synth(const SynthArgs& a, const std::vector<std::string>& header) {
    auto save = [&](const Corpus& c, const std::string& stem) {
        save_corpus(c, out_file(a.out_dir, stem + ".bow").string(),
                    out_file(a.out_dir, stem + ".vocab").string(), header);
    };
    if (!a.model_path.empty()) {
        const AspectModel model = load_model(a.model_path);
        save(sample_corpus(model, a.docs, a.length, a.seed), "corpus");
        return;
    }
    if (a.scenario == "two-word") {
        save(sample_corpus(two_word_model(), 10, 10,
                           derive_seed(a.seed, SeedPurpose::experiment, 1)),
             "train");
    } else if (a.scenario == "five-word") {
        const AspectModel source = uniform_unigram_model(5);
        save(sample_corpus(source, 100, 100, derive_seed(a.seed, SeedPurpose::experiment, 2)),
             "train");
        save(sample_corpus(source, 1000, 100, derive_seed(a.seed, SeedPurpose::experiment, 4)),
             "test");
    } else if (a.scenario == "two-class") {
        const AspectModel s0 = uniform_unigram_model(5);
        const AspectModel s1 = ramp_unigram_model(5);
        save(sample_corpus(s0, 50, 50, derive_seed(a.seed, SeedPurpose::experiment, 10)),
             "train0");
        save(sample_corpus(s1, 50, 50, derive_seed(a.seed, SeedPurpose::experiment, 11)),
             "train1");
        const Corpus t0 =
            sample_corpus(s0, 1000, 50, derive_seed(a.seed, SeedPurpose::experiment, 14));
        const Corpus t1 =
            sample_corpus(s1, 1000, 50, derive_seed(a.seed, SeedPurpose::experiment, 15));
        save(labeled_union(t0, 0, t1, 1), "test");
    } else if (a.scenario == "concat-topics") {
        Vocabulary vocab;
        for (std::size_t w = 0; w < 60; ++w) {
            vocab.add("w" + std::to_string(w));
        }
        std::vector<std::vector<Document>> pools;
        for (std::size_t t = 0; t < 6; ++t) {
            pools.push_back(sample_corpus(block_unigram_model(60, 10 * t), 50, 60,
                                          derive_seed(a.seed, SeedPurpose::experiment, 20 + t))
                                .documents);
        }
        const Corpus full = concat_topic_documents(
            vocab, pools, 3, 200, derive_seed(a.seed, SeedPurpose::experiment, 30));
        save(subset_corpus(full, 0, 150), "train");
        save(subset_corpus(full, 150, 200), "test");
    } else {
        throw CLI::ValidationError("synth", "need --scenario or --model");
    }
}

// ---- train ----

struct TrainArgs {
    CorpusArgs corpus;
    std::string method = "em_ep";
    std::size_t aspects = 2;
    int iters = 100;
    std::vector<double> alpha;
    bool learn_alpha = false;
    double param_floor = 1e-10;
    double stop_delta = 0.0;
    std::uint64_t init_seed = 0;
    double init_noise = 0.1;
    std::string wordprob_update = "taylor2";
    EpArgs ep;
    VbArgs vb;
    int threads = 1;
    std::string out_dir = ".";

    LearnConfig config() const {
        LearnConfig cfg;
        cfg.method = method == "vb_max"  ? LearnMethod::vb_max
                     : method == "em_vb" ? LearnMethod::em_vb
                                         : LearnMethod::em_ep;
        cfg.n_aspects = aspects;
        cfg.em_iters = iters;
        cfg.learn_alpha = learn_alpha;
        if (!alpha.empty()) {
            cfg.fixed_alpha = alpha.size() == 1 ? std::vector<double>(aspects, alpha[0]) : alpha;
        }
        cfg.param_floor = param_floor;
        cfg.param_change_stop = stop_delta;
        cfg.init_seed = init_seed;
        cfg.init_noise = init_noise;
        cfg.wordprob_update = wordprob_update == "psi-point"
                                  ? WordProbUpdate::psi_point
                                  : WordProbUpdate::taylor_second_order;
        cfg.ep = ep.config();
        cfg.vb = vb.config();
        cfg.threads = threads;
        return cfg;
    }
};

void run_train(const TrainArgs& a, const std::vector<std::string>& header) {
    const Corpus data = a.corpus.load();
    const TrainResult result = train(data, a.config());
    save_model(result.model, out_file(a.out_dir, "model.txt").string(), header);
    std::ofstream trace = open_output(a.out_dir, "trace.csv", header);
    trace << "iteration,objective,max_delta,n_unconverged_docs\n";
    for (const TrainIterRecord& rec : result.trace) {
        trace << rec.iteration << "," << fmt(rec.objective) << "," << fmt(rec.max_delta) << ","
              << rec.n_unconverged_docs << "\n";
    }
}

// ---- infer ----

struct InferArgs {
    CorpusArgs corpus;
    std::string model_path;
    std::string method = "ep";
    EpArgs ep;
    VbArgs vb;
    int threads = 1;
    std::string out_dir = ".";
};

void run_infer(const InferArgs& a, const std::vector<std::string>& header) {
    const Corpus data = a.corpus.load();
    const AspectModel model = load_model(a.model_path);
    data.check_word_ids();
    if (data.vocabulary.size() != model.n_words) {
        throw std::runtime_error("corpus vocabulary does not match the model");
    }
    const std::size_t N = data.size();
    const std::size_t A = model.n_aspects();
    std::vector<double> values(N), iters(N);
    std::vector<char> converged(N);
    std::vector<std::vector<double>> gammas(N);
    const EpConfig ep_cfg = a.ep.config();
    const VbConfig vb_cfg = a.vb.config();
    parallel_for(N, a.threads, [&](std::size_t i) {
        if (a.method == "ep") {
            const EpResult r = ep_infer(model, data.documents[i], ep_cfg);
            values[i] = r.log_likelihood;
            converged[i] = r.converged;
            iters[i] = r.sweeps_used;
            gammas[i] = r.posterior.values;
        } else {
            const VbResult r = vb_infer(model, data.documents[i], vb_cfg);
            values[i] = r.log_bound;
            converged[i] = r.converged;
            iters[i] = r.iters_used;
            gammas[i] = r.posterior.values;
        }
    });
    std::ofstream out = open_output(a.out_dir, "inference.csv", header);
    out << "doc_id,log_likelihood,converged,iterations";
    for (std::size_t g = 0; g < A; ++g) {
        out << ",gamma_" << g;
    }
    out << "\n";
    for (std::size_t i = 0; i < N; ++i) {
        out << data.doc_ids[i] << "," << fmt(values[i]) << "," << int(converged[i]) << ","
            << iters[i];
        for (double g : gammas[i]) {
            out << "," << fmt(g);
        }
        out << "\n";
    }
}

// ---- eval subcommands ----

struct PerplexityArgs {
    CorpusArgs corpus;
    std::string model_path;
    std::size_t samples = 1024;
    std::uint64_t seed = 0;
    std::string proposal = "ep";
    EpArgs ep;
    int threads = 1;
    std::string out_dir = ".";
};

void run_perplexity(const PerplexityArgs& a, const std::vector<std::string>& header) {
    const Corpus data = a.corpus.load();
    const AspectModel model = load_model(a.model_path);
    const PerplexityReport report = perplexity(
        model, data, a.samples, a.seed,
        a.proposal == "prior" ? ProposalKind::prior : ProposalKind::ep_posterior,
        a.ep.config(), a.threads);
    std::ofstream out = open_output(a.out_dir, "perplexity.txt", header);
    out << "n_docs " << report.n_docs << "\n";
    out << "token_count " << fmt(report.token_count) << "\n";
    out << "total_log_likelihood " << fmt(report.total_log_likelihood) << "\n";
    out << "perplexity " << fmt(report.perplexity) << "\n";
    out << "log_likelihood_std_error " << fmt(report.log_likelihood_std_error) << "\n";
    out << "per_token_std_error " << fmt(report.per_token_std_error) << "\n";
    out << "proposal_fallbacks " << report.n_proposal_fallbacks << "\n";
    std::cout << "perplexity " << fmt(report.perplexity) << " (se/token "
              << fmt(report.per_token_std_error) << ")\n";
}

struct ClassifyArgs {
    CorpusArgs corpus;
    std::vector<std::string> model_paths;
    std::string method = "ep";
    EpArgs ep;
    VbArgs vb;
    int threads = 1;
    std::string out_dir = ".";
};

void run_classify(const ClassifyArgs& a, const std::vector<std::string>& header) {
    const Corpus data = a.corpus.load();
    std::vector<AspectModel> models;
    for (const std::string& p : a.model_paths) {
        models.push_back(load_model(p));
    }
    const ClassifyReport report =
        classify(models, data, a.method, a.ep.config(), a.vb.config(), a.threads);
    {
        std::ofstream out = open_output(a.out_dir, "classify.csv", header);
        out << "doc_id,label,predicted\n";
        for (std::size_t i = 0; i < data.size(); ++i) {
            out << data.doc_ids[i] << "," << data.labels[i] << "," << report.predicted[i]
                << "\n";
        }
    }
    std::ofstream out = open_output(a.out_dir, "classify.txt", header);
    out << "n_docs " << data.size() << "\n";
    out << "n_errors " << report.n_errors << "\n";
    out << "error_rate " << fmt(report.error_rate) << "\n";
    for (std::size_t t = 0; t < report.confusion.size(); ++t) {
        out << "confusion_" << t;
        for (std::size_t p = 0; p < report.confusion[t].size(); ++p) {
            out << " " << report.confusion[t][p];
        }
        out << "\n";
    }
    std::cout << "errors " << report.n_errors << "/" << data.size() << " (rate "
              << fmt(report.error_rate) << ")\n";
}

struct CurveArgs {
    CorpusArgs corpus;
    std::string model_path;
    std::size_t aspect = 0;
    std::size_t word = 0;
    std::size_t grid_points = 101;
    double grid_min = 0.0;
    double grid_max = 1.0;
    std::vector<std::string> methods = {"exact", "max", "vb", "ep"};
    EpArgs ep;
    VbArgs vb;
    int threads = 1;
    std::string out_dir = ".";
};

void run_curve(const CurveArgs& a, const std::vector<std::string>& header) {
    const Corpus data = a.corpus.load();
    const AspectModel model = load_model(a.model_path);
    CurveSpec spec;
    spec.aspect = a.aspect;
    spec.word = a.word;
    if (a.grid_points < 2) {
        throw CLI::ValidationError("curve", "--grid-points must be at least 2");
    }
    for (std::size_t k = 0; k < a.grid_points; ++k) {
        spec.grid.push_back(a.grid_min + (a.grid_max - a.grid_min) * k / (a.grid_points - 1));
    }
    // canonical column order, restricted to the requested methods
    std::vector<std::string> methods;
    for (const std::string& name : {"exact", "max", "vb", "ep"}) {
        if (std::find(a.methods.begin(), a.methods.end(), name) != a.methods.end()) {
            methods.push_back(name);
        }
    }
    if (methods.size() != a.methods.size()) {
        throw CLI::ValidationError("curve", "--methods entries must be exact|max|vb|ep");
    }
    const CurveReport report =
        likelihood_curve(data, model, spec, methods, a.ep.config(), a.vb.config(), a.threads);
    std::ofstream out = open_output(a.out_dir, "curve.csv", header);
    out << "grid_value";
    for (const auto& m : report.methods) {
        out << "," << m.name;
    }
    out << "\n";
    for (std::size_t k = 0; k < report.grid.size(); ++k) {
        out << fmt(report.grid[k]);
        for (const auto& m : report.methods) {
            out << "," << fmt(m.values[k]);
        }
        out << "\n";
    }
    for (const auto& m : report.methods) {
        std::cout << m.name << " argmax " << fmt(report.grid[m.argmax]) << "\n";
    }
}

struct TopWordsArgs {
    std::string model_path;
    std::string vocab_path;
    std::string background_corpus;
    std::size_t per_aspect = 10;
    double threshold = 1.0;
    std::string out_dir = ".";
};

void run_top_words(const TopWordsArgs& a, const std::vector<std::string>& header) {
    const AspectModel model = load_model(a.model_path);
    const Vocabulary vocab = load_vocabulary(a.vocab_path);
    std::vector<double> background;
    if (!a.background_corpus.empty()) {
        Corpus data = load_corpus(a.background_corpus, "bow", a.vocab_path);
        background = corpus_unigram(data);
    }
    const TopWordsReport report =
        top_words(model, vocab, a.per_aspect, background.empty() ? nullptr : &background,
                  a.threshold);
    std::ofstream out = open_output(a.out_dir, "top_words.txt", header);
    for (std::size_t asp = 0; asp < report.per_aspect.size(); ++asp) {
        out << "aspect " << asp << " (alpha " << fmt(model.alpha[asp]) << ")\n";
        for (const auto& [word, prob] : report.per_aspect[asp]) {
            out << "  " << word << " " << fmt(prob) << "\n";
        }
    }
}

// ---- repro ----

struct ReproArgs {
    std::string experiment = "all";
    std::uint64_t seed = 0;
    int threads = 1;
    std::string out_dir = ".";
};

void repro_two_word(const ReproArgs& a, std::ostream& summary,
                    const std::vector<std::string>& header) {
    double dev = 0.0, slack = 0.0, vb = 0.0, em_vb = 0.0, em_ep = 0.0, exact_arg = 0.0;
    const int n_seeds = 20;
    for (int s = 0; s < n_seeds; ++s) {
        const TwoWordCurveRun run = run_two_word_curve(a.seed + s);
        dev += run.max_ep_deviation;
        slack = std::min(slack, run.min_vb_slack);
        vb += run.est_vb_max;
        em_vb += run.est_em_vb;
        em_ep += run.est_em_ep;
        exact_arg += run.grid[run.exact_argmax];
        if (s == 0) {
            std::ofstream out = open_output(a.out_dir, "two_word_curve.csv", header);
            out << "grid_value,exact,max,vb,ep\n";
            for (std::size_t k = 0; k < run.grid.size(); ++k) {
                out << fmt(run.grid[k]) << "," << fmt(run.exact_values[k]) << ","
                    << fmt(run.max_values[k]) << "," << fmt(run.vb_values[k]) << ","
                    << fmt(run.ep_values[k]) << "\n";
            }
        }
    }
    dev /= n_seeds;
    vb /= n_seeds;
    em_vb /= n_seeds;
    em_ep /= n_seeds;
    exact_arg /= n_seeds;
    summary << "[two-word] mean max |EP - exact| = " << fmt(dev / 10.0)
            << " per document (" << fmt(dev) << " per corpus, target <= 0.05/doc)\n";
    summary << "[two-word] worst VB slack = " << fmt(slack) << " (target >= -1e-7)\n";
    summary << "[two-word] mean estimates: vb_max " << fmt(vb) << ", em_vb " << fmt(em_vb)
            << ", em_ep " << fmt(em_ep) << ", exact argmax " << fmt(exact_arg) << "\n";
}

void repro_five_word(const ReproArgs& a, std::ostream& summary,
                     const std::vector<std::string>& header) {
    const FiveWordRun run = run_five_word(a.seed, a.threads);
    save_model(run.em_ep.model, out_file(a.out_dir, "five_word_em_ep.txt").string(), header);
    save_model(run.vb_max.model, out_file(a.out_dir, "five_word_vb_max.txt").string(), header);
    summary << "[five-word] em_ep probabilities in [" << fmt(run.em_ep_min_prob) << ", "
            << fmt(run.em_ep_max_prob) << "] (target within [0.13, 0.26])\n";
    summary << "[five-word] vb_max entries below 0.02: " << run.vb_small_entries
            << " (target >= 3)\n";
    summary << "[five-word] M-steps to param change < 1e-4: em_ep " << run.em_ep_cross_iter
            << ", vb_max " << run.vb_max_cross_iter << " (target em_ep at least 3x fewer)\n";
    const FiveWordPerplexity ppl =
        five_word_perplexity(run.em_ep.model, run.vb_max.model, a.seed, a.threads);
    summary << "[five-word] perplexity em_ep " << fmt(ppl.em_ep.perplexity) << " (se/token "
            << fmt(ppl.em_ep.per_token_std_error) << "), vb_max " << fmt(ppl.vb_max.perplexity)
            << " (targets: em_ep in [4.9, 5.1], vb_max >= em_ep, se <= 0.02)\n";
}

void repro_two_class(const ReproArgs& a, std::ostream& summary) {
    const int n_seeds = 5;
    double ep_total = 0.0, vb_total = 0.0;
    std::size_t n_docs = 0;
    for (int s = 0; s < n_seeds; ++s) {
        const TwoClassRun run = run_two_class(a.seed + s, a.threads);
        ep_total += run.ep_errors;
        vb_total += run.vb_errors;
        n_docs = run.n_test_docs;
    }
    ep_total /= n_seeds;
    vb_total /= n_seeds;
    summary << "[two-class] mean errors over " << n_seeds << " seeds: EP " << fmt(ep_total)
            << "/" << n_docs << ", VB " << fmt(vb_total) << "/" << n_docs
            << " (targets: EP < VB, EP rate <= 6%, VB rate >= 6%)\n";
}

void repro_concat(const ReproArgs& a, std::ostream& summary) {
    const ConcatTopicsRun run = run_concat_topics(a.seed, a.threads);
    summary << "[concat-topics] perplexity EP " << fmt(run.ep_perplexity.perplexity) << ", VB "
            << fmt(run.vb_perplexity.perplexity) << " (target: EP <= VB)\n";
    summary << "[concat-topics] alpha spread EP " << fmt(run.ep_alpha_spread) << ", VB "
            << fmt(run.vb_alpha_spread) << " (target: VB > EP)\n";
}

void run_repro(const ReproArgs& a, const std::vector<std::string>& header) {
    std::ofstream summary = open_output(a.out_dir, "summary.txt", header);
    std::ostringstream buffered;
    if (a.experiment == "two-word" || a.experiment == "all") {
        repro_two_word(a, buffered, header);
    }
    if (a.experiment == "five-word" || a.experiment == "all") {
        repro_five_word(a, buffered, header);
    }
    if (a.experiment == "two-class" || a.experiment == "all") {
        repro_two_class(a, buffered);
    }
    if (a.experiment == "concat-topics" || a.experiment == "all") {
        repro_concat(a, buffered);
    }
    summary << buffered.str();
    std::cout << buffered.str();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Aspect-mixture document models: synthesis, training, inference, evaluation"};
    app.require_subcommand(1);

    SynthArgs synth;
    CLI::App* synth_cmd = app.add_subcommand("synth", "generate synthetic corpora");
    add_config_option(synth_cmd);
    synth_cmd->add_option("--scenario", synth.scenario, "built-in scenario")
        ->check(CLI::IsMember({"two-word", "five-word", "two-class", "concat-topics"}));
    synth_cmd->add_option("--model", synth.model_path, "sample from a saved model instead");
    synth_cmd->add_option("--docs", synth.docs, "documents to sample (with --model)");
    synth_cmd->add_option("--length", synth.length, "tokens per document (with --model)");
    synth_cmd->add_option("--seed", synth.seed, "root seed");
    add_out_option(synth_cmd, synth.out_dir);

    TrainArgs train_args;
    CLI::App* train_cmd = app.add_subcommand("train", "fit a model to a corpus");
    add_config_option(train_cmd);
    train_args.corpus.attach(train_cmd);
    train_cmd->add_option("--method", train_args.method, "learning method")
        ->check(CLI::IsMember({"vb_max", "em_vb", "em_ep"}));
    train_cmd->add_option("--aspects", train_args.aspects, "number of aspects")->required();
    train_cmd->add_option("--iters", train_args.iters, "EM iteration cap");
    train_cmd->add_option("--alpha", train_args.alpha,
                          "fixed alpha (one value broadcasts)")
        ->delimiter(',');
    train_cmd->add_flag("--learn-alpha", train_args.learn_alpha, "refit alpha each M-step");
    train_cmd->add_option("--param-floor", train_args.param_floor,
                          "lower bound applied to word probabilities");
    train_cmd->add_option("--stop-delta", train_args.stop_delta,
                          "stop when the largest parameter change drops below this");
    train_cmd->add_option("--init-seed", train_args.init_seed, "initialization seed");
    train_cmd->add_option("--init-noise", train_args.init_noise,
                          "multiplicative noise scale at initialization");
    train_cmd->add_option("--wordprob-update", train_args.wordprob_update,
                          "expectation handling in the M-step")
        ->check(CLI::IsMember({"taylor2", "psi-point"}));
    train_args.ep.attach(train_cmd);
    train_args.vb.attach(train_cmd);
    train_cmd->add_option("--threads", train_args.threads, "worker threads");
    add_out_option(train_cmd, train_args.out_dir);

    InferArgs infer_args;
    CLI::App* infer_cmd = app.add_subcommand("infer", "per-document posteriors");
    add_config_option(infer_cmd);
    infer_args.corpus.attach(infer_cmd);
    infer_cmd->add_option("--model", infer_args.model_path, "model file")->required();
    infer_cmd->add_option("--method", infer_args.method, "inference method")
        ->check(CLI::IsMember({"ep", "vb"}));
    infer_args.ep.attach(infer_cmd);
    infer_args.vb.attach(infer_cmd);
    infer_cmd->add_option("--threads", infer_args.threads, "worker threads");
    add_out_option(infer_cmd, infer_args.out_dir);

    CLI::App* eval_cmd = app.add_subcommand("eval", "evaluate a trained model");
    eval_cmd->require_subcommand(1);

    PerplexityArgs ppl_args;
    CLI::App* ppl_cmd = eval_cmd->add_subcommand("perplexity", "held-out perplexity");
    add_config_option(ppl_cmd);
    ppl_args.corpus.attach(ppl_cmd);
    ppl_cmd->add_option("--model", ppl_args.model_path, "model file")->required();
    ppl_cmd->add_option("--samples", ppl_args.samples, "importance samples per document");
    ppl_cmd->add_option("--seed", ppl_args.seed, "sampling seed");
    ppl_cmd->add_option("--proposal", ppl_args.proposal, "importance proposal")
        ->check(CLI::IsMember({"ep", "prior"}));
    ppl_args.ep.attach(ppl_cmd);
    ppl_cmd->add_option("--threads", ppl_args.threads, "worker threads");
    add_out_option(ppl_cmd, ppl_args.out_dir);

    ClassifyArgs cls_args;
    CLI::App* cls_cmd = eval_cmd->add_subcommand("classify", "label documents by class models");
    add_config_option(cls_cmd);
    cls_args.corpus.attach(cls_cmd);
    cls_cmd->add_option("--models", cls_args.model_paths, "one model file per class")
        ->required()
        ->expected(2, -1);
    cls_cmd->add_option("--method", cls_args.method, "scoring method")
        ->check(CLI::IsMember({"ep", "vb", "exact", "max"}));
    cls_args.ep.attach(cls_cmd);
    cls_args.vb.attach(cls_cmd);
    cls_cmd->add_option("--threads", cls_args.threads, "worker threads");
    add_out_option(cls_cmd, cls_args.out_dir);

    CurveArgs curve_args;
    CLI::App* curve_cmd =
        eval_cmd->add_subcommand("curve", "corpus likelihood along one parameter");
    add_config_option(curve_cmd);
    curve_args.corpus.attach(curve_cmd);
    curve_cmd->add_option("--model", curve_args.model_path, "base model file")->required();
    curve_cmd->add_option("--aspect", curve_args.aspect, "aspect of the varied entry");
    curve_cmd->add_option("--word", curve_args.word, "word of the varied entry");
    curve_cmd->add_option("--grid-points", curve_args.grid_points, "grid resolution");
    curve_cmd->add_option("--grid-min", curve_args.grid_min, "first grid value");
    curve_cmd->add_option("--grid-max", curve_args.grid_max, "last grid value");
    curve_cmd->add_option("--methods", curve_args.methods, "methods to evaluate")
        ->delimiter(',');
    curve_args.ep.attach(curve_cmd);
    curve_args.vb.attach(curve_cmd);
    curve_cmd->add_option("--threads", curve_args.threads, "worker threads");
    add_out_option(curve_cmd, curve_args.out_dir);

    TopWordsArgs top_args;
    CLI::App* top_cmd = eval_cmd->add_subcommand("top-words", "most probable words per aspect");
    add_config_option(top_cmd);
    top_cmd->add_option("--model", top_args.model_path, "model file")->required();
    top_cmd->add_option("--vocab", top_args.vocab_path, "vocabulary file")->required();
    top_cmd->add_option("--per-aspect", top_args.per_aspect, "words listed per aspect");
    top_cmd->add_option("--unigram-threshold", top_args.threshold,
                        "drop words whose background frequency exceeds this");
    top_cmd->add_option("--background-corpus", top_args.background_corpus,
                        "corpus supplying the background frequencies");
    add_out_option(top_cmd, top_args.out_dir);

    ReproArgs repro_args;
    CLI::App* repro_cmd = app.add_subcommand("repro", "run the built-in studies");
    add_config_option(repro_cmd);
    repro_cmd->add_option("--experiment", repro_args.experiment, "which study to run")
        ->check(CLI::IsMember({"two-word", "five-word", "two-class", "concat-topics", "all"}));
    repro_cmd->add_option("--seed", repro_args.seed, "root seed");
    repro_cmd->add_option("--threads", repro_args.threads, "worker threads");
    add_out_option(repro_cmd, repro_args.out_dir);

    std::vector<std::string> args;
    try {
        args = expand_config_args(argc, argv);
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    try {
        std::reverse(args.begin(), args.end());
        app.parse(std::move(args));
    } catch (const CLI::ParseError& e) {
        return app.exit(e);
    }

    try {
        if (*synth_cmd) {
            run_synth(synth, config_header(*synth_cmd));
        } else if (*train_cmd) {
            run_train(train_args, config_header(*train_cmd));
        } else if (*infer_cmd) {
            run_infer(infer_args, config_header(*infer_cmd));
        } else if (*ppl_cmd) {
            run_perplexity(ppl_args, config_header(*ppl_cmd));
        } else if (*cls_cmd) {
            run_classify(cls_args, config_header(*cls_cmd));
        } else if (*curve_cmd) {
            run_curve(curve_args, config_header(*curve_cmd));
        } else if (*top_cmd) {
            run_top_words(top_args, config_header(*top_cmd));
        } else if (*repro_cmd) {
            run_repro(repro_args, config_header(*repro_cmd));
        }
    } catch (const std::exception& err) {
        std::cerr << "error: " << err.what() << "\n";
        return 1;
    }
    return 0;
}
