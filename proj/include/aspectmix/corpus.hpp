#pragma once

#include <algorithm>
#include <cctype>
#include <cstddef>
#include <fstream>
#include <map>
#include <optional>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "rng.hpp"

namespace aspectmix {

class Vocabulary {
public:
    std::size_t add(const std::string& word) {
        auto it = index_.find(word);
        if (it != index_.end()) {
            return it->second;
        }
        const std::size_t id = words_.size();
        words_.push_back(word);
        index_.emplace(word, id);
        return id;
    }

    std::optional<std::size_t> find(const std::string& word) const {
        auto it = index_.find(word);
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    const std::string& word(std::size_t id) const {
        if (id >= words_.size()) {
            throw std::out_of_range("Vocabulary::word: id out of range");
        }
        return words_[id];
    }

    std::size_t size() const { return words_.size(); }

private:
    std::vector<std::string> words_;
    std::unordered_map<std::string, std::size_t> index_;
};

// Sparse word counts, ascending by word id.  Counts are real-valued and positive;
// fractional counts are legal everywhere downstream.
struct Document {
    std::vector<std::pair<std::size_t, double>> counts;

    double length() const {
        double n = 0.0;
        for (const auto& [w, c] : counts) {
            n += c;
        }
        return n;
    }
};

inline Document make_document(const std::vector<std::pair<std::size_t, double>>& entries) {
    std::map<std::size_t, double> acc;
    for (const auto& [w, c] : entries) {
        if (c < 0.0) {
            throw std::invalid_argument("make_document: negative count");
        }
        acc[w] += c;
    }
    Document doc;
    for (const auto& [w, c] : acc) {
        if (c > 0.0) {
            doc.counts.emplace_back(w, c);
        }
    }
    return doc;
}

struct Corpus {
    Vocabulary vocabulary;
    std::vector<Document> documents;
    std::vector<std::string> doc_ids;   // parallel to documents
    std::vector<int> labels;            // empty when the corpus is unlabeled

    std::size_t size() const { return documents.size(); }

    void check_word_ids() const {
        for (const Document& doc : documents) {
            for (const auto& [w, c] : doc.counts) {
                if (w >= vocabulary.size()) {
                    throw std::invalid_argument("Corpus: word id exceeds vocabulary");
                }
            }
        }
    }
};

namespace detail {

inline bool is_comment_or_blank(const std::string& line) {
    for (char ch : line) {
        if (ch == '#') return true;
        if (!std::isspace(static_cast<unsigned char>(ch))) return false;
    }
    return true;  // blank
}

inline std::vector<std::string> split_ws(const std::string& line) {
    std::vector<std::string> out;
    std::istringstream ss(line);
    std::string tok;
    while (ss >> tok) {
        out.push_back(tok);
    }
    return out;
}

inline double parse_count(const std::string& s, const std::string& where) {
    std::size_t pos = 0;
    double v = 0.0;
    try {
        v = std::stod(s, &pos);
    } catch (const std::exception&) {
        throw std::runtime_error(where + ": bad count '" + s + "'");
    }
    if (pos != s.size() || !(v >= 0.0)) {
        throw std::runtime_error(where + ": bad count '" + s + "'");
    }
    return v;
}

inline bool parse_int(const std::string& s, long& out) {
    if (s.empty()) return false;
    std::size_t pos = 0;
    try {
        out = std::stol(s, &pos);
    } catch (const std::exception&) {
        return false;
    }
    return pos == s.size();
}

}  // namespace detail

inline Vocabulary load_vocabulary(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open vocabulary file: " + path);
    }
    Vocabulary vocab;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_comment_or_blank(line)) {
            continue;
        }
        std::istringstream ss(line);
        std::string word;
        ss >> word;
        if (vocab.find(word)) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": duplicate word '" + word + "'");
        }
        vocab.add(word);
    }
    if (vocab.size() == 0) {
        throw std::runtime_error(path + ": empty vocabulary");
    }
    return vocab;
}

// One document per line: "<doc-id> [<integer label>] <word-id>:<count> ..."
inline Corpus load_bow_corpus(const std::string& path, const std::string& vocab_path) {
    Corpus corpus;
    corpus.vocabulary = load_vocabulary(vocab_path);
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open corpus file: " + path);
    }
    std::string line;
    std::size_t line_no = 0;
    bool any_label = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_comment_or_blank(line)) {
            continue;
        }
        const std::string where = path + ":" + std::to_string(line_no);
        const std::vector<std::string> toks = detail::split_ws(line);
        std::size_t k = 0;
        const std::string doc_id = toks[k++];
        std::optional<int> label;
        if (k < toks.size() && toks[k].find(':') == std::string::npos) {
            long v = 0;
            if (!detail::parse_int(toks[k], v)) {
                throw std::runtime_error(where + ": expected label or id:count, got '" + toks[k] + "'");
            }
            label = static_cast<int>(v);
            ++k;
        }
        std::vector<std::pair<std::size_t, double>> entries;
        for (; k < toks.size(); ++k) {
            const std::string& tok = toks[k];
            const std::size_t colon = tok.find(':');
            if (colon == std::string::npos || colon == 0 || colon + 1 >= tok.size()) {
                throw std::runtime_error(where + ": malformed entry '" + tok + "'");
            }
            long wid = 0;
            if (!detail::parse_int(tok.substr(0, colon), wid) || wid < 0) {
                throw std::runtime_error(where + ": bad word id in '" + tok + "'");
            }
            if (static_cast<std::size_t>(wid) >= corpus.vocabulary.size()) {
                throw std::runtime_error(where + ": word id " + std::to_string(wid) +
                                         " exceeds vocabulary size " +
                                         std::to_string(corpus.vocabulary.size()));
            }
            const double c = detail::parse_count(tok.substr(colon + 1), where);
            entries.emplace_back(static_cast<std::size_t>(wid), c);
        }
        corpus.documents.push_back(make_document(entries));
        corpus.doc_ids.push_back(doc_id);
        if (label) {
            any_label = true;
        }
        corpus.labels.push_back(label.value_or(-1));
    }
    if (!any_label) {
        corpus.labels.clear();
    }
    return corpus;
}

// One document per line; tokens are lowercased and counted, the vocabulary is
// built in order of first appearance.
inline Corpus load_text_corpus(const std::string& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open corpus file: " + path);
    }
    Corpus corpus;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (detail::is_comment_or_blank(line)) {
            continue;
        }
        std::vector<std::pair<std::size_t, double>> entries;
        for (std::string tok : detail::split_ws(line)) {
            std::transform(tok.begin(), tok.end(), tok.begin(),
                           [](unsigned char ch) { return std::tolower(ch); });
            entries.emplace_back(corpus.vocabulary.add(tok), 1.0);
        }
        if (entries.empty()) {
            continue;
        }
        corpus.documents.push_back(make_document(entries));
        corpus.doc_ids.push_back("d" + std::to_string(corpus.documents.size() - 1));
    }
    if (corpus.documents.empty()) {
        throw std::runtime_error(path + ": no documents");
    }
    return corpus;
}

// "dir/name.bow" resolves to "dir/name.vocab"; anything else gets ".vocab" appended
inline std::string default_vocab_path(const std::string& path) {
    const std::string ext = ".bow";
    if (path.size() > ext.size() &&
        path.compare(path.size() - ext.size(), ext.size(), ext) == 0) {
        return path.substr(0, path.size() - ext.size()) + ".vocab";
    }
    return path + ".vocab";
}

inline Corpus load_corpus(const std::string& path, const std::string& format,
                          const std::string& vocab_path = "") {
    if (format == "bow") {
        return load_bow_corpus(path, vocab_path.empty() ? default_vocab_path(path) : vocab_path);
    }
    if (format == "text") {
        return load_text_corpus(path);
    }
    throw std::invalid_argument("load_corpus: unknown format '" + format + "'");
}

inline void write_number(std::ostream& os, double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    os << buf;
}

inline void save_corpus(const Corpus& corpus, const std::string& bow_path,
                        const std::string& vocab_path,
                        const std::vector<std::string>& header_lines = {}) {
    {
        std::ofstream out(vocab_path);
        if (!out) {
            throw std::runtime_error("cannot write vocabulary file: " + vocab_path);
        }
        for (const std::string& h : header_lines) {
            out << "# " << h << "\n";
        }
        for (std::size_t w = 0; w < corpus.vocabulary.size(); ++w) {
            out << corpus.vocabulary.word(w) << "\n";
        }
    }
    std::ofstream out(bow_path);
    if (!out) {
        throw std::runtime_error("cannot write corpus file: " + bow_path);
    }
    for (const std::string& h : header_lines) {
        out << "# " << h << "\n";
    }
    const bool labeled = corpus.labels.size() == corpus.documents.size();
    for (std::size_t i = 0; i < corpus.documents.size(); ++i) {
        out << (i < corpus.doc_ids.size() ? corpus.doc_ids[i] : "d" + std::to_string(i));
        if (labeled) {
            out << " " << corpus.labels[i];
        }
        for (const auto& [w, c] : corpus.documents[i].counts) {
            out << " " << w << ":";
            write_number(out, c);
        }
        out << "\n";
    }
}

// Empirical word distribution over the whole corpus.
inline std::vector<double> corpus_unigram(const Corpus& corpus) {
    if (corpus.vocabulary.size() == 0) {
        throw std::invalid_argument("corpus_unigram: empty vocabulary");
    }
    std::vector<double> freq(corpus.vocabulary.size(), 0.0);
    double total = 0.0;
    for (const Document& doc : corpus.documents) {
        for (const auto& [w, c] : doc.counts) {
            if (w >= freq.size()) {
                throw std::invalid_argument("corpus_unigram: word id exceeds vocabulary");
            }
            freq[w] += c;
            total += c;
        }
    }
    if (!(total > 0.0)) {
        throw std::invalid_argument("corpus_unigram: corpus has no tokens");
    }
    for (double& f : freq) {
        f /= total;
    }
    return freq;
}

// Builds documents by concatenating randomly drawn members of topic-specific
// pools; every output document mixes parts_per_doc pool draws.
inline Corpus concat_topic_documents(const Vocabulary& vocab,
                                     const std::vector<std::vector<Document>>& pools,
                                     std::size_t parts_per_doc,
                                     std::size_t n_docs,
                                     std::uint64_t seed) {
    if (pools.empty() || parts_per_doc == 0 || n_docs == 0) {
        throw std::invalid_argument("concat_topic_documents: empty input");
    }
    for (const auto& pool : pools) {
        if (pool.empty()) {
            throw std::invalid_argument("concat_topic_documents: empty pool");
        }
    }
    Corpus out;
    out.vocabulary = vocab;
    const std::vector<double> pool_weights(pools.size(), 1.0);
    for (std::size_t i = 0; i < n_docs; ++i) {
        Rng rng(derive_seed(seed, SeedPurpose::concat, i));
        std::vector<std::pair<std::size_t, double>> entries;
        for (std::size_t part = 0; part < parts_per_doc; ++part) {
            const std::size_t t = rng.categorical(pool_weights);
            const std::size_t j = static_cast<std::size_t>(rng.uniform() * pools[t].size());
            const Document& piece = pools[t][std::min(j, pools[t].size() - 1)];
            entries.insert(entries.end(), piece.counts.begin(), piece.counts.end());
        }
        out.documents.push_back(make_document(entries));
        out.doc_ids.push_back("d" + std::to_string(i));
    }
    out.check_word_ids();
    return out;
}

}  // namespace aspectmix
