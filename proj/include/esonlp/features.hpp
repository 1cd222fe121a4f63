#pragma once

#include "esonlp/error.hpp"
#include "esonlp/preprocess.hpp"

#include "json.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace esonlp {

struct VocabConfig {
    std::size_t min_df = 1;
    std::optional<std::size_t> max_features;
    std::size_t ngram_max = 1; // 1 = unigrams, 2 = unigrams + bigrams

    bool operator==(const VocabConfig&) const = default;
};

/// Terms a document contributes: its tokens, plus space-joined bigrams when enabled.
inline std::vector<std::string> doc_terms(const TokenSeq& doc, std::size_t ngram_max) {
    std::vector<std::string> terms = doc.tokens;
    if (ngram_max >= 2) {
        for (std::size_t i = 0; i + 1 < doc.tokens.size(); ++i) {
            terms.push_back(doc.tokens[i] + " " + doc.tokens[i + 1]);
        }
    }
    return terms;
}

class Vocabulary {
public:
    Vocabulary() = default;

    Vocabulary(std::vector<std::string> terms, std::vector<std::size_t> doc_freq, std::size_t n_docs,
               VocabConfig config)
        : terms_(std::move(terms)), doc_freq_(std::move(doc_freq)), n_docs_(n_docs), config_(config) {
        if (terms_.size() != doc_freq_.size()) {
            throw DataError("vocabulary terms and df have different lengths");
        }
        for (std::size_t i = 0; i < terms_.size(); ++i) {
            if (!index_.emplace(terms_[i], i).second) {
                throw DataError("duplicate vocabulary term '" + terms_[i] + "'");
            }
        }
    }

    std::size_t size() const { return terms_.size(); }
    std::size_t n_docs() const { return n_docs_; }
    const VocabConfig& config() const { return config_; }
    const std::vector<std::string>& terms() const { return terms_; }
    const std::vector<std::size_t>& doc_freq() const { return doc_freq_; }

    std::optional<std::size_t> index_of(const std::string& term) const {
        auto it = index_.find(term);
        if (it == index_.end()) {
            return std::nullopt;
        }
        return it->second;
    }

    /// Smoothed inverse document frequency: ln((1 + N) / (1 + df)) + 1.
    double idf(std::size_t index) const {
        return std::log((1.0 + static_cast<double>(n_docs_)) / (1.0 + static_cast<double>(doc_freq_[index]))) + 1.0;
    }

    nlohmann::ordered_json to_json() const {
        nlohmann::ordered_json j;
        j["terms"] = terms_;
        j["df"] = doc_freq_;
        j["n_docs"] = n_docs_;
        nlohmann::ordered_json cfg;
        cfg["min_df"] = config_.min_df;
        cfg["max_features"] = config_.max_features ? nlohmann::ordered_json(*config_.max_features) : nullptr;
        cfg["ngram_max"] = config_.ngram_max;
        j["config"] = cfg;
        return j;
    }

    static Vocabulary from_json(const nlohmann::json& j) {
        try {
            VocabConfig cfg;
            const auto& c = j.at("config");
            cfg.min_df = c.at("min_df").get<std::size_t>();
            if (c.contains("max_features") && !c["max_features"].is_null()) {
                cfg.max_features = c["max_features"].get<std::size_t>();
            }
            cfg.ngram_max = c.value("ngram_max", std::size_t{1});
            return Vocabulary(j.at("terms").get<std::vector<std::string>>(),
                              j.at("df").get<std::vector<std::size_t>>(), j.at("n_docs").get<std::size_t>(), cfg);
        } catch (const nlohmann::json::exception& e) {
            throw DataError(std::string("malformed vocabulary: ") + e.what());
        }
    }

    /// FNV-1a hash of the serialized vocabulary, as 16 hex digits.
    std::string fingerprint() const {
        const std::string bytes = to_json().dump();
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (unsigned char c : bytes) {
            h ^= c;
            h *= 0x100000001b3ULL;
        }
        char buf[17];
        std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
        return buf;
    }

    bool operator==(const Vocabulary& o) const {
        return terms_ == o.terms_ && doc_freq_ == o.doc_freq_ && n_docs_ == o.n_docs_ && config_ == o.config_;
    }

private:
    std::vector<std::string> terms_;
    std::vector<std::size_t> doc_freq_;
    std::unordered_map<std::string, std::size_t> index_;
    std::size_t n_docs_ = 0;
    VocabConfig config_;
};

/// Fits the term index on training documents. Indices follow lexicographic term order.
inline Vocabulary fit_vocabulary(std::span<const TokenSeq> train_docs, VocabConfig config = {}) {
    if (train_docs.empty()) {
        throw UsageError("fit_vocabulary needs at least one document");
    }
    if (config.ngram_max < 1 || config.ngram_max > 2) {
        throw UsageError("ngram_max must be 1 or 2");
    }
    if (std::all_of(train_docs.begin(), train_docs.end(), [](const TokenSeq& d) { return d.empty(); })) {
        throw DataError("all training documents are empty");
    }
    std::map<std::string, std::size_t> df;
    for (const auto& doc : train_docs) {
        auto terms = doc_terms(doc, config.ngram_max);
        std::sort(terms.begin(), terms.end());
        terms.erase(std::unique(terms.begin(), terms.end()), terms.end());
        for (auto& t : terms) {
            ++df[std::move(t)];
        }
    }
    std::vector<std::pair<std::string, std::size_t>> kept;
    for (auto& [term, count] : df) {
        if (count >= config.min_df) {
            kept.emplace_back(term, count);
        }
    }
    if (config.max_features && kept.size() > *config.max_features) {
        // most frequent first, ties broken by term, then back to lexicographic order
        std::stable_sort(kept.begin(), kept.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
        kept.resize(*config.max_features);
        std::sort(kept.begin(), kept.end());
    }
    std::vector<std::string> terms;
    std::vector<std::size_t> counts;
    for (auto& [term, count] : kept) {
        terms.push_back(std::move(term));
        counts.push_back(count);
    }
    return Vocabulary(std::move(terms), std::move(counts), train_docs.size(), config);
}

/// Sparse vector with strictly increasing indices.
struct SparseVector {
    std::vector<std::pair<std::uint32_t, double>> entries;
    std::size_t dim = 0;

    bool empty() const { return entries.empty(); }

    double norm() const {
        double s = 0.0;
        for (const auto& [_, w] : entries) {
            s += w * w;
        }
        return std::sqrt(s);
    }

    double dot(std::span<const double> dense) const {
        double s = 0.0;
        for (const auto& [i, w] : entries) {
            s += w * dense[i];
        }
        return s;
    }

    bool operator==(const SparseVector&) const = default;
};

/// TF-IDF weights before normalization: raw term count times smoothed idf. OOV terms are dropped.
inline SparseVector tfidf_unnormalized(const TokenSeq& doc, const Vocabulary& vocab) {
    std::map<std::uint32_t, std::size_t> tf;
    for (const auto& t : doc_terms(doc, vocab.config().ngram_max)) {
        if (auto idx = vocab.index_of(t)) {
            ++tf[static_cast<std::uint32_t>(*idx)];
        }
    }
    SparseVector v;
    v.dim = vocab.size();
    v.entries.reserve(tf.size());
    for (const auto& [idx, count] : tf) {
        v.entries.emplace_back(idx, static_cast<double>(count) * vocab.idf(idx));
    }
    return v;
}

/// L2-normalized TF-IDF vector. An all-OOV document yields the zero vector.
inline SparseVector tfidf_vector(const TokenSeq& doc, const Vocabulary& vocab) {
    SparseVector v = tfidf_unnormalized(doc, vocab);
    const double n = v.norm();
    if (n > 0.0) {
        for (auto& [_, w] : v.entries) {
            w /= n;
        }
    }
    return v;
}

} // namespace esonlp
