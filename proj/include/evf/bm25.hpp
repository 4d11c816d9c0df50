#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace evf {

/// Lowercase ASCII, split on every run of non-alphanumeric bytes. Bytes >= 0x80
/// are kept inside tokens so UTF-8 words survive intact.
std::vector<std::string> tokenize(std::string_view text);

struct Bm25Params {
    double k1 = 1.2;
    double b = 0.75;
};

/// Corpus-level statistics for Okapi BM25.
struct CorpusStats {
    std::size_t document_count = 0;
    double average_length = 0.0;
    std::unordered_map<std::string, std::size_t> document_frequency;

    static CorpusStats from_documents(std::span<const std::vector<std::string>> documents);
    double idf(const std::string& term) const;
};

/// sum over query tokens t of idf(t) * tf * (k1 + 1) / (tf + k1 * (1 - b + b * len / avglen))
/// with idf(t) = ln(1 + (N - df + 0.5) / (df + 0.5)). Duplicate query tokens count
/// once per occurrence.
double bm25_score(std::span<const std::string> query_tokens, std::span<const std::string> document_tokens,
                  const CorpusStats& stats, const Bm25Params& params = {});

/// Term-id indexed corpus for scoring many documents against one query.
class Bm25Index {
public:
    explicit Bm25Index(std::span<const std::vector<std::string>> documents, Bm25Params params = {});

    std::size_t size() const noexcept { return doc_terms_.size(); }
    const CorpusStats& stats() const noexcept { return stats_; }

    /// Score of every listed document (indexes into the construction order).
    /// The OpenMP kernel; `score_serial` is the single-threaded reference.
    std::vector<double> score(std::span<const std::string> query_tokens, std::span<const std::size_t> docs) const;
    std::vector<double> score_serial(std::span<const std::string> query_tokens,
                                     std::span<const std::size_t> docs) const;

private:
    struct QueryTerm {
        std::uint32_t id;
        double idf;
    };
    std::vector<QueryTerm> prepare(std::span<const std::string> query_tokens) const;
    double score_prepared(std::span<const QueryTerm> query, std::size_t doc) const;

    Bm25Params params_;
    CorpusStats stats_;
    std::unordered_map<std::string, std::uint32_t> term_ids_;
    std::vector<double> idf_by_term_;
    // Per document: (term id, tf) sorted by term id.
    std::vector<std::vector<std::pair<std::uint32_t, std::uint32_t>>> doc_terms_;
    std::vector<double> length_norm_;  // k1 * (1 - b + b * len / avglen)
};

}  // namespace evf
