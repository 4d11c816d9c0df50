#include "evf/bm25.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>

namespace evf {

std::vector<std::string> tokenize(std::string_view text)
{
    std::vector<std::string> out;
    std::string current;
    for (char c : text) {
        const auto u = static_cast<unsigned char>(c);
        if (std::isalnum(u) != 0 || u >= 0x80) {
            current.push_back(static_cast<char>(std::tolower(u)));
        } else if (!current.empty()) {
            out.push_back(std::move(current));
            current.clear();
        }
    }
    if (!current.empty()) out.push_back(std::move(current));
    return out;
}

CorpusStats CorpusStats::from_documents(std::span<const std::vector<std::string>> documents)
{
    CorpusStats s;
    s.document_count = documents.size();
    std::size_t total = 0;
    for (const auto& doc : documents) {
        total += doc.size();
        std::vector<std::string> uniq(doc.begin(), doc.end());
        std::sort(uniq.begin(), uniq.end());
        uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
        for (auto& t : uniq) ++s.document_frequency[t];
    }
    s.average_length = documents.empty() ? 0.0 : static_cast<double>(total) / static_cast<double>(documents.size());
    return s;
}

double CorpusStats::idf(const std::string& term) const
{
    auto it = document_frequency.find(term);
    const double df = it == document_frequency.end() ? 0.0 : static_cast<double>(it->second);
    const double n = static_cast<double>(document_count);
    return std::log(1.0 + (n - df + 0.5) / (df + 0.5));
}

namespace {

double length_norm(double len, double avg, const Bm25Params& p)
{
    // An all-empty corpus has avglen 0; every tf is 0 there, so any finite norm works.
    const double ratio = avg > 0.0 ? len / avg : 0.0;
    return p.k1 * (1.0 - p.b + p.b * ratio);
}

}  // namespace

double bm25_score(std::span<const std::string> query_tokens, std::span<const std::string> document_tokens,
                  const CorpusStats& stats, const Bm25Params& params)
{
    const double norm = length_norm(static_cast<double>(document_tokens.size()), stats.average_length, params);
    double score = 0.0;
    for (const auto& term : query_tokens) {
        const auto tf = static_cast<double>(std::count(document_tokens.begin(), document_tokens.end(), term));
        if (tf == 0.0) continue;
        score += stats.idf(term) * tf * (params.k1 + 1.0) / (tf + norm);
    }
    return score;
}

Bm25Index::Bm25Index(std::span<const std::vector<std::string>> documents, Bm25Params params)
    : params_(params), stats_(CorpusStats::from_documents(documents))
{
    doc_terms_.reserve(documents.size());
    length_norm_.reserve(documents.size());
    for (const auto& doc : documents) {
        std::vector<std::uint32_t> ids;
        ids.reserve(doc.size());
        for (const auto& t : doc) {
            auto [it, inserted] = term_ids_.try_emplace(t, static_cast<std::uint32_t>(term_ids_.size()));
            ids.push_back(it->second);
        }
        std::sort(ids.begin(), ids.end());
        std::vector<std::pair<std::uint32_t, std::uint32_t>> tf;
        for (auto id : ids) {
            if (!tf.empty() && tf.back().first == id) {
                ++tf.back().second;
            } else {
                tf.emplace_back(id, 1);
            }
        }
        doc_terms_.push_back(std::move(tf));
        length_norm_.push_back(length_norm(static_cast<double>(doc.size()), stats_.average_length, params_));
    }
    idf_by_term_.resize(term_ids_.size());
    for (const auto& [term, id] : term_ids_) idf_by_term_[id] = stats_.idf(term);
}

std::vector<Bm25Index::QueryTerm> Bm25Index::prepare(std::span<const std::string> query_tokens) const
{
    std::vector<QueryTerm> q;
    q.reserve(query_tokens.size());
    for (const auto& t : query_tokens) {
        // Terms outside the corpus match no document.
        if (auto it = term_ids_.find(t); it != term_ids_.end()) q.push_back({it->second, idf_by_term_[it->second]});
    }
    return q;
}

double Bm25Index::score_prepared(std::span<const QueryTerm> query, std::size_t doc) const
{
    const auto& terms = doc_terms_[doc];
    const double norm = length_norm_[doc];
    double score = 0.0;
    for (const auto& q : query) {
        auto it = std::lower_bound(terms.begin(), terms.end(), q.id,
                                   [](const auto& entry, std::uint32_t id) { return entry.first < id; });
        if (it == terms.end() || it->first != q.id) continue;
        const double tf = it->second;
        score += q.idf * tf * (params_.k1 + 1.0) / (tf + norm);
    }
    return score;
}

std::vector<double> Bm25Index::score(std::span<const std::string> query_tokens,
                                     std::span<const std::size_t> docs) const
{
    const auto query = prepare(query_tokens);
    std::vector<double> out(docs.size());
    const auto n = static_cast<std::ptrdiff_t>(docs.size());
#pragma omp parallel for schedule(static) if (n > 512)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        out[static_cast<std::size_t>(i)] = score_prepared(query, docs[static_cast<std::size_t>(i)]);
    }
    return out;
}

std::vector<double> Bm25Index::score_serial(std::span<const std::string> query_tokens,
                                            std::span<const std::size_t> docs) const
{
    const auto query = prepare(query_tokens);
    std::vector<double> out;
    out.reserve(docs.size());
    for (auto d : docs) out.push_back(score_prepared(query, d));
    return out;
}

}  // namespace evf
