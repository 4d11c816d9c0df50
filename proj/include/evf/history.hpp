#pragma once

#include <chrono>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "evf/bm25.hpp"
#include "evf/event_store.hpp"

namespace evf {

/// One line of history as it will appear in a prompt.
struct HistoryItem {
    std::string rendering;
    Timestamp timestamp;
    std::string source_uid;  // event uid, sub-event uid, or image uid (complementary)

    friend bool operator==(const HistoryItem&, const HistoryItem&) = default;
};

/// Key, remaining and complementary history, each ascending by (timestamp, source_uid).
struct HistoryBundle {
    std::vector<HistoryItem> key_events;
    std::vector<HistoryItem> remaining_events;
    std::vector<HistoryItem> complementary_events;

    bool empty() const noexcept
    {
        return key_events.empty() && remaining_events.empty() && complementary_events.empty();
    }
    friend bool operator==(const HistoryBundle&, const HistoryBundle&) = default;
};

/// What the builders need to know about a query.
struct HistoryQuery {
    EntityId subject;
    Timestamp timestamp;
    ComplexEventId complex_event;
    std::string text;  // rendered query, used by text retrieval
};

struct HistoryLimits {
    std::size_t history_cap = 50;        // key + remaining
    std::size_t complementary_cap = 10;  // complementary items
};

/// "(S, R, O, T)" with T relative to the window start.
std::string render_event(const AtomicEvent& e, const TimeWindow& window);

/// Keeps the `cap` most recent items (ties: larger source_uid survives),
/// returned ascending by (timestamp, source_uid).
std::vector<HistoryItem> truncate_history(std::vector<HistoryItem> items, std::size_t cap = 50);

enum class RetrieverKind { LexicalBm25, ExternalEmbedding };

RetrieverKind retriever_kind_from_string(std::string_view s);
std::string_view to_string(RetrieverKind k);

class RetrieverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Scores candidate sub-events against query text.
class Retriever {
public:
    virtual ~Retriever() = default;
    virtual RetrieverKind kind() const noexcept = 0;
    /// One score per candidate, same order.
    virtual std::vector<double> score(std::string_view query_text, std::span<const TextualSubEvent> candidates) = 0;
};

/// BM25 over the whole sub-event corpus of a store.
class Bm25Retriever : public Retriever {
public:
    explicit Bm25Retriever(const EventStore& store, Bm25Params params = {});
    RetrieverKind kind() const noexcept override { return RetrieverKind::LexicalBm25; }
    std::vector<double> score(std::string_view query_text, std::span<const TextualSubEvent> candidates) override;

    const Bm25Index& index() const noexcept { return index_; }

private:
    Bm25Index index_;
    std::unordered_map<std::string, std::size_t> doc_of_uid_;
};

/// Delegates scoring to an out-of-process retriever over HTTP:
/// POST {"query": text, "candidates": [uid, ...]} -> {"scores": [{"uid", "score"}, ...]}.
/// Candidates missing from the reply score 0.
class ExternalRetriever : public Retriever {
public:
    explicit ExternalRetriever(std::string endpoint, std::chrono::milliseconds timeout = std::chrono::seconds(30));
    RetrieverKind kind() const noexcept override { return RetrieverKind::ExternalEmbedding; }
    std::vector<double> score(std::string_view query_text, std::span<const TextualSubEvent> candidates) override;

private:
    std::string scheme_host_port_;
    std::string path_;
    std::chrono::milliseconds timeout_;
};

HistoryBundle build_icl_structured(const EventStore& store, const HistoryQuery& query,
                                   std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                                   const HistoryLimits& limits = {});

HistoryBundle build_icl_unstructured(const EventStore& store, const HistoryQuery& query,
                                     std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                                     const HistoryLimits& limits = {});

HistoryBundle build_rag_structured(const EventStore& store, const HistoryQuery& query,
                                   std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                                   const HistoryLimits& limits = {});

HistoryBundle build_rag_unstructured(const EventStore& store, const HistoryQuery& query, Retriever& retriever,
                                     std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                                     const HistoryLimits& limits = {});

}  // namespace evf
