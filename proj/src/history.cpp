#include "evf/history.hpp"

#include <algorithm>
#include <numeric>
#include <tuple>
#include <unordered_set>

#include <nlohmann/json.hpp>

#include <httplib.h>

namespace evf {

std::string render_event(const AtomicEvent& e, const TimeWindow& window)
{
    return "(" + e.subject.str() + ", " + e.relation.str() + ", " + e.object.str() + ", " +
           std::to_string(e.timestamp.day - window.start.day) + ")";
}

namespace {

bool item_less(const HistoryItem& a, const HistoryItem& b)
{
    return std::tie(a.timestamp, a.source_uid) < std::tie(b.timestamp, b.source_uid);
}

}  // namespace

std::vector<HistoryItem> truncate_history(std::vector<HistoryItem> items, std::size_t cap)
{
    std::sort(items.begin(), items.end(), item_less);
    if (items.size() > cap) {
        items.erase(items.begin(), items.end() - static_cast<std::ptrdiff_t>(cap));
    }
    return items;
}

RetrieverKind retriever_kind_from_string(std::string_view s)
{
    if (s == "bm25" || s == "lexical-bm25") return RetrieverKind::LexicalBm25;
    if (s == "external" || s == "external-embedding") return RetrieverKind::ExternalEmbedding;
    throw std::invalid_argument("unknown retriever '" + std::string(s) + "'");
}

std::string_view to_string(RetrieverKind k)
{
    return k == RetrieverKind::LexicalBm25 ? "lexical-bm25" : "external-embedding";
}

// ---------------------------------------------------------------------------
// Retrievers

namespace {

std::vector<std::vector<std::string>> tokenized_corpus(const EventStore& store)
{
    std::vector<std::vector<std::string>> docs;
    docs.reserve(store.subevent_count());
    for (const auto& s : store.subevents()) docs.push_back(tokenize(s.text));
    return docs;
}

}  // namespace

Bm25Retriever::Bm25Retriever(const EventStore& store, Bm25Params params) : index_(tokenized_corpus(store), params)
{
    const auto subs = store.subevents();
    for (std::size_t i = 0; i < subs.size(); ++i) doc_of_uid_[subs[i].uid] = i;
}

std::vector<double> Bm25Retriever::score(std::string_view query_text, std::span<const TextualSubEvent> candidates)
{
    std::vector<std::size_t> docs;
    docs.reserve(candidates.size());
    for (const auto& c : candidates) {
        auto it = doc_of_uid_.find(c.uid);
        if (it == doc_of_uid_.end()) throw RetrieverError("sub-event '" + c.uid + "' is not in the BM25 corpus");
        docs.push_back(it->second);
    }
    return index_.score(tokenize(query_text), docs);
}

ExternalRetriever::ExternalRetriever(std::string endpoint, std::chrono::milliseconds timeout) : timeout_(timeout)
{
    const auto scheme_end = endpoint.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("retriever endpoint must be http://host[:port]/path, got '" + endpoint + "'");
    }
    const auto path_start = endpoint.find('/', scheme_end + 3);
    scheme_host_port_ = endpoint.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/score" : endpoint.substr(path_start);
}

std::vector<double> ExternalRetriever::score(std::string_view query_text, std::span<const TextualSubEvent> candidates)
{
    nlohmann::json uids = nlohmann::json::array();
    for (const auto& c : candidates) uids.push_back(c.uid);
    const nlohmann::json body{{"query", query_text}, {"candidates", uids}};

    httplib::Client client(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());

    auto res = client.Post(path_, body.dump(), "application/json");
    if (!res) throw RetrieverError("external retriever unreachable: " + httplib::to_string(res.error()));
    if (res->status != 200) throw RetrieverError("external retriever status " + std::to_string(res->status));

    std::unordered_map<std::string, double> by_uid;
    try {
        const auto reply = nlohmann::json::parse(res->body);
        for (const auto& s : reply.at("scores")) {
            by_uid[s.at("uid").get<std::string>()] = s.at("score").get<double>();
        }
    } catch (const std::exception& e) {
        throw RetrieverError(std::string("malformed retriever reply: ") + e.what());
    }
    std::vector<double> out;
    out.reserve(candidates.size());
    for (const auto& c : candidates) {
        auto it = by_uid.find(c.uid);
        out.push_back(it == by_uid.end() ? 0.0 : it->second);
    }
    return out;
}

// ---------------------------------------------------------------------------
// Partitioning

namespace {

struct UsableAnnotations {
    std::vector<const ImageAnnotation*> highlighting;
    std::vector<const ImageAnnotation*> complementary;
};

UsableAnnotations split_annotations(std::span<const ImageAnnotation> annotations)
{
    UsableAnnotations u;
    for (const auto& a : annotations) {
        if (a.function == ImageFunction::Highlighting && a.key_subevent_ordinal) u.highlighting.push_back(&a);
        if (a.function == ImageFunction::Complementary && a.complementary_text) u.complementary.push_back(&a);
    }
    return u;
}

/// Complementary items for annotations whose article is in the window and
/// passes `eligible(article_uid)`.
template <typename Eligible>
std::vector<HistoryItem> complementary_items(const EventStore& store, const UsableAnnotations& usable,
                                             const TimeWindow& window, Eligible&& eligible)
{
    std::vector<HistoryItem> out;
    for (const auto* a : usable.complementary) {
        const auto* article = store.find_article(a->article_uid);
        if (article == nullptr || !window.contains(article->timestamp)) continue;
        if (!eligible(a->article_uid)) continue;
        out.push_back(HistoryItem{*a->complementary_text, article->timestamp, a->image_uid});
    }
    return out;
}

HistoryBundle finish(std::vector<HistoryItem> key, std::vector<HistoryItem> remaining,
                     std::vector<HistoryItem> complementary, const HistoryLimits& limits)
{
    HistoryBundle b;
    // Keys are never evicted in favour of remaining items.
    b.key_events = truncate_history(std::move(key), limits.history_cap);
    b.remaining_events = truncate_history(std::move(remaining), limits.history_cap - b.key_events.size());
    b.complementary_events = truncate_history(std::move(complementary), limits.complementary_cap);
    return b;
}

HistoryBundle partition_events(const EventStore& store, const std::vector<AtomicEvent>& candidates,
                               std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                               const HistoryLimits& limits)
{
    const auto usable = split_annotations(annotations);

    std::unordered_set<std::string> key_uids;
    for (const auto* a : usable.highlighting) {
        if (const auto* sub = store.article_subevent(a->article_uid, *a->key_subevent_ordinal)) {
            key_uids.insert(sub->linked_event_uids.begin(), sub->linked_event_uids.end());
        }
    }

    std::unordered_set<std::string> candidate_uids;
    std::vector<HistoryItem> key;
    std::vector<HistoryItem> remaining;
    for (const auto& e : candidates) {
        candidate_uids.insert(e.uid);
        HistoryItem item{render_event(e, window), e.timestamp, e.uid};
        (key_uids.contains(e.uid) ? key : remaining).push_back(std::move(item));
    }

    auto comp = complementary_items(store, usable, window, [&](const std::string& article_uid) {
        for (const auto* sub : store.article_subevents(article_uid)) {
            for (const auto& ev : sub->linked_event_uids) {
                if (candidate_uids.contains(ev)) return true;
            }
        }
        return false;
    });
    return finish(std::move(key), std::move(remaining), std::move(comp), limits);
}

HistoryBundle partition_subevents(const EventStore& store, const std::vector<TextualSubEvent>& candidates,
                                  std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                                  const HistoryLimits& limits)
{
    const auto usable = split_annotations(annotations);

    std::unordered_set<std::string> key_uids;
    for (const auto* a : usable.highlighting) {
        if (const auto* sub = store.article_subevent(a->article_uid, *a->key_subevent_ordinal)) {
            key_uids.insert(sub->uid);
        }
    }

    std::unordered_set<std::string> candidate_articles;
    std::vector<HistoryItem> key;
    std::vector<HistoryItem> remaining;
    for (const auto& s : candidates) {
        candidate_articles.insert(s.article_uid);
        HistoryItem item{s.text, s.timestamp, s.uid};
        (key_uids.contains(s.uid) ? key : remaining).push_back(std::move(item));
    }

    auto comp = complementary_items(store, usable, window, [&](const std::string& article_uid) {
        return candidate_articles.contains(article_uid);
    });
    return finish(std::move(key), std::move(remaining), std::move(comp), limits);
}

std::vector<AtomicEvent> icl_candidates(const EventStore& store, const HistoryQuery& query, const TimeWindow& window)
{
    auto events = store.events_by_subject(query.subject, window);
    auto by_ce = store.events_by_complex_event(query.complex_event, window);
    events.insert(events.end(), std::make_move_iterator(by_ce.begin()), std::make_move_iterator(by_ce.end()));
    std::sort(events.begin(), events.end(), [](const auto& a, const auto& b) {
        return std::tie(a.timestamp, a.uid) < std::tie(b.timestamp, b.uid);
    });
    events.erase(std::unique(events.begin(), events.end(), [](const auto& a, const auto& b) { return a.uid == b.uid; }),
                 events.end());
    return events;
}

}  // namespace

HistoryBundle build_icl_structured(const EventStore& store, const HistoryQuery& query,
                                   std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                                   const HistoryLimits& limits)
{
    return partition_events(store, icl_candidates(store, query, window), annotations, window, limits);
}

HistoryBundle build_icl_unstructured(const EventStore& store, const HistoryQuery& query,
                                     std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                                     const HistoryLimits& limits)
{
    auto subs = store.subevents_for_events(icl_candidates(store, query, window));
    std::erase_if(subs, [&](const TextualSubEvent& s) { return !window.contains(s.timestamp); });
    return partition_subevents(store, subs, annotations, window, limits);
}

HistoryBundle build_rag_structured(const EventStore& store, const HistoryQuery& query,
                                   std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                                   const HistoryLimits& limits)
{
    std::unordered_set<std::string> related{query.subject.str()};
    for (const auto& e : store.events_by_subject(query.subject, window)) related.insert(e.object.str());
    for (const auto& e : store.events_by_object(query.subject, window)) related.insert(e.subject.str());

    std::vector<AtomicEvent> history;
    for (auto& e : store.events_in_window(window)) {
        if (related.contains(e.subject.str()) || related.contains(e.object.str())) history.push_back(std::move(e));
    }
    return partition_events(store, history, annotations, window, limits);
}

HistoryBundle build_rag_unstructured(const EventStore& store, const HistoryQuery& query, Retriever& retriever,
                                     std::span<const ImageAnnotation> annotations, const TimeWindow& window,
                                     const HistoryLimits& limits)
{
    auto pool = store.subevents_in_window(window);
    if (pool.empty()) return {};
    const auto scores = retriever.score(query.text, pool);

    std::vector<std::size_t> order(pool.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto keep = std::min(limits.history_cap, order.size());
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(keep), order.end(),
                      [&](std::size_t a, std::size_t b) {
                          if (scores[a] != scores[b]) return scores[a] > scores[b];
                          if (pool[a].timestamp != pool[b].timestamp) return pool[a].timestamp > pool[b].timestamp;
                          return pool[a].uid < pool[b].uid;
                      });

    std::vector<TextualSubEvent> top;
    top.reserve(keep);
    for (std::size_t i = 0; i < keep; ++i) top.push_back(std::move(pool[order[i]]));
    return partition_subevents(store, top, annotations, window, limits);
}

}  // namespace evf
