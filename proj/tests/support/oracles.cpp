#include "oracles.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <map>
#include <set>

#include <spdlog/spdlog.h>

namespace evf::oracle {

namespace {

std::size_t pick(std::mt19937_64& rng, std::size_t n) { return static_cast<std::size_t>(rng() % n); }
bool coin(std::mt19937_64& rng, double p) { return std::uniform_real_distribution<double>(0, 1)(rng) < p; }

bool in_window(Timestamp t, const TimeWindow& w) { return t.day >= w.start.day && t.day < w.end_exclusive.day; }

const NewsArticle* article_of(const EventStore& store, const std::string& uid)
{
    for (const auto& a : store.articles()) {
        if (a.uid == uid) return &a;
    }
    return nullptr;
}

std::vector<HistoryItem> newest(std::vector<HistoryItem> items, std::size_t cap)
{
    std::sort(items.begin(), items.end(), [](const HistoryItem& a, const HistoryItem& b) {
        if (a.timestamp.day != b.timestamp.day) return a.timestamp.day < b.timestamp.day;
        return a.source_uid < b.source_uid;
    });
    while (items.size() > cap) items.erase(items.begin());
    return items;
}

std::string render(const AtomicEvent& e, const TimeWindow& w)
{
    return "(" + e.subject.str() + ", " + e.relation.str() + ", " + e.object.str() + ", " +
           std::to_string(e.timestamp.day - w.start.day) + ")";
}

/// Sub-events that a highlighting annotation points at.
std::vector<const TextualSubEvent*> highlighted(const EventStore& store, std::span<const ImageAnnotation> annotations)
{
    std::vector<const TextualSubEvent*> out;
    for (const auto& a : annotations) {
        if (a.function != ImageFunction::Highlighting || !a.key_subevent_ordinal) continue;
        for (const auto& s : store.subevents()) {
            if (s.article_uid == a.article_uid && s.ordinal == *a.key_subevent_ordinal) out.push_back(&s);
        }
    }
    return out;
}

template <typename Eligible>
std::vector<HistoryItem> complementary(const EventStore& store, std::span<const ImageAnnotation> annotations,
                                       const TimeWindow& w, Eligible eligible)
{
    std::vector<HistoryItem> out;
    for (const auto& a : annotations) {
        if (a.function != ImageFunction::Complementary || !a.complementary_text) continue;
        const auto* art = article_of(store, a.article_uid);
        if (art == nullptr || !in_window(art->timestamp, w) || !eligible(a.article_uid)) continue;
        out.push_back({*a.complementary_text, art->timestamp, a.image_uid});
    }
    return out;
}

HistoryBundle assemble(std::vector<HistoryItem> key, std::vector<HistoryItem> rest, std::vector<HistoryItem> comp,
                       const HistoryLimits& limits)
{
    HistoryBundle b;
    b.key_events = newest(std::move(key), limits.history_cap);
    b.remaining_events = newest(std::move(rest), limits.history_cap - b.key_events.size());
    b.complementary_events = newest(std::move(comp), limits.complementary_cap);
    return b;
}

HistoryBundle from_events(const EventStore& store, const std::vector<AtomicEvent>& cands,
                          std::span<const ImageAnnotation> annotations, const TimeWindow& w, const HistoryLimits& limits)
{
    std::set<std::string> keys;
    for (const auto* s : highlighted(store, annotations)) keys.insert(s->linked_event_uids.begin(), s->linked_event_uids.end());
    std::set<std::string> cand_uids;
    std::vector<HistoryItem> key;
    std::vector<HistoryItem> rest;
    for (const auto& e : cands) {
        cand_uids.insert(e.uid);
        (keys.count(e.uid) ? key : rest).push_back({render(e, w), e.timestamp, e.uid});
    }
    auto comp = complementary(store, annotations, w, [&](const std::string& article) {
        for (const auto& s : store.subevents()) {
            if (s.article_uid != article) continue;
            for (const auto& l : s.linked_event_uids) {
                if (cand_uids.count(l)) return true;
            }
        }
        return false;
    });
    return assemble(std::move(key), std::move(rest), std::move(comp), limits);
}

HistoryBundle from_subevents(const EventStore& store, const std::vector<const TextualSubEvent*>& cands,
                             std::span<const ImageAnnotation> annotations, const TimeWindow& w,
                             const HistoryLimits& limits)
{
    const auto hl = highlighted(store, annotations);
    std::set<std::string> articles;
    std::vector<HistoryItem> key;
    std::vector<HistoryItem> rest;
    for (const auto* s : cands) {
        articles.insert(s->article_uid);
        const bool is_key = std::find(hl.begin(), hl.end(), s) != hl.end();
        (is_key ? key : rest).push_back({s->text, s->timestamp, s->uid});
    }
    auto comp = complementary(store, annotations, w, [&](const std::string& a) { return articles.count(a) > 0; });
    return assemble(std::move(key), std::move(rest), std::move(comp), limits);
}

std::vector<AtomicEvent> icl_events(const EventStore& store, const HistoryQuery& q, const TimeWindow& w)
{
    std::vector<AtomicEvent> out;
    for (const auto& e : store.events()) {
        if (in_window(e.timestamp, w) && (e.subject == q.subject || e.complex_event == q.complex_event)) {
            out.push_back(e);
        }
    }
    return out;
}

}  // namespace

EventStore random_store(const RandomStoreSpec& spec, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    auto entity = [&] { return "E" + std::to_string(pick(rng, spec.entities)); };
    EventStore::Builder b;

    std::vector<AtomicEvent> events;
    for (std::size_t i = 0; i < spec.events; ++i) {
        auto s = entity();
        auto o = entity();
        events.push_back({EntityId(s), RelationId("R" + std::to_string(pick(rng, spec.relations))), EntityId(o),
                          Timestamp{static_cast<std::int64_t>(pick(rng, static_cast<std::size_t>(spec.days)))},
                          ComplexEventId("C" + std::to_string(pick(rng, spec.complex_events))),
                          "e" + std::to_string(i)});
        b.add_event(events.back());
    }

    // Articles group a few same-day events; each event gets one sub-event,
    // some articles add unlinked commentary or a dangling link.
    std::map<std::int64_t, std::vector<const AtomicEvent*>> by_day;
    for (const auto& e : events) by_day[e.timestamp.day].push_back(&e);
    std::size_t article_no = 0;
    std::size_t sub_no = 0;
    std::size_t image_no = 0;
    const char* words[] = {"talks", "border", "water", "visit", "protest", "aid", "treaty", "troops"};
    for (const auto& [day, list] : by_day) {
        std::size_t i = 0;
        while (i < list.size()) {
            const auto n = std::min<std::size_t>(list.size() - i, 1 + pick(rng, 4));
            NewsArticle art{"a" + std::to_string(article_no++), "title", "body", Timestamp{day}, {}};
            int ordinal = 0;
            for (std::size_t k = 0; k < n; ++k, ++i) {
                const auto& e = *list[i];
                std::vector<std::string> links{e.uid};
                if (coin(rng, spec.dangling_probability)) links.push_back("missing" + std::to_string(sub_no));
                if (coin(rng, 0.2)) links.push_back(events[pick(rng, events.size())].uid);
                b.add_subevent({"s" + std::to_string(sub_no++),
                                e.subject.str() + " " + e.relation.str() + " " + e.object.str() + " " +
                                    words[pick(rng, 8)],
                                Timestamp{day}, art.uid, links, ++ordinal});
            }
            if (coin(rng, 0.2)) {
                b.add_subevent({"s" + std::to_string(sub_no++), std::string("analysts discuss ") + words[pick(rng, 8)],
                                Timestamp{day}, art.uid, {}, ++ordinal});
            }
            const auto images = pick(rng, 3);
            for (std::size_t m = 0; m < images; ++m) {
                const auto uid = "i" + std::to_string(image_no++);
                art.image_uids.push_back(uid);
                if (!coin(rng, spec.annotate_probability)) continue;
                const auto roll = pick(rng, 3);
                if (roll == 0) {
                    b.add_annotation({uid, art.uid, ImageFunction::Highlighting,
                                      1 + static_cast<int>(pick(rng, static_cast<std::size_t>(ordinal))), std::nullopt,
                                      Provenance::Ingested});
                } else if (roll == 1) {
                    b.add_annotation({uid, art.uid, ImageFunction::Complementary, std::nullopt,
                                      std::string("Crowds near the ") + words[pick(rng, 8)] + " site",
                                      Provenance::Ingested});
                } else {
                    b.add_annotation({uid, art.uid, ImageFunction::Irrelevant, std::nullopt, std::nullopt,
                                      Provenance::Ingested});
                }
            }
            b.add_article(std::move(art));
        }
    }
    // Dangling links are planted on purpose; keep the builder's warnings out of test logs.
    const auto level = spdlog::get_level();
    spdlog::set_level(spdlog::level::err);
    auto store = std::move(b).build();
    spdlog::set_level(level);
    return store;
}

RandomQuery random_query(const EventStore& store, std::mt19937_64& rng, std::int64_t window_days)
{
    const auto& pool = store.events();
    const auto& e = pool[pick(rng, pool.size())];
    const auto t = static_cast<std::int64_t>(pick(rng, 100));
    HistoryQuery q{e.subject, Timestamp{t}, coin(rng, 0.5) ? e.complex_event : ComplexEventId("C0"),
                   e.subject.str() + " " + e.relation.str() + " talks"};
    return {q, TimeWindow(Timestamp{std::max<std::int64_t>(0, t - window_days)}, Timestamp{t})};
}

double overlap_score(std::string_view query_text, std::string_view text)
{
    auto words = [](std::string_view s) {
        std::set<std::string> out;
        std::string cur;
        for (char c : s) {
            if (c == ' ') {
                if (!cur.empty()) out.insert(cur);
                cur.clear();
            } else {
                cur += c;
            }
        }
        if (!cur.empty()) out.insert(cur);
        return out;
    };
    const auto q = words(query_text);
    const auto d = words(text);
    double n = 0;
    for (const auto& w : q) n += d.count(w) ? 1.0 : 0.0;
    return n;
}

std::vector<double> OverlapRetriever::score(std::string_view query_text, std::span<const TextualSubEvent> candidates)
{
    std::vector<double> out;
    for (const auto& c : candidates) out.push_back(overlap_score(query_text, c.text));
    return out;
}

HistoryBundle oracle_icl_structured(const EventStore& store, const HistoryQuery& q,
                                    std::span<const ImageAnnotation> annotations, const TimeWindow& w,
                                    const HistoryLimits& limits)
{
    return from_events(store, icl_events(store, q, w), annotations, w, limits);
}

HistoryBundle oracle_icl_unstructured(const EventStore& store, const HistoryQuery& q,
                                      std::span<const ImageAnnotation> annotations, const TimeWindow& w,
                                      const HistoryLimits& limits)
{
    std::set<std::string> uids;
    for (const auto& e : icl_events(store, q, w)) uids.insert(e.uid);
    std::vector<const TextualSubEvent*> cands;
    for (const auto& s : store.subevents()) {
        if (!in_window(s.timestamp, w)) continue;
        const bool linked = std::any_of(s.linked_event_uids.begin(), s.linked_event_uids.end(),
                                        [&](const std::string& l) { return uids.count(l) > 0; });
        if (linked) cands.push_back(&s);
    }
    return from_subevents(store, cands, annotations, w, limits);
}

HistoryBundle oracle_rag_structured(const EventStore& store, const HistoryQuery& q,
                                    std::span<const ImageAnnotation> annotations, const TimeWindow& w,
                                    const HistoryLimits& limits)
{
    std::set<std::string> related{q.subject.str()};
    for (const auto& e : store.events()) {
        if (!in_window(e.timestamp, w)) continue;
        if (e.subject == q.subject) related.insert(e.object.str());
        if (e.object == q.subject) related.insert(e.subject.str());
    }
    std::vector<AtomicEvent> cands;
    for (const auto& e : store.events()) {
        if (in_window(e.timestamp, w) && (related.count(e.subject.str()) || related.count(e.object.str()))) {
            cands.push_back(e);
        }
    }
    return from_events(store, cands, annotations, w, limits);
}

HistoryBundle oracle_rag_unstructured(const EventStore& store, const HistoryQuery& q,
                                      std::span<const ImageAnnotation> annotations, const TimeWindow& w,
                                      const HistoryLimits& limits)
{
    std::vector<const TextualSubEvent*> pool;
    for (const auto& s : store.subevents()) {
        if (in_window(s.timestamp, w)) pool.push_back(&s);
    }
    std::sort(pool.begin(), pool.end(), [&](const TextualSubEvent* a, const TextualSubEvent* b) {
        const double sa = overlap_score(q.text, a->text);
        const double sb = overlap_score(q.text, b->text);
        if (sa != sb) return sa > sb;
        if (a->timestamp.day != b->timestamp.day) return a->timestamp.day > b->timestamp.day;
        return a->uid < b->uid;
    });
    if (pool.size() > limits.history_cap) pool.resize(limits.history_cap);
    return from_subevents(store, pool, annotations, w, limits);
}

std::vector<std::string> reference_tokens(const std::string& text)
{
    std::vector<std::string> out;
    std::string cur;
    for (unsigned char c : text) {
        const bool word = c >= 0x80 || std::isalnum(c);
        if (word) {
            cur += static_cast<char>(c >= 'A' && c <= 'Z' ? c + 32 : c);
        } else if (!cur.empty()) {
            out.push_back(cur);
            cur.clear();
        }
    }
    if (!cur.empty()) out.push_back(cur);
    return out;
}

double reference_bm25(const std::vector<std::string>& query, const std::vector<std::string>& doc,
                      const std::vector<std::vector<std::string>>& corpus, double k1, double b)
{
    const double n = static_cast<double>(corpus.size());
    double total_len = 0;
    for (const auto& d : corpus) total_len += static_cast<double>(d.size());
    const double avgdl = n == 0 ? 0 : total_len / n;
    const double dl = static_cast<double>(doc.size());

    double score = 0;
    for (const auto& term : query) {
        double df = 0;
        for (const auto& d : corpus) df += std::count(d.begin(), d.end(), term) > 0 ? 1 : 0;
        const double tf = static_cast<double>(std::count(doc.begin(), doc.end(), term));
        if (tf == 0) continue;
        const double idf = std::log(1.0 + (n - df + 0.5) / (df + 0.5));
        const double norm = avgdl == 0 ? 1.0 : (1.0 - b + b * dl / avgdl);
        score += idf * tf * (k1 + 1.0) / (tf + k1 * norm);
    }
    return score;
}

}  // namespace evf::oracle
