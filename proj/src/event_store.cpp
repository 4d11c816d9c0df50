#include "evf/event_store.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <tuple>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "evf/image_function.hpp"

namespace evf {

using nlohmann::json;

std::string_view to_string(ImageFunction f)
{
    switch (f) {
    case ImageFunction::Highlighting: return "highlighting";
    case ImageFunction::Complementary: return "complementary";
    case ImageFunction::Irrelevant: return "irrelevant";
    }
    return "irrelevant";
}

std::string_view to_string(Provenance p)
{
    return p == Provenance::Ingested ? "ingested" : "model-generated";
}

ImageFunction image_function_from_string(std::string_view s)
{
    if (s == "highlighting") return ImageFunction::Highlighting;
    if (s == "complementary") return ImageFunction::Complementary;
    if (s == "irrelevant") return ImageFunction::Irrelevant;
    throw std::invalid_argument("unknown image function '" + std::string(s) + "'");
}

Provenance provenance_from_string(std::string_view s)
{
    if (s == "ingested") return Provenance::Ingested;
    if (s == "model-generated") return Provenance::ModelGenerated;
    throw std::invalid_argument("unknown provenance '" + std::string(s) + "'");
}

void check_payload(const ImageAnnotation& a)
{
    const bool has_ordinal = a.key_subevent_ordinal.has_value();
    const bool has_text = a.complementary_text.has_value();
    switch (a.function) {
    case ImageFunction::Highlighting:
        if (!has_ordinal || has_text) {
            throw std::invalid_argument("highlighting annotation " + a.image_uid +
                                        " needs an ordinal and no text");
        }
        if (*a.key_subevent_ordinal < 1) {
            throw std::invalid_argument("annotation " + a.image_uid + " has ordinal < 1");
        }
        break;
    case ImageFunction::Complementary:
        if (has_ordinal || !has_text) {
            throw std::invalid_argument("complementary annotation " + a.image_uid +
                                        " needs text and no ordinal");
        }
        break;
    case ImageFunction::Irrelevant:
        if (has_ordinal || has_text) {
            throw std::invalid_argument("irrelevant annotation " + a.image_uid + " carries a payload");
        }
        break;
    }
}

TimeWindow TimeWindow::before(Timestamp query_day, std::int64_t days)
{
    if (days <= 0) {
        throw std::invalid_argument("window days must be > 0");
    }
    return TimeWindow(Timestamp{std::max<std::int64_t>(0, query_day.day - days)}, query_day);
}

IngestError::IngestError(const std::string& file, std::size_t line, const std::string& what)
    : std::runtime_error(file + ":" + std::to_string(line) + ": " + what), line_(line)
{}

// ---------------------------------------------------------------------------
// EventStore

std::size_t EventStore::unlinked_subevent_count() const noexcept
{
    return static_cast<std::size_t>(
        std::count_if(subevents_.begin(), subevents_.end(), [](const auto& s) { return s.unlinked; }));
}

namespace {

template <typename Map, typename Vec>
auto* find_in(const Map& index, const Vec& records, const std::string& key)
{
    auto it = index.find(key);
    return it == index.end() ? nullptr : &records[it->second];
}

}  // namespace

const AtomicEvent* EventStore::find_event(const std::string& uid) const
{
    return find_in(event_by_uid_, events_, uid);
}

const TextualSubEvent* EventStore::find_subevent(const std::string& uid) const
{
    return find_in(subevent_by_uid_, subevents_, uid);
}

const NewsArticle* EventStore::find_article(const std::string& uid) const
{
    return find_in(article_by_uid_, articles_, uid);
}

const ImageAnnotation* EventStore::find_annotation(const std::string& image_uid) const
{
    return find_in(annotation_by_image_, annotations_, image_uid);
}

std::vector<const TextualSubEvent*> EventStore::article_subevents(const std::string& article_uid) const
{
    std::vector<const TextualSubEvent*> out;
    auto it = subevents_by_article_.find(article_uid);
    if (it == subevents_by_article_.end()) return out;
    out.reserve(it->second.size());
    for (const auto& [ordinal, idx] : it->second) out.push_back(&subevents_[idx]);
    return out;
}

const TextualSubEvent* EventStore::article_subevent(const std::string& article_uid, int ordinal) const
{
    auto it = subevents_by_article_.find(article_uid);
    if (it == subevents_by_article_.end()) return nullptr;
    auto jt = it->second.find(ordinal);
    return jt == it->second.end() ? nullptr : &subevents_[jt->second];
}

std::span<const std::size_t> EventStore::subevents_linked_to(const std::string& event_uid) const
{
    auto it = subevents_by_event_.find(event_uid);
    if (it == subevents_by_event_.end()) return {};
    return it->second;
}

std::optional<Timestamp> EventStore::max_timestamp() const
{
    if (by_timestamp_.empty()) return std::nullopt;
    return events_[by_timestamp_.back()].timestamp;
}

std::vector<AtomicEvent> EventStore::collect(const Postings* postings, const TimeWindow& w) const
{
    std::vector<AtomicEvent> out;
    if (postings == nullptr) return out;
    auto first = std::partition_point(postings->begin(), postings->end(),
                                      [&](std::size_t i) { return events_[i].timestamp < w.start; });
    auto last = std::partition_point(first, postings->end(),
                                     [&](std::size_t i) { return events_[i].timestamp < w.end_exclusive; });
    out.reserve(static_cast<std::size_t>(last - first));
    for (auto it = first; it != last; ++it) out.push_back(events_[*it]);
    return out;
}

namespace {

template <typename Map>
const std::vector<std::size_t>* postings_for(const Map& index, const std::string& key)
{
    auto it = index.find(key);
    return it == index.end() ? nullptr : &it->second;
}

}  // namespace

std::vector<AtomicEvent> EventStore::events_by_subject(const EntityId& subject, const TimeWindow& w) const
{
    return collect(postings_for(by_subject_, subject.str()), w);
}

std::vector<AtomicEvent> EventStore::events_by_object(const EntityId& object, const TimeWindow& w) const
{
    return collect(postings_for(by_object_, object.str()), w);
}

std::vector<AtomicEvent> EventStore::events_by_complex_event(const ComplexEventId& ce, const TimeWindow& w) const
{
    return collect(postings_for(by_complex_event_, ce.str()), w);
}

std::vector<AtomicEvent> EventStore::events_in_window(const TimeWindow& w) const
{
    return collect(&by_timestamp_, w);
}

std::vector<TextualSubEvent> EventStore::subevents_for_events(std::span<const AtomicEvent> events) const
{
    std::vector<std::size_t> hits;
    for (const auto& e : events) {
        auto linked = subevents_linked_to(e.uid);
        hits.insert(hits.end(), linked.begin(), linked.end());
    }
    std::sort(hits.begin(), hits.end());
    hits.erase(std::unique(hits.begin(), hits.end()), hits.end());

    std::vector<TextualSubEvent> out;
    out.reserve(hits.size());
    for (auto i : hits) out.push_back(subevents_[i]);
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) {
        return std::tie(a.timestamp, a.uid) < std::tie(b.timestamp, b.uid);
    });
    return out;
}

std::vector<TextualSubEvent> EventStore::subevents_in_window(const TimeWindow& w) const
{
    auto first = std::partition_point(subevents_by_timestamp_.begin(), subevents_by_timestamp_.end(),
                                      [&](std::size_t i) { return subevents_[i].timestamp < w.start; });
    auto last = std::partition_point(first, subevents_by_timestamp_.end(),
                                     [&](std::size_t i) { return subevents_[i].timestamp < w.end_exclusive; });
    std::vector<TextualSubEvent> out;
    out.reserve(static_cast<std::size_t>(last - first));
    for (auto it = first; it != last; ++it) out.push_back(subevents_[*it]);
    return out;
}

EventStore EventStore::with_annotations(std::vector<ImageAnnotation> annotations) const
{
    EventStore copy = *this;
    copy.annotations_ = std::move(annotations);
    copy.annotation_by_image_.clear();
    for (std::size_t i = 0; i < copy.annotations_.size(); ++i) {
        copy.annotation_by_image_[copy.annotations_[i].image_uid] = i;
    }
    return copy;
}

void EventStore::build_indexes()
{
    auto by_time_uid = [this](std::size_t a, std::size_t b) {
        return std::tie(events_[a].timestamp, events_[a].uid) < std::tie(events_[b].timestamp, events_[b].uid);
    };

    by_timestamp_.resize(events_.size());
    for (std::size_t i = 0; i < events_.size(); ++i) {
        by_timestamp_[i] = i;
        event_by_uid_[events_[i].uid] = i;
    }
    std::sort(by_timestamp_.begin(), by_timestamp_.end(), by_time_uid);
    // Appending in (timestamp, uid) order keeps every posting list sorted.
    for (auto i : by_timestamp_) {
        by_subject_[events_[i].subject.str()].push_back(i);
        by_object_[events_[i].object.str()].push_back(i);
        by_complex_event_[events_[i].complex_event.str()].push_back(i);
    }

    subevents_by_timestamp_.resize(subevents_.size());
    for (std::size_t i = 0; i < subevents_.size(); ++i) {
        subevents_by_timestamp_[i] = i;
        subevent_by_uid_[subevents_[i].uid] = i;
        subevents_by_article_[subevents_[i].article_uid][subevents_[i].ordinal] = i;
        for (const auto& ev : subevents_[i].linked_event_uids) subevents_by_event_[ev].push_back(i);
    }
    std::sort(subevents_by_timestamp_.begin(), subevents_by_timestamp_.end(), [this](std::size_t a, std::size_t b) {
        return std::tie(subevents_[a].timestamp, subevents_[a].uid) <
               std::tie(subevents_[b].timestamp, subevents_[b].uid);
    });
    for (auto& [ev, list] : subevents_by_event_) {
        std::sort(list.begin(), list.end());
        list.erase(std::unique(list.begin(), list.end()), list.end());
    }

    for (std::size_t i = 0; i < articles_.size(); ++i) article_by_uid_[articles_[i].uid] = i;
    for (std::size_t i = 0; i < annotations_.size(); ++i) annotation_by_image_[annotations_[i].image_uid] = i;
}

// ---------------------------------------------------------------------------
// Builder

namespace {

void claim_uid(std::unordered_map<std::string, std::size_t>& seen, const std::string& uid, std::size_t index,
               const char* kind)
{
    if (uid.empty()) {
        throw std::invalid_argument(std::string(kind) + " uid must be non-empty");
    }
    if (!seen.emplace(uid, index).second) {
        throw std::invalid_argument(std::string("duplicate ") + kind + " uid '" + uid + "'");
    }
}

}  // namespace

EventStore::Builder& EventStore::Builder::manifest(Manifest m)
{
    store_.manifest_ = std::move(m);
    return *this;
}

EventStore::Builder& EventStore::Builder::add_event(AtomicEvent e)
{
    if (e.subject.empty() || e.object.empty() || e.relation.empty() || e.complex_event.empty()) {
        throw std::invalid_argument("event '" + e.uid + "' is missing a quintuple field");
    }
    claim_uid(seen_events_, e.uid, store_.events_.size(), "event");
    store_.events_.push_back(std::move(e));
    return *this;
}

EventStore::Builder& EventStore::Builder::add_subevent(TextualSubEvent s)
{
    if (s.text.empty()) {
        throw std::invalid_argument("sub-event '" + s.uid + "' has empty text");
    }
    if (s.ordinal < 1) {
        throw std::invalid_argument("sub-event '" + s.uid + "' has ordinal < 1");
    }
    claim_uid(seen_subevents_, s.uid, store_.subevents_.size(), "sub-event");
    store_.subevents_.push_back(std::move(s));
    return *this;
}

EventStore::Builder& EventStore::Builder::add_article(NewsArticle a)
{
    claim_uid(seen_articles_, a.uid, store_.articles_.size(), "article");
    store_.articles_.push_back(std::move(a));
    return *this;
}

EventStore::Builder& EventStore::Builder::add_annotation(ImageAnnotation a)
{
    check_payload(a);
    claim_uid(seen_annotations_, a.image_uid, store_.annotations_.size(), "annotation image");
    store_.annotations_.push_back(std::move(a));
    return *this;
}

EventStore EventStore::Builder::build() &&
{
    auto& s = store_;

    std::set<std::pair<std::string, int>> ordinals;
    for (auto& sub : s.subevents_) {
        if (!seen_articles_.contains(sub.article_uid)) {
            throw std::invalid_argument("sub-event '" + sub.uid + "' names unknown article '" + sub.article_uid + "'");
        }
        if (!ordinals.emplace(sub.article_uid, sub.ordinal).second) {
            throw std::invalid_argument("article '" + sub.article_uid + "' has two sub-events with ordinal " +
                                        std::to_string(sub.ordinal));
        }
        const auto before = sub.linked_event_uids.size();
        std::erase_if(sub.linked_event_uids, [&](const std::string& uid) { return !seen_events_.contains(uid); });
        if (sub.linked_event_uids.size() != before) {
            sub.dangling = true;
            spdlog::warn("sub-event '{}' dropped {} unknown event link(s)", sub.uid,
                         before - sub.linked_event_uids.size());
        }
        sub.unlinked = sub.linked_event_uids.empty();
    }

    for (const auto& a : s.annotations_) {
        if (!seen_articles_.contains(a.article_uid)) {
            throw std::invalid_argument("annotation '" + a.image_uid + "' names unknown article '" + a.article_uid +
                                        "'");
        }
        if (a.key_subevent_ordinal && !ordinals.contains({a.article_uid, *a.key_subevent_ordinal})) {
            throw std::invalid_argument("annotation '" + a.image_uid + "' points at missing sub-event " +
                                        std::to_string(*a.key_subevent_ordinal) + " of article '" + a.article_uid +
                                        "'");
        }
        if (a.complementary_text && !is_sanitized(*a.complementary_text)) {
            throw std::invalid_argument("annotation '" + a.image_uid + "' complementary text is not sanitized");
        }
    }

    s.build_indexes();
    return std::move(s);
}

// ---------------------------------------------------------------------------
// Line-delimited record files

DatasetPaths DatasetPaths::in_directory(const std::filesystem::path& dir)
{
    DatasetPaths p;
    p.manifest = dir / "manifest.json";
    p.events = dir / "events.jsonl";
    p.subevents = dir / "subevents.jsonl";
    p.articles = dir / "articles.jsonl";
    p.annotations = dir / "annotations.jsonl";
    if (!std::filesystem::exists(p.annotations)) p.annotations.clear();
    return p;
}

namespace {

std::ifstream open_or_throw(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open '" + path.string() + "'");
    return in;
}

/// Calls `fn(json, line_no)` for every non-blank line; wraps any failure in an
/// IngestError carrying the file name and line.
template <typename Fn>
void for_each_record(const std::filesystem::path& path, Fn&& fn)
{
    auto in = open_or_throw(path);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            fn(json::parse(line), line_no);
        } catch (const IngestError&) {
            throw;
        } catch (const std::exception& e) {
            throw IngestError(path.filename().string(), line_no, e.what());
        }
    }
}

ImageAnnotation annotation_from_json(const json& j)
{
    ImageAnnotation a;
    a.image_uid = j.at("image_uid").get<std::string>();
    a.article_uid = j.at("article_uid").get<std::string>();
    a.function = image_function_from_string(j.at("function").get<std::string>());
    if (auto it = j.find("key_subevent_ordinal"); it != j.end() && !it->is_null()) {
        a.key_subevent_ordinal = it->get<int>();
    }
    if (auto it = j.find("complementary_text"); it != j.end() && !it->is_null()) {
        a.complementary_text = it->get<std::string>();
    }
    a.provenance = provenance_from_string(j.value("provenance", std::string("ingested")));
    check_payload(a);
    return a;
}

}  // namespace

std::vector<ImageAnnotation> read_annotations(const std::filesystem::path& path)
{
    std::vector<ImageAnnotation> out;
    for_each_record(path, [&](const json& j, std::size_t) { out.push_back(annotation_from_json(j)); });
    return out;
}

void write_annotation_line(std::ostream& os, const ImageAnnotation& a)
{
    json j{{"image_uid", a.image_uid},
           {"article_uid", a.article_uid},
           {"function", to_string(a.function)},
           {"provenance", to_string(a.provenance)}};
    if (a.key_subevent_ordinal) j["key_subevent_ordinal"] = *a.key_subevent_ordinal;
    if (a.complementary_text) j["complementary_text"] = *a.complementary_text;
    os << j.dump() << '\n';
}

EventStore ingest(const DatasetPaths& paths)
{
    EventStore::Builder builder;

    if (!paths.manifest.empty()) {
        auto in = open_or_throw(paths.manifest);
        json j;
        try {
            j = json::parse(in);
        } catch (const std::exception& e) {
            throw IngestError(paths.manifest.filename().string() + ": " + e.what());
        }
        Manifest m;
        m.epoch = j.value("epoch", std::string{});
        m.entities = j.value("entities", std::vector<std::string>{});
        m.relations = j.value("relations", std::vector<std::string>{});
        m.image_dir = j.value("image_dir", std::string("images"));
        builder.manifest(std::move(m));
    }

    for_each_record(paths.events, [&](const json& j, std::size_t) {
        builder.add_event(AtomicEvent{EntityId(j.at("subject").get<std::string>()),
                                      RelationId(j.at("relation").get<std::string>()),
                                      EntityId(j.at("object").get<std::string>()),
                                      make_timestamp(j.at("day").get<std::int64_t>()),
                                      ComplexEventId(j.at("complex_event").get<std::string>()),
                                      j.at("uid").get<std::string>()});
    });
    for_each_record(paths.articles, [&](const json& j, std::size_t) {
        builder.add_article(NewsArticle{j.at("uid").get<std::string>(), j.value("title", std::string{}),
                                        j.value("body", std::string{}),
                                        make_timestamp(j.at("day").get<std::int64_t>()),
                                        j.value("image_uids", std::vector<std::string>{})});
    });
    for_each_record(paths.subevents, [&](const json& j, std::size_t) {
        TextualSubEvent s;
        s.uid = j.at("uid").get<std::string>();
        s.text = j.at("text").get<std::string>();
        s.timestamp = make_timestamp(j.at("day").get<std::int64_t>());
        s.article_uid = j.at("article_uid").get<std::string>();
        s.linked_event_uids = j.value("linked_event_uids", std::vector<std::string>{});
        s.ordinal = j.at("ordinal").get<int>();
        builder.add_subevent(std::move(s));
    });
    if (!paths.annotations.empty()) {
        for_each_record(paths.annotations,
                        [&](const json& j, std::size_t) { builder.add_annotation(annotation_from_json(j)); });
    }

    try {
        return std::move(builder).build();
    } catch (const std::invalid_argument& e) {
        throw IngestError(e.what());
    }
}

}  // namespace evf
