#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "evf/annotation.hpp"
#include "evf/ids.hpp"

namespace evf {

/// One quintuple (s, r, o, t, c) with a store-wide unique uid.
struct AtomicEvent {
    EntityId subject;
    RelationId relation;
    EntityId object;
    Timestamp timestamp;
    ComplexEventId complex_event;
    std::string uid;

    friend bool operator==(const AtomicEvent&, const AtomicEvent&) = default;
};

struct TextualSubEvent {
    std::string uid;
    std::string text;
    Timestamp timestamp;
    std::string article_uid;
    std::vector<std::string> linked_event_uids;
    int ordinal = 1;
    bool unlinked = false;  // no resolvable link; text retrieval only
    bool dangling = false;  // at least one link named an unknown event

    friend bool operator==(const TextualSubEvent&, const TextualSubEvent&) = default;
};

struct NewsArticle {
    std::string uid;
    std::string title;
    std::string body;
    Timestamp timestamp;
    std::vector<std::string> image_uids;

    friend bool operator==(const NewsArticle&, const NewsArticle&) = default;
};

/// Half-open day range [start, end_exclusive).
struct TimeWindow {
    Timestamp start;
    Timestamp end_exclusive;

    TimeWindow() = default;
    TimeWindow(Timestamp s, Timestamp e) : start(s), end_exclusive(e)
    {
        if (e < s) {
            throw std::invalid_argument("TimeWindow start must not exceed end_exclusive");
        }
    }

    /// The `days` days strictly before `query_day`, clamped at day 0.
    static TimeWindow before(Timestamp query_day, std::int64_t days);

    bool contains(Timestamp t) const noexcept { return start <= t && t < end_exclusive; }
};

struct Manifest {
    std::string epoch;  // ISO date of day 0
    std::vector<std::string> entities;
    std::vector<std::string> relations;
    std::string image_dir = "images";
};

/// Error raised while reading a record file; carries the 1-based line number
/// when the problem is tied to a line.
class IngestError : public std::runtime_error {
public:
    IngestError(const std::string& file, std::size_t line, const std::string& what);
    explicit IngestError(const std::string& what) : std::runtime_error(what) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_ = 0;
};

/// Immutable after construction; all lookups are const and thread-safe.
class EventStore {
public:
    class Builder;

    std::size_t event_count() const noexcept { return events_.size(); }
    std::size_t subevent_count() const noexcept { return subevents_.size(); }
    std::size_t article_count() const noexcept { return articles_.size(); }
    std::size_t annotation_count() const noexcept { return annotations_.size(); }
    std::size_t unlinked_subevent_count() const noexcept;

    std::span<const AtomicEvent> events() const noexcept { return events_; }
    std::span<const TextualSubEvent> subevents() const noexcept { return subevents_; }
    std::span<const NewsArticle> articles() const noexcept { return articles_; }
    std::span<const ImageAnnotation> annotations() const noexcept { return annotations_; }
    const Manifest& manifest() const noexcept { return manifest_; }

    const AtomicEvent* find_event(const std::string& uid) const;
    const TextualSubEvent* find_subevent(const std::string& uid) const;
    const NewsArticle* find_article(const std::string& uid) const;
    const ImageAnnotation* find_annotation(const std::string& image_uid) const;

    /// Sub-events of one article ordered by ordinal.
    std::vector<const TextualSubEvent*> article_subevents(const std::string& article_uid) const;
    const TextualSubEvent* article_subevent(const std::string& article_uid, int ordinal) const;

    /// Sub-events that list `event_uid` among their links.
    std::span<const std::size_t> subevents_linked_to(const std::string& event_uid) const;

    std::optional<Timestamp> max_timestamp() const;

    // Lookups sorted ascending by (timestamp, uid).
    std::vector<AtomicEvent> events_by_subject(const EntityId& subject, const TimeWindow& w) const;
    std::vector<AtomicEvent> events_by_object(const EntityId& object, const TimeWindow& w) const;
    std::vector<AtomicEvent> events_by_complex_event(const ComplexEventId& ce, const TimeWindow& w) const;
    std::vector<AtomicEvent> events_in_window(const TimeWindow& w) const;

    /// Deduplicated sub-events linked to any input event, ascending by (timestamp, uid).
    std::vector<TextualSubEvent> subevents_for_events(std::span<const AtomicEvent> events) const;
    std::vector<TextualSubEvent> subevents_in_window(const TimeWindow& w) const;

    /// Same records, different annotation set (used for ablations).
    EventStore with_annotations(std::vector<ImageAnnotation> annotations) const;

private:
    using Postings = std::vector<std::size_t>;  // event indexes sorted by (timestamp, uid)

    std::vector<AtomicEvent> collect(const Postings* postings, const TimeWindow& w) const;
    void build_indexes();

    Manifest manifest_;
    std::vector<AtomicEvent> events_;
    std::vector<TextualSubEvent> subevents_;
    std::vector<NewsArticle> articles_;
    std::vector<ImageAnnotation> annotations_;

    std::unordered_map<std::string, std::size_t> event_by_uid_;
    std::unordered_map<std::string, std::size_t> subevent_by_uid_;
    std::unordered_map<std::string, std::size_t> article_by_uid_;
    std::unordered_map<std::string, std::size_t> annotation_by_image_;

    std::unordered_map<std::string, Postings> by_subject_;
    std::unordered_map<std::string, Postings> by_object_;
    std::unordered_map<std::string, Postings> by_complex_event_;
    Postings by_timestamp_;
    std::vector<std::size_t> subevents_by_timestamp_;
    std::unordered_map<std::string, std::vector<std::size_t>> subevents_by_event_;
    std::unordered_map<std::string, std::map<int, std::size_t>> subevents_by_article_;
};

/// Accumulates records, validates referential integrity and produces an
/// indexed EventStore. Duplicate uids are rejected with the uid in the message.
class EventStore::Builder {
public:
    Builder& manifest(Manifest m);
    Builder& add_event(AtomicEvent e);
    Builder& add_subevent(TextualSubEvent s);
    Builder& add_article(NewsArticle a);
    Builder& add_annotation(ImageAnnotation a);

    EventStore build() &&;

private:
    EventStore store_;
    std::unordered_map<std::string, std::size_t> seen_events_;
    std::unordered_map<std::string, std::size_t> seen_subevents_;
    std::unordered_map<std::string, std::size_t> seen_articles_;
    std::unordered_map<std::string, std::size_t> seen_annotations_;
};

struct DatasetPaths {
    std::filesystem::path manifest;
    std::filesystem::path events;
    std::filesystem::path subevents;
    std::filesystem::path articles;
    std::filesystem::path annotations;  // may be empty: no annotations

    /// Standard file names inside a dataset directory.
    static DatasetPaths in_directory(const std::filesystem::path& dir);
};

/// Reads the line-delimited record files. Blank lines are skipped.
EventStore ingest(const DatasetPaths& paths);

/// Parses one annotations file; used by ingest and by the annotation cache.
std::vector<ImageAnnotation> read_annotations(const std::filesystem::path& path);
void write_annotation_line(std::ostream& os, const ImageAnnotation& a);

}  // namespace evf
