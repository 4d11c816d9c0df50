#pragma once

#include <filesystem>
#include <fstream>
#include <mutex>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "evf/annotation.hpp"
#include "evf/event_store.hpp"
#include "evf/llm_gateway.hpp"

namespace evf {

/// Raised when a model answer cannot be turned into an annotation payload.
class AnnotationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Prompt rendering. Each prompt is the shipped template followed by the
// article (and, for highlighting, its numbered sub-events).
std::string render_identification_prompt(const NewsArticle& article);
std::string render_highlighting_prompt(const NewsArticle& article, std::span<const TextualSubEvent* const> subevents);
std::string render_complementary_prompt(const NewsArticle& article);

/// Lowercases and scans for the three label words; highlighting beats
/// complementary beats irrelevant. No label word: Irrelevant, `matched` false.
ImageFunction parse_image_function(std::string_view response, bool* matched = nullptr);

/// First integer in the response within [1, subevent_count]; throws
/// AnnotationError("unresolvable key event") if there is none.
int parse_subevent_ordinal(std::string_view response, int subevent_count);

/// Lead-in phrases that must not open a complementary sub-event.
std::span<const std::string_view> forbidden_lead_ins();

/// Strips forbidden lead-in phrases (case-insensitive, whole words) from the
/// start, trims, and capitalizes the first letter. Idempotent. Throws
/// AnnotationError when nothing meaningful is left.
std::string sanitize_complementary(std::string_view text);

/// True when sanitize_complementary(text) == text.
bool is_sanitized(std::string_view text);

ImageFunction classify_image_function(const NewsArticle& article, const ImageRef& image, LlmGateway& gateway);

int locate_highlighted_subevent(const NewsArticle& article, std::span<const TextualSubEvent* const> subevents,
                                const ImageRef& image, LlmGateway& gateway);

std::string extract_complementary_subevent(const NewsArticle& article, const ImageRef& image, LlmGateway& gateway);

/// Annotations keyed by image uid, persisted as an append-only annotations
/// file so an interrupted run can resume.
class AnnotationCache {
public:
    AnnotationCache() = default;
    /// Loads existing records (if the file exists) and appends new ones to it.
    explicit AnnotationCache(const std::filesystem::path& path);

    const ImageAnnotation* find(const std::string& image_uid) const;
    void put(const ImageAnnotation& a);
    std::size_t size() const;

private:
    mutable std::mutex mu_;
    std::unordered_map<std::string, ImageAnnotation> entries_;
    std::ofstream out_;
};

/// Resolves an image uid to a file under the dataset's image directory.
ImageRef resolve_image(const std::filesystem::path& image_dir, const std::string& image_uid);

/// Classifies every article image (cache first) and verbalizes the usable
/// ones. Individual failures are logged and skipped. The result is sorted by
/// image uid and includes Irrelevant records.
std::vector<ImageAnnotation> annotate_corpus(const EventStore& store, const std::filesystem::path& image_dir,
                                             LlmGateway& gateway, AnnotationCache& cache);

}  // namespace evf
