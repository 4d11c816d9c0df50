#pragma once

#include <optional>
#include <string>
#include <string_view>

namespace evf {

enum class ImageFunction { Highlighting, Complementary, Irrelevant };

enum class Provenance { Ingested, ModelGenerated };

std::string_view to_string(ImageFunction f);
std::string_view to_string(Provenance p);
ImageFunction image_function_from_string(std::string_view s);
Provenance provenance_from_string(std::string_view s);

/// Verbalized result of image function identification for one image.
/// Highlighting carries the 1-based ordinal of the key sub-event inside its
/// article; Complementary carries a sanitized one-sentence sub-event; an
/// Irrelevant annotation carries neither and is never used downstream.
struct ImageAnnotation {
    std::string image_uid;
    std::string article_uid;
    ImageFunction function = ImageFunction::Irrelevant;
    std::optional<int> key_subevent_ordinal;
    std::optional<std::string> complementary_text;
    Provenance provenance = Provenance::Ingested;

    bool usable() const noexcept { return function != ImageFunction::Irrelevant; }

    friend bool operator==(const ImageAnnotation&, const ImageAnnotation&) = default;
};

/// Throws std::invalid_argument when the payload does not match the label.
void check_payload(const ImageAnnotation& a);

}  // namespace evf
