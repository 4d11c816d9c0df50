#pragma once

#include <cstdint>
#include <filesystem>

#include <nlohmann/json.hpp>

namespace evf {

/// Sizes and knobs for a reproducible synthetic dataset.
struct SynthSpec {
    std::size_t entities = 40;
    std::size_t relations = 12;
    std::size_t complex_events = 10;
    std::int64_t days = 120;
    std::size_t articles_per_day = 2;
    std::size_t queries = 200;
    double planted_fraction = 0.5;
    double complementary_share = 0.3;  // planted support carried by a Complementary image
    bool annotations = true;           // false: no annotation file records at all
    std::int64_t window_days = 30;
    std::uint64_t seed = 7;

    void validate() const;
    nlohmann::json to_json() const;
};

/// Writes manifest.json, events/articles/subevents/annotations/queries.jsonl,
/// mock_script.jsonl, images/ and synth_manifest.json into `out_dir`.
///
/// A planted query gets an article inside its window whose gold-supporting
/// item becomes visible as a key event (Highlighting image) or as a
/// complementary event (Complementary image). Unplanted queries have no
/// support. The mock script answers gold only when that support is marked.
/// Returns the synth manifest.
nlohmann::json generate_synthetic_dataset(const SynthSpec& spec, const std::filesystem::path& out_dir);

}  // namespace evf
