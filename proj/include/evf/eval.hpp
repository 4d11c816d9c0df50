#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "evf/event_store.hpp"
#include "evf/history.hpp"
#include "evf/llm_gateway.hpp"
#include "evf/prompting.hpp"

namespace evf {

enum class ForecastMode { Icl, Rag };
enum class DataFormat { Text, Graph };
enum class FunctionMode { Both, KeyOnly, ComplementaryOnly, None, Random };

ForecastMode forecast_mode_from_string(std::string_view s);
DataFormat data_format_from_string(std::string_view s);
FunctionMode function_mode_from_string(std::string_view s);
std::string_view to_string(ForecastMode m);
std::string_view to_string(DataFormat f);
std::string_view to_string(FunctionMode f);

/// One held-out quintuple plus optional dataset-supplied options.
struct QueryRecord {
    std::string uid;
    std::string subject;
    std::string relation;
    std::string object;
    std::int64_t day = 0;
    std::string complex_event;
    std::optional<std::vector<std::string>> object_options;
    std::optional<std::vector<std::string>> relation_options;
};

std::vector<QueryRecord> read_queries(const std::filesystem::path& path);
void write_query_line(std::ostream& os, const QueryRecord& q);

struct RunConfig {
    std::filesystem::path dataset_dir;
    std::filesystem::path queries;  // defaults to dataset_dir/queries.jsonl
    ForecastMode mode = ForecastMode::Icl;
    DataFormat data_format = DataFormat::Text;
    Target target = Target::Object;
    FunctionMode function_mode = FunctionMode::Both;
    RetrieverKind retriever = RetrieverKind::LexicalBm25;
    std::string retriever_endpoint;
    BackendConfig backend;
    GenerationParams generation;
    std::int64_t window_days = 30;
    std::size_t history_cap = 50;
    std::size_t complementary_cap = 10;
    std::size_t char_budget = 0;
    std::uint64_t seed = 42;
    int workers = 0;  // 0: use backend.max_in_flight

    void validate() const;
    nlohmann::json snapshot() const;
    /// Applies keys present in `j` (same names as snapshot()).
    static RunConfig from_json(const nlohmann::json& j, RunConfig base);
    static RunConfig from_json(const nlohmann::json& j);
};

struct ForecastRecord {
    std::string query_uid;
    std::string prompt_digest;
    std::string raw_response;
    std::optional<char> parsed;
    std::string parse_method;  // "letter-match", "text-match" or empty
    char gold = 'A';
    bool correct = false;
    std::string error;  // parse or gateway failure note
    double latency_ms = 0.0;

    nlohmann::json to_json() const;
};

struct EvalReport {
    nlohmann::json config;
    std::vector<ForecastRecord> records;
    std::size_t total = 0;
    std::size_t parsed = 0;
    std::size_t unparseable = 0;
    std::size_t correct = 0;
    double accuracy = 0.0;
    std::string template_checksum;
    std::string dataset_digest;
    std::string option_construction;  // "dataset", "frequency" or "mixed"
    double wall_time_ms = 0.0;

    nlohmann::json summary() const;
    /// Writes summary.json and records.jsonl into `dir`.
    void write(const std::filesystem::path& dir) const;
};

/// Drops timing fields so two reports can be compared for determinism.
nlohmann::json strip_timing(nlohmann::json j);

/// SHA-256 over the dataset's record files and query file.
std::string dataset_digest(const std::filesystem::path& dataset_dir, const std::filesystem::path& queries);

/// Annotations active under a function mode. Random reassigns each usable
/// annotation to a uniformly drawn sub-event of its own article.
std::vector<ImageAnnotation> select_annotations(const EventStore& store, FunctionMode mode, std::uint64_t seed);

/// Evaluates every query through history -> prompt -> gateway -> parse.
EvalReport run(const RunConfig& config);
EvalReport run(const RunConfig& config, LlmGateway& gateway);

struct ComparisonRow {
    std::string mode;
    std::string data_format;
    std::string target;
    std::string function_mode;
    double accuracy = 0.0;
    double delta = 0.0;  // against the first report
};

struct Comparison {
    std::vector<ComparisonRow> rows;
    nlohmann::json to_json() const;
    std::string to_text() const;
};

/// Side-by-side accuracies of report summaries; throws on mismatched dataset digests.
Comparison compare(const std::vector<nlohmann::json>& summaries);

}  // namespace evf
