#include "evf/eval.hpp"

#include <algorithm>
#include <chrono>
#include <fstream>
#include <random>
#include <sstream>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

namespace evf {

using nlohmann::json;

ForecastMode forecast_mode_from_string(std::string_view s)
{
    if (s == "icl") return ForecastMode::Icl;
    if (s == "rag") return ForecastMode::Rag;
    throw std::invalid_argument("unknown mode '" + std::string(s) + "'");
}

DataFormat data_format_from_string(std::string_view s)
{
    if (s == "text") return DataFormat::Text;
    if (s == "graph") return DataFormat::Graph;
    throw std::invalid_argument("unknown data format '" + std::string(s) + "'");
}

FunctionMode function_mode_from_string(std::string_view s)
{
    if (s == "both") return FunctionMode::Both;
    if (s == "key-only") return FunctionMode::KeyOnly;
    if (s == "complementary-only") return FunctionMode::ComplementaryOnly;
    if (s == "none") return FunctionMode::None;
    if (s == "random") return FunctionMode::Random;
    throw std::invalid_argument("unknown function mode '" + std::string(s) + "'");
}

std::string_view to_string(ForecastMode m) { return m == ForecastMode::Icl ? "icl" : "rag"; }
std::string_view to_string(DataFormat f) { return f == DataFormat::Text ? "text" : "graph"; }

std::string_view to_string(FunctionMode f)
{
    switch (f) {
    case FunctionMode::Both: return "both";
    case FunctionMode::KeyOnly: return "key-only";
    case FunctionMode::ComplementaryOnly: return "complementary-only";
    case FunctionMode::None: return "none";
    case FunctionMode::Random: return "random";
    }
    return "both";
}

// ---------------------------------------------------------------------------
// Queries

std::vector<QueryRecord> read_queries(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) throw IngestError("cannot open '" + path.string() + "'");
    std::vector<QueryRecord> out;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            QueryRecord q;
            q.uid = j.at("uid").get<std::string>();
            q.subject = j.at("subject").get<std::string>();
            q.relation = j.at("relation").get<std::string>();
            q.object = j.at("object").get<std::string>();
            q.day = make_timestamp(j.at("day").get<std::int64_t>()).day;
            q.complex_event = j.at("complex_event").get<std::string>();
            if (j.contains("object_options")) q.object_options = j["object_options"].get<std::vector<std::string>>();
            if (j.contains("relation_options")) {
                q.relation_options = j["relation_options"].get<std::vector<std::string>>();
            }
            out.push_back(std::move(q));
        } catch (const std::exception& e) {
            throw IngestError(path.filename().string(), line_no, e.what());
        }
    }
    return out;
}

void write_query_line(std::ostream& os, const QueryRecord& q)
{
    json j{{"uid", q.uid},       {"subject", q.subject}, {"relation", q.relation},
           {"object", q.object}, {"day", q.day},         {"complex_event", q.complex_event}};
    if (q.object_options) j["object_options"] = *q.object_options;
    if (q.relation_options) j["relation_options"] = *q.relation_options;
    os << j.dump() << '\n';
}

// ---------------------------------------------------------------------------
// Config

void RunConfig::validate() const
{
    if (window_days <= 0) throw std::invalid_argument("window_days must be > 0");
    if (history_cap == 0) throw std::invalid_argument("history_cap must be > 0");
    if (dataset_dir.empty()) throw std::invalid_argument("dataset directory is required");
    if (mode == ForecastMode::Rag && data_format == DataFormat::Text &&
        retriever == RetrieverKind::ExternalEmbedding && retriever_endpoint.empty()) {
        throw std::invalid_argument("external retriever needs an endpoint");
    }
}

json RunConfig::snapshot() const
{
    return json{{"dataset", dataset_dir.string()},
                {"queries", queries.string()},
                {"mode", to_string(mode)},
                {"data_format", to_string(data_format)},
                {"target", to_string(target)},
                {"function_mode", to_string(function_mode)},
                {"retriever", to_string(retriever)},
                {"retriever_endpoint", retriever_endpoint},
                {"backend", backend.snapshot()},
                {"generation",
                 {{"temperature", generation.temperature},
                  {"max_tokens", generation.max_tokens},
                  {"seed", generation.seed}}},
                {"window_days", window_days},
                {"history_cap", history_cap},
                {"complementary_cap", complementary_cap},
                {"char_budget", char_budget},
                {"seed", seed}};
}

RunConfig RunConfig::from_json(const json& j) { return from_json(j, RunConfig{}); }

RunConfig RunConfig::from_json(const json& j, RunConfig c)
{
    if (j.contains("dataset")) c.dataset_dir = j["dataset"].get<std::string>();
    if (j.contains("queries")) c.queries = j["queries"].get<std::string>();
    if (j.contains("mode")) c.mode = forecast_mode_from_string(j["mode"].get<std::string>());
    if (j.contains("data_format")) c.data_format = data_format_from_string(j["data_format"].get<std::string>());
    if (j.contains("target")) c.target = target_from_string(j["target"].get<std::string>());
    if (j.contains("function_mode")) c.function_mode = function_mode_from_string(j["function_mode"].get<std::string>());
    if (j.contains("retriever")) c.retriever = retriever_kind_from_string(j["retriever"].get<std::string>());
    if (j.contains("retriever_endpoint")) c.retriever_endpoint = j["retriever_endpoint"].get<std::string>();
    if (j.contains("window_days")) c.window_days = j["window_days"].get<std::int64_t>();
    if (j.contains("history_cap")) c.history_cap = j["history_cap"].get<std::size_t>();
    if (j.contains("complementary_cap")) c.complementary_cap = j["complementary_cap"].get<std::size_t>();
    if (j.contains("char_budget")) c.char_budget = j["char_budget"].get<std::size_t>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("workers")) c.workers = j["workers"].get<int>();
    if (j.contains("generation")) {
        const auto& g = j["generation"];
        c.generation.temperature = g.value("temperature", c.generation.temperature);
        c.generation.max_tokens = g.value("max_tokens", c.generation.max_tokens);
        c.generation.seed = g.value("seed", c.generation.seed);
    }
    if (j.contains("backend")) {
        const auto& b = j["backend"];
        if (b.contains("kind")) c.backend.kind = backend_kind_from_string(b["kind"].get<std::string>());
        c.backend.endpoint = b.value("endpoint", c.backend.endpoint);
        c.backend.model = b.value("model", c.backend.model);
        c.backend.credential_env = b.value("credential_env", c.backend.credential_env);
        c.backend.max_in_flight = b.value("max_in_flight", c.backend.max_in_flight);
        if (b.contains("replay_log")) c.backend.replay_log = b["replay_log"].get<std::string>();
        if (b.contains("mock_script")) c.backend.mock_script = b["mock_script"].get<std::string>();
        if (b.contains("retry")) {
            c.backend.retry.max_attempts = b["retry"].value("max_attempts", c.backend.retry.max_attempts);
            c.backend.retry.base_backoff = std::chrono::milliseconds(
                b["retry"].value("base_backoff_ms", static_cast<std::int64_t>(c.backend.retry.base_backoff.count())));
        }
    }
    return c;
}

// ---------------------------------------------------------------------------
// Records and reports

json ForecastRecord::to_json() const
{
    return json{{"query_uid", query_uid},
                {"prompt_digest", prompt_digest},
                {"raw_response", raw_response},
                {"parsed", parsed ? json(std::string(1, *parsed)) : json(nullptr)},
                {"parse_method", parse_method},
                {"gold", std::string(1, gold)},
                {"correct", correct},
                {"error", error},
                {"latency_ms", latency_ms}};
}

json EvalReport::summary() const
{
    return json{{"config", config},
                {"accuracy", accuracy},
                {"counts",
                 {{"total", total}, {"parsed", parsed}, {"unparseable", unparseable}, {"correct", correct}}},
                {"template_checksum", template_checksum},
                {"dataset_digest", dataset_digest},
                {"option_construction", option_construction},
                {"wall_time_ms", wall_time_ms}};
}

void EvalReport::write(const std::filesystem::path& dir) const
{
    std::filesystem::create_directories(dir);
    {
        std::ofstream out(dir / "summary.json");
        out << summary().dump(2) << '\n';
    }
    std::ofstream out(dir / "records.jsonl");
    for (const auto& r : records) out << r.to_json().dump() << '\n';
}

json strip_timing(json j)
{
    if (j.is_object()) {
        j.erase("latency_ms");
        j.erase("wall_time_ms");
        for (auto& [key, value] : j.items()) value = strip_timing(value);
    } else if (j.is_array()) {
        for (auto& value : j) value = strip_timing(value);
    }
    return j;
}

std::string dataset_digest(const std::filesystem::path& dataset_dir, const std::filesystem::path& queries)
{
    std::string all;
    for (const auto& name : {"manifest.json", "events.jsonl", "subevents.jsonl", "articles.jsonl", "annotations.jsonl"}) {
        const auto path = dataset_dir / name;
        all += name;
        all += '\0';
        if (std::ifstream in{path, std::ios::binary}) {
            std::ostringstream ss;
            ss << in.rdbuf();
            all += ss.str();
        }
        all += '\0';
    }
    if (std::ifstream in{queries, std::ios::binary}) {
        std::ostringstream ss;
        ss << in.rdbuf();
        all += ss.str();
    }
    return sha256_hex(all);
}

// ---------------------------------------------------------------------------
// Function modes

std::vector<ImageAnnotation> select_annotations(const EventStore& store, FunctionMode mode, std::uint64_t seed)
{
    std::vector<ImageAnnotation> out;
    for (const auto& a : store.annotations()) {
        const bool keep = (mode == FunctionMode::Both || mode == FunctionMode::Random)
                              ? a.usable()
                              : (mode == FunctionMode::KeyOnly && a.function == ImageFunction::Highlighting) ||
                                    (mode == FunctionMode::ComplementaryOnly &&
                                     a.function == ImageFunction::Complementary);
        if (keep) out.push_back(a);
    }
    std::sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.image_uid < b.image_uid; });
    if (mode != FunctionMode::Random) return out;

    std::mt19937_64 rng(seed ^ 0x9e3779b97f4a7c15ULL);
    for (auto& a : out) {
        const auto subs = store.article_subevents(a.article_uid);
        if (subs.empty()) continue;
        const auto* pick = subs[static_cast<std::size_t>(rng() % subs.size())];
        if (a.function == ImageFunction::Highlighting) {
            a.key_subevent_ordinal = pick->ordinal;
        } else {
            a.complementary_text = pick->text;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Run

namespace {

std::uint64_t mix_seed(std::uint64_t seed, std::string_view uid)
{
    // FNV-1a over the uid, folded into the run seed.
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : uid) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return seed ^ h;
}

struct Prepared {
    QuerySpec spec;
    TimeWindow window;
    bool supplied_options;
};

Prepared prepare_query(const QueryRecord& q, const RunConfig& config, const EventStore& store)
{
    const auto t = make_timestamp(q.day);
    const auto window = TimeWindow::before(t, config.window_days);
    const bool object = config.target == Target::Object;
    const auto& gold = object ? q.object : q.relation;
    const auto& supplied = object ? q.object_options : q.relation_options;
    auto options = supplied ? options_from_list(*supplied, gold)
                            : build_options(gold, config.target, store, t, mix_seed(config.seed, q.uid));
    QuerySpec spec{q.uid,
                   EntityId(q.subject),
                   object ? q.relation : q.object,
                   config.target,
                   t,
                   ComplexEventId(q.complex_event),
                   window.start,
                   std::move(options)};
    return Prepared{std::move(spec), window, supplied.has_value()};
}

HistoryBundle build_history(const RunConfig& config, const EventStore& store, const QuerySpec& spec,
                            const TimeWindow& window, std::span<const ImageAnnotation> annotations,
                            Retriever* retriever)
{
    const HistoryQuery hq{spec.subject, spec.timestamp, spec.complex_event, render_query(spec)};
    const HistoryLimits limits{config.history_cap, config.complementary_cap};
    if (config.mode == ForecastMode::Icl) {
        return config.data_format == DataFormat::Graph ? build_icl_structured(store, hq, annotations, window, limits)
                                                       : build_icl_unstructured(store, hq, annotations, window, limits);
    }
    if (config.data_format == DataFormat::Graph) return build_rag_structured(store, hq, annotations, window, limits);
    return build_rag_unstructured(store, hq, *retriever, annotations, window, limits);
}

}  // namespace

EvalReport run(const RunConfig& config)
{
    config.validate();
    auto gateway = make_gateway(config.backend);
    return run(config, *gateway);
}

EvalReport run(const RunConfig& config, LlmGateway& gateway)
{
    config.validate();
    const auto started = std::chrono::steady_clock::now();
    const auto queries_path = config.queries.empty() ? config.dataset_dir / "queries.jsonl" : config.queries;

    const auto store = ingest(DatasetPaths::in_directory(config.dataset_dir));
    const auto queries = read_queries(queries_path);
    const auto annotations = select_annotations(store, config.function_mode, config.seed);

    std::vector<Prepared> prepared;
    prepared.reserve(queries.size());
    for (const auto& q : queries) prepared.push_back(prepare_query(q, config, store));

    std::unique_ptr<Retriever> retriever;
    if (config.mode == ForecastMode::Rag && config.data_format == DataFormat::Text) {
        if (config.retriever == RetrieverKind::LexicalBm25) {
            retriever = std::make_unique<Bm25Retriever>(store);
        } else {
            retriever = std::make_unique<ExternalRetriever>(config.retriever_endpoint);
        }
    }

    std::vector<ForecastRecord> records(prepared.size());
    const int workers = std::max(1, config.workers > 0 ? config.workers : config.backend.max_in_flight);
    const auto n = static_cast<std::ptrdiff_t>(prepared.size());

#pragma omp parallel for schedule(dynamic) num_threads(workers)
    for (std::ptrdiff_t i = 0; i < n; ++i) {
        const auto& p = prepared[static_cast<std::size_t>(i)];
        auto& rec = records[static_cast<std::size_t>(i)];
        rec.query_uid = p.spec.uid;
        rec.gold = p.spec.options.gold_letter();
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto bundle = build_history(config, store, p.spec, p.window, annotations, retriever.get());
            const auto prompt = render_forecast_prompt(p.spec, bundle, config.char_budget);
            const std::vector<ChatMessage> messages{{Role::System, prompt.system, {}}, {Role::User, prompt.user, {}}};
            rec.prompt_digest = prompt_digest(messages, config.generation, gateway.config().model);
            rec.raw_response = gateway.complete(messages, config.generation);
            try {
                const auto answer = parse_answer(rec.raw_response, p.spec.options);
                rec.parsed = answer.letter;
                rec.parse_method = answer.method == ParseMethod::LetterMatch ? "letter-match" : "text-match";
                rec.correct = answer.letter == rec.gold;
            } catch (const UnparseableResponse& e) {
                rec.error = e.what();
            }
        } catch (const std::exception& e) {
            rec.error = e.what();
            spdlog::warn("query '{}' failed: {}", p.spec.uid, e.what());
        }
        rec.latency_ms =
            std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    }

    std::sort(records.begin(), records.end(), [](const auto& a, const auto& b) { return a.query_uid < b.query_uid; });

    EvalReport report;
    report.config = config.snapshot();
    report.records = std::move(records);
    report.total = report.records.size();
    for (const auto& r : report.records) {
        if (r.parsed) {
            ++report.parsed;
        } else {
            ++report.unparseable;
        }
        if (r.correct) ++report.correct;
    }
    report.accuracy = report.total == 0 ? 0.0 : static_cast<double>(report.correct) / static_cast<double>(report.total);
    report.template_checksum = template_checksum();
    report.dataset_digest = dataset_digest(config.dataset_dir, queries_path);

    const auto supplied = std::count_if(prepared.begin(), prepared.end(), [](const auto& p) { return p.supplied_options; });
    report.option_construction = supplied == static_cast<std::ptrdiff_t>(prepared.size()) ? "dataset"
                                 : supplied == 0                                          ? "frequency"
                                                                                          : "mixed";
    report.wall_time_ms =
        std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
    return report;
}

// ---------------------------------------------------------------------------
// Compare

Comparison compare(const std::vector<json>& summaries)
{
    if (summaries.size() < 2) throw std::invalid_argument("compare needs at least two reports");
    const auto digest = summaries.front().at("dataset_digest").get<std::string>();
    Comparison c;
    const double base = summaries.front().at("accuracy").get<double>();
    for (const auto& s : summaries) {
        if (s.at("dataset_digest").get<std::string>() != digest) {
            throw std::invalid_argument("reports were produced from different datasets");
        }
        const auto& cfg = s.at("config");
        ComparisonRow row;
        row.mode = cfg.value("mode", "");
        row.data_format = cfg.value("data_format", "");
        row.target = cfg.value("target", "");
        row.function_mode = cfg.value("function_mode", "");
        row.accuracy = s.at("accuracy").get<double>();
        row.delta = row.accuracy - base;
        c.rows.push_back(std::move(row));
    }
    return c;
}

json Comparison::to_json() const
{
    json rows_json = json::array();
    for (const auto& r : rows) {
        rows_json.push_back({{"mode", r.mode},
                             {"data_format", r.data_format},
                             {"target", r.target},
                             {"function_mode", r.function_mode},
                             {"accuracy", r.accuracy},
                             {"delta", r.delta}});
    }
    return json{{"rows", rows_json}};
}

std::string Comparison::to_text() const
{
    std::string out = fmt::format("{:<6} {:<6} {:<9} {:<19} {:>8} {:>8}\n", "mode", "format", "target",
                                  "function_mode", "acc", "delta");
    for (const auto& r : rows) {
        out += fmt::format("{:<6} {:<6} {:<9} {:<19} {:>8.4f} {:>+8.4f}\n", r.mode, r.data_format, r.target,
                           r.function_mode, r.accuracy, r.delta);
    }
    return out;
}

}  // namespace evf
