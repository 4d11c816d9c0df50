#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include <fstream>
#include <iostream>

#include "evf/eval.hpp"
#include "evf/event_store.hpp"
#include "evf/image_function.hpp"
#include "evf/synth.hpp"

using nlohmann::json;

namespace {

struct BackendFlags {
    std::string kind = "mock";
    std::string endpoint;
    std::string model = "mock";
    std::string credential_env;
    std::string mock_script;
    std::string replay_log;
    int max_in_flight = 4;
    int max_attempts = 3;
};

void add_backend_flags(CLI::App& cmd, BackendFlags& b)
{
    cmd.add_option("--backend", b.kind, "http | mock | replay")->check(CLI::IsMember({"http", "mock", "replay"}));
    cmd.add_option("--endpoint", b.endpoint, "Chat completion URL for the http backend");
    cmd.add_option("--model", b.model, "Model name sent to the backend");
    cmd.add_option("--credential-env", b.credential_env, "Environment variable holding the API key");
    cmd.add_option("--mock-script", b.mock_script, "Scripted responses for the mock backend");
    cmd.add_option("--replay-log", b.replay_log, "Replay log (read by replay, appended by live backends)");
    cmd.add_option("--max-in-flight", b.max_in_flight, "Concurrent request bound")->check(CLI::PositiveNumber);
    cmd.add_option("--max-attempts", b.max_attempts, "Attempts per request on transient failures")
        ->check(CLI::PositiveNumber);
}

evf::BackendConfig to_backend(const BackendFlags& f, evf::BackendConfig c)
{
    c.kind = evf::backend_kind_from_string(f.kind);
    c.endpoint = f.endpoint;
    c.model = f.model;
    c.credential_env = f.credential_env;
    c.mock_script = f.mock_script;
    c.replay_log = f.replay_log;
    c.max_in_flight = f.max_in_flight;
    c.retry.max_attempts = f.max_attempts;
    return c;
}

json read_json(const std::filesystem::path& p)
{
    std::ifstream in(p);
    if (!in) throw std::runtime_error("cannot open " + p.string());
    return json::parse(in);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Multimodal temporal event forecasting harness"};
    app.require_subcommand(1);
    bool verbose = false;
    app.add_flag("-v,--verbose", verbose, "Debug logging");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Validate a dataset directory and print its counts");
    std::string ingest_data;
    ingest->add_option("--data", ingest_data, "Dataset directory")->required();

    // annotate
    auto* annotate = app.add_subcommand("annotate", "Label article images and write an annotations file");
    std::string annotate_data;
    std::string annotate_out;
    std::string annotate_cache;
    BackendFlags annotate_backend;
    annotate->add_option("--data", annotate_data, "Dataset directory")->required();
    annotate->add_option("--out", annotate_out, "Annotations output file")->required();
    annotate->add_option("--cache", annotate_cache, "Resumable cache file (default: <out>.cache)");
    add_backend_flags(*annotate, annotate_backend);

    // run
    auto* run = app.add_subcommand("run", "Evaluate a query set and write a report");
    std::string config_path;
    std::string data;
    std::string queries;
    std::string out;
    std::string mode = "icl";
    std::string data_format = "text";
    std::string target = "object";
    std::string function_mode = "both";
    std::string retriever = "bm25";
    std::string retriever_endpoint;
    std::int64_t window_days = 30;
    std::size_t history_cap = 50;
    std::size_t char_budget = 0;
    std::uint64_t seed = 42;
    int workers = 0;
    BackendFlags run_backend;
    run->add_option("--config", config_path, "JSON run config; flags given explicitly override it");
    run->add_option("--data", data, "Dataset directory");
    run->add_option("--queries", queries, "Query file (default: <data>/queries.jsonl)");
    run->add_option("--out", out, "Report directory");
    run->add_option("--mode", mode)->check(CLI::IsMember({"icl", "rag"}));
    run->add_option("--data-format", data_format)->check(CLI::IsMember({"text", "graph"}));
    run->add_option("--target", target)->check(CLI::IsMember({"object", "relation"}));
    run->add_option("--function-mode", function_mode)
        ->check(CLI::IsMember({"both", "key-only", "complementary-only", "none", "random"}));
    run->add_option("--retriever", retriever)->check(CLI::IsMember({"bm25", "external"}));
    run->add_option("--retriever-endpoint", retriever_endpoint, "Scoring service URL for --retriever external");
    run->add_option("--window-days", window_days)->check(CLI::PositiveNumber);
    run->add_option("--history-cap", history_cap)->check(CLI::PositiveNumber);
    run->add_option("--char-budget", char_budget, "Reject prompts longer than this (0: unlimited)");
    run->add_option("--seed", seed);
    run->add_option("--workers", workers, "Query workers (0: backend in-flight bound)");
    add_backend_flags(*run, run_backend);

    // compare
    auto* cmp = app.add_subcommand("compare", "Side-by-side accuracy of two or more reports");
    std::vector<std::string> reports;
    std::string cmp_out;
    cmp->add_option("reports", reports, "Report directories or summary.json files")->required()->expected(2, -1);
    cmp->add_option("--out", cmp_out, "Write the comparison as JSON");

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic dataset with planted image support");
    evf::SynthSpec spec;
    std::string synth_out;
    bool no_annotations = false;
    synth->add_option("--out", synth_out, "Output directory")->required();
    synth->add_option("--entities", spec.entities);
    synth->add_option("--relations", spec.relations);
    synth->add_option("--complex-events", spec.complex_events);
    synth->add_option("--days", spec.days);
    synth->add_option("--articles-per-day", spec.articles_per_day);
    synth->add_option("--queries", spec.queries);
    synth->add_option("--planted-fraction", spec.planted_fraction);
    synth->add_option("--complementary-share", spec.complementary_share);
    synth->add_option("--window-days", spec.window_days);
    synth->add_option("--seed", spec.seed);
    synth->add_flag("--no-annotations", no_annotations, "Emit an empty annotations file");

    CLI11_PARSE(app, argc, argv);
    spdlog::set_level(verbose ? spdlog::level::debug : spdlog::level::info);

    try {
        if (*ingest) {
            const auto store = evf::ingest(evf::DatasetPaths::in_directory(ingest_data));
            const auto span = store.max_timestamp();
            std::cout << json{{"events", store.event_count()},
                              {"subevents", store.subevent_count()},
                              {"unlinked_subevents", store.unlinked_subevent_count()},
                              {"articles", store.article_count()},
                              {"annotations", store.annotation_count()},
                              {"max_day", span ? json(span->day) : json(nullptr)}}
                             .dump(2)
                      << '\n';
        } else if (*annotate) {
            auto paths = evf::DatasetPaths::in_directory(annotate_data);
            paths.annotations.clear();
            const auto store = evf::ingest(paths);
            auto gateway = evf::make_gateway(to_backend(annotate_backend, {}));
            evf::AnnotationCache cache(annotate_cache.empty() ? annotate_out + ".cache" : annotate_cache);
            const auto result =
                evf::annotate_corpus(store, annotate_data / std::filesystem::path(store.manifest().image_dir),
                                     *gateway, cache);
            std::ofstream os(annotate_out);
            for (const auto& a : result) evf::write_annotation_line(os, a);
            spdlog::info("wrote {} annotations to {}", result.size(), annotate_out);
        } else if (*run) {
            evf::RunConfig config;
            if (!config_path.empty()) config = evf::RunConfig::from_json(read_json(config_path));
            auto given = [&](const char* name) { return run->count(name) > 0 || config_path.empty(); };
            if (given("--data")) config.dataset_dir = data;
            if (given("--queries")) config.queries = queries;
            if (given("--mode")) config.mode = evf::forecast_mode_from_string(mode);
            if (given("--data-format")) config.data_format = evf::data_format_from_string(data_format);
            if (given("--target")) config.target = evf::target_from_string(target);
            if (given("--function-mode")) config.function_mode = evf::function_mode_from_string(function_mode);
            if (given("--retriever")) config.retriever = evf::retriever_kind_from_string(retriever);
            if (given("--retriever-endpoint")) config.retriever_endpoint = retriever_endpoint;
            if (given("--window-days")) config.window_days = window_days;
            if (given("--history-cap")) config.history_cap = history_cap;
            if (given("--char-budget")) config.char_budget = char_budget;
            if (given("--seed")) config.seed = seed;
            if (given("--workers")) config.workers = workers;
            if (given("--backend") || given("--mock-script") || given("--replay-log") || given("--endpoint")) {
                config.backend = to_backend(run_backend, config.backend);
            }

            const auto report = evf::run(config);
            if (!out.empty()) report.write(out);
            std::cout << fmt::format("accuracy {:.4f} ({} / {}, {} unparseable)\n", report.accuracy, report.correct,
                                     report.total, report.unparseable);
        } else if (*cmp) {
            std::vector<json> summaries;
            for (const auto& r : reports) {
                std::filesystem::path p(r);
                if (std::filesystem::is_directory(p)) p /= "summary.json";
                summaries.push_back(read_json(p));
            }
            const auto c = evf::compare(summaries);
            std::cout << c.to_text();
            if (!cmp_out.empty()) std::ofstream(cmp_out) << c.to_json().dump(2) << '\n';
        } else if (*synth) {
            spec.annotations = !no_annotations;
            const auto manifest = evf::generate_synthetic_dataset(spec, synth_out);
            std::cout << manifest.dump(2) << '\n';
        }
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 1;
    }
    return 0;
}
