#pragma once

#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <fstream>
#include <memory>
#include <mutex>
#include <optional>
#include <semaphore>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

namespace evf {

/// An image handed to a multimodal request. `locator` is a file path; the
/// bytes are read lazily when a live backend needs them.
struct ImageRef {
    std::string uid;
    std::filesystem::path locator;

    std::string read_bytes() const;
};

enum class Role { System, User };

struct ChatMessage {
    Role role = Role::User;
    std::string text;
    std::vector<ImageRef> attachments;
};

struct GenerationParams {
    double temperature = 0.0;
    int max_tokens = 256;
    std::int64_t seed = 42;
};

enum class BackendKind { HttpChat, Mock, Replay };

BackendKind backend_kind_from_string(std::string_view s);
std::string_view to_string(BackendKind k);

struct RetryPolicy {
    int max_attempts = 3;
    std::chrono::milliseconds base_backoff{500};
};

struct BackendConfig {
    BackendKind kind = BackendKind::Mock;
    std::string endpoint;  // http(s)://host[:port]/path for http-chat
    std::string model = "mock";
    std::string credential_env;  // name of the variable, never its value
    int max_in_flight = 4;
    RetryPolicy retry;
    std::chrono::milliseconds timeout{60000};
    std::filesystem::path replay_log;   // read by replay, appended by live backends
    std::filesystem::path mock_script;  // mock only

    /// Safe to embed in reports: contains no credential value.
    nlohmann::json snapshot() const;
};

class GatewayError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised by a backend for failures worth retrying (connection loss, 429, 5xx).
class TransientError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

/// Raised by the gateway once retries are exhausted.
class TransportError : public GatewayError {
public:
    using GatewayError::GatewayError;
};

/// Non-retryable failure, e.g. a 4xx status or a replay-log miss.
class PermanentError : public GatewayError {
public:
    PermanentError(const std::string& what, int status = 0) : GatewayError(what), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

struct ChatRequest {
    std::string model;
    std::vector<ChatMessage> messages;
    GenerationParams params;
    std::string digest;
};

/// Canonical request snapshot (no image bytes, no credentials).
nlohmann::json request_snapshot(const ChatRequest& req);

/// SHA-256 hex over the canonical snapshot of (model, params, messages,
/// attachment uids).
std::string prompt_digest(const std::vector<ChatMessage>& messages, const GenerationParams& params,
                          const std::string& model);

class Backend {
public:
    virtual ~Backend() = default;
    /// Returns the first candidate text. Throws TransientError or PermanentError.
    virtual std::string send(const ChatRequest& req) = 0;
    virtual bool records_to_log() const { return true; }
};

/// Chat-completions client over HTTP(S). The credential is read from the
/// environment at construction and only placed in the Authorization header.
class HttpChatBackend : public Backend {
public:
    explicit HttpChatBackend(const BackendConfig& config);
    std::string send(const ChatRequest& req) override;

    /// JSON body for one request; exposed for wire-format tests.
    static nlohmann::json request_body(const ChatRequest& req);
    /// Extracts choices[0].message.content; throws PermanentError otherwise.
    static std::string parse_response(const std::string& body);

private:
    std::string scheme_host_port_;
    std::string path_;
    std::string credential_;
    std::chrono::milliseconds timeout_;
};

/// Deterministic scripted backend.
///
/// Script entries (one JSON object per line):
///   {"digest": H, "response": R}                          exact request match
///   {"attachment": UID, "contains": S, "response": R}      image task match
///   {"forecast": {"query_line", "options_line", "gold", "fallback",
///                 "key_support": [...], "complementary_support": [...]}}
/// A forecast rule answers gold iff one key_support line sits in the
/// [Key Events] block or one complementary_support line sits in the
/// [Related Events] block; otherwise it answers the fallback letter.
class MockBackend : public Backend {
public:
    using Handler = std::function<std::optional<std::string>(const ChatRequest&)>;

    MockBackend() = default;
    explicit MockBackend(const std::filesystem::path& script);

    void script_digest(std::string digest, std::string response);
    void script_attachment(std::string uid, std::string contains, std::string response);
    void script_forecast(nlohmann::json rule);
    /// Consulted after the scripted tables.
    void set_handler(Handler h) { handler_ = std::move(h); }
    void set_default_response(std::string r) { default_response_ = std::move(r); }

    std::string send(const ChatRequest& req) override;

private:
    struct AttachmentRule {
        std::string contains;
        std::string response;
    };
    std::optional<std::string> answer_forecast(const ChatRequest& req) const;

    std::unordered_map<std::string, std::string> by_digest_;
    std::unordered_map<std::string, std::vector<AttachmentRule>> by_attachment_;
    std::unordered_map<std::string, nlohmann::json> forecasts_;  // query_line + '\n' + options_line
    Handler handler_;
    std::string default_response_;
};

/// Serves responses from a replay log by digest; never touches the network.
class ReplayBackend : public Backend {
public:
    explicit ReplayBackend(const std::filesystem::path& log);
    std::string send(const ChatRequest& req) override;
    bool records_to_log() const override { return false; }
    std::size_t size() const noexcept { return responses_.size(); }

private:
    std::unordered_map<std::string, std::string> responses_;
};

/// Append-only line-delimited log of (digest, request, response, latency, attempts).
class ReplayLog {
public:
    explicit ReplayLog(const std::filesystem::path& path);
    void append(const ChatRequest& req, const std::string& response, std::chrono::milliseconds latency,
                int attempts);

private:
    std::mutex mu_;
    std::ofstream out_;
};

struct GatewayStats {
    std::size_t calls = 0;
    std::size_t attempts = 0;
    std::size_t peak_in_flight = 0;
};

/// Shared entry point for all model calls: bounded concurrency, retry with
/// exponential backoff, and replay logging.
class LlmGateway {
public:
    LlmGateway(BackendConfig config, std::unique_ptr<Backend> backend);

    std::string complete(const std::vector<ChatMessage>& messages, const GenerationParams& params = {});

    const BackendConfig& config() const noexcept { return config_; }
    GatewayStats stats() const;
    Backend& backend() noexcept { return *backend_; }

private:
    BackendConfig config_;
    std::unique_ptr<Backend> backend_;
    std::unique_ptr<ReplayLog> log_;
    std::counting_semaphore<> slots_;
    std::atomic<std::size_t> in_flight_{0};
    std::atomic<std::size_t> peak_in_flight_{0};
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> attempts_{0};
};

/// Builds the backend named by `config.kind`.
std::unique_ptr<LlmGateway> make_gateway(const BackendConfig& config);

// Hashing and encoding helpers shared across modules.
std::string sha256_hex(std::string_view data);
std::string base64_encode(std::string_view data);

}  // namespace evf
