#include "evf/llm_gateway.hpp"

#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <sstream>
#include <thread>

#include <openssl/evp.h>
#include <spdlog/spdlog.h>

#include <httplib.h>

namespace evf {

using nlohmann::json;

std::string ImageRef::read_bytes() const
{
    std::ifstream in(locator, std::ios::binary);
    if (!in) throw PermanentError("image '" + uid + "' not resolvable at '" + locator.string() + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

BackendKind backend_kind_from_string(std::string_view s)
{
    if (s == "http" || s == "http-chat") return BackendKind::HttpChat;
    if (s == "mock") return BackendKind::Mock;
    if (s == "replay") return BackendKind::Replay;
    throw std::invalid_argument("unknown backend '" + std::string(s) + "'");
}

std::string_view to_string(BackendKind k)
{
    switch (k) {
    case BackendKind::HttpChat: return "http-chat";
    case BackendKind::Mock: return "mock";
    case BackendKind::Replay: return "replay";
    }
    return "mock";
}

json BackendConfig::snapshot() const
{
    return json{{"kind", to_string(kind)},
                {"endpoint", endpoint},
                {"model", model},
                {"credential_env", credential_env},
                {"max_in_flight", max_in_flight},
                {"retry", {{"max_attempts", retry.max_attempts}, {"base_backoff_ms", retry.base_backoff.count()}}}};
}

// ---------------------------------------------------------------------------
// Digest and encoding

std::string sha256_hex(std::string_view data)
{
    unsigned char md[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1) {
        throw std::runtime_error("SHA-256 failed");
    }
    static constexpr char hex[] = "0123456789abcdef";
    std::string out;
    out.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        out.push_back(hex[md[i] >> 4]);
        out.push_back(hex[md[i] & 0xF]);
    }
    return out;
}

std::string base64_encode(std::string_view data)
{
    std::string out(4 * ((data.size() + 2) / 3), '\0');
    const int n = EVP_EncodeBlock(reinterpret_cast<unsigned char*>(out.data()),
                                  reinterpret_cast<const unsigned char*>(data.data()), static_cast<int>(data.size()));
    out.resize(static_cast<std::size_t>(n));
    return out;
}

namespace {

std::string_view role_name(Role r) { return r == Role::System ? "system" : "user"; }

}  // namespace

json request_snapshot(const ChatRequest& req)
{
    json messages = json::array();
    for (const auto& m : req.messages) {
        json uids = json::array();
        for (const auto& a : m.attachments) uids.push_back(a.uid);
        messages.push_back({{"role", role_name(m.role)}, {"text", m.text}, {"attachments", uids}});
    }
    // nlohmann::json objects are key-sorted, so dump() is canonical.
    return json{{"model", req.model},
                {"params",
                 {{"temperature", req.params.temperature},
                  {"max_tokens", req.params.max_tokens},
                  {"seed", req.params.seed}}},
                {"messages", messages}};
}

std::string prompt_digest(const std::vector<ChatMessage>& messages, const GenerationParams& params,
                          const std::string& model)
{
    ChatRequest req{model, messages, params, {}};
    return sha256_hex(request_snapshot(req).dump());
}

// ---------------------------------------------------------------------------
// HTTP chat backend

HttpChatBackend::HttpChatBackend(const BackendConfig& config) : timeout_(config.timeout)
{
    const auto& ep = config.endpoint;
    const auto scheme_end = ep.find("://");
    if (scheme_end == std::string::npos) {
        throw std::invalid_argument("endpoint must be http(s)://host[:port]/path, got '" + ep + "'");
    }
    const auto path_start = ep.find('/', scheme_end + 3);
    scheme_host_port_ = ep.substr(0, path_start);
    path_ = path_start == std::string::npos ? "/v1/chat/completions" : ep.substr(path_start);

    if (!config.credential_env.empty()) {
        const char* value = std::getenv(config.credential_env.c_str());
        if (value == nullptr || *value == '\0') {
            throw std::invalid_argument("credential variable " + config.credential_env + " is not set");
        }
        credential_ = value;
    }
}

namespace {

std::string image_mime(const std::filesystem::path& p)
{
    auto ext = p.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](char c) { return static_cast<char>(std::tolower(c)); });
    if (ext == ".png") return "image/png";
    if (ext == ".webp") return "image/webp";
    if (ext == ".gif") return "image/gif";
    return "image/jpeg";
}

}  // namespace

json HttpChatBackend::request_body(const ChatRequest& req)
{
    json messages = json::array();
    for (const auto& m : req.messages) {
        if (m.attachments.empty()) {
            messages.push_back({{"role", role_name(m.role)}, {"content", m.text}});
            continue;
        }
        json parts = json::array();
        parts.push_back({{"type", "text"}, {"text", m.text}});
        for (const auto& a : m.attachments) {
            const auto url = "data:" + image_mime(a.locator) + ";base64," + base64_encode(a.read_bytes());
            parts.push_back({{"type", "image_url"}, {"image_url", {{"url", url}}}});
        }
        messages.push_back({{"role", role_name(m.role)}, {"content", parts}});
    }
    return json{{"model", req.model},
                {"messages", messages},
                {"temperature", req.params.temperature},
                {"max_tokens", req.params.max_tokens},
                {"seed", req.params.seed}};
}

std::string HttpChatBackend::parse_response(const std::string& body)
{
    try {
        auto j = json::parse(body);
        return j.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        throw PermanentError(std::string("malformed chat response: ") + e.what());
    }
}

std::string HttpChatBackend::send(const ChatRequest& req)
{
    httplib::Client client(scheme_host_port_);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(timeout_);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(timeout_ - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    httplib::Headers headers;
    if (!credential_.empty()) headers.emplace("Authorization", "Bearer " + credential_);

    auto res = client.Post(path_, headers, request_body(req).dump(), "application/json");
    if (!res) {
        throw TransientError("http transport failure: " + httplib::to_string(res.error()));
    }
    if (res->status == 429 || res->status >= 500) {
        throw TransientError("http status " + std::to_string(res->status));
    }
    if (res->status < 200 || res->status >= 300) {
        throw PermanentError("http status " + std::to_string(res->status) + ": " + res->body.substr(0, 200),
                             res->status);
    }
    return parse_response(res->body);
}

// ---------------------------------------------------------------------------
// Mock backend

namespace {

std::string forecast_key(const std::string& query_line, const std::string& options_line)
{
    return query_line + '\n' + options_line;
}

struct PromptBlocks {
    std::string query_line;
    std::string options_line;
    std::vector<std::string> key_lines;
    std::vector<std::string> related_lines;
};

PromptBlocks split_blocks(const std::string& user)
{
    PromptBlocks b;
    enum { None, Key, Related } section = None;
    std::istringstream in(user);
    std::string line;
    while (std::getline(in, line)) {
        if (line.starts_with("[Query]:")) {
            b.query_line = line;
            section = None;
        } else if (line.starts_with("[Key Events]:")) {
            section = Key;
        } else if (line.starts_with("[Related Events]:")) {
            section = Related;
        } else if (line.starts_with("[Options]:")) {
            b.options_line = line;
            section = None;
        } else if (section == Key) {
            b.key_lines.push_back(line);
        } else if (section == Related) {
            b.related_lines.push_back(line);
        }
    }
    return b;
}

bool any_listed(const json& wanted, const std::vector<std::string>& lines)
{
    for (const auto& w : wanted) {
        const auto& s = w.get_ref<const std::string&>();
        for (const auto& l : lines) {
            if (l == s) return true;
        }
    }
    return false;
}

}  // namespace

MockBackend::MockBackend(const std::filesystem::path& script)
{
    std::ifstream in(script);
    if (!in) throw std::invalid_argument("cannot open mock script '" + script.string() + "'");
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            auto j = json::parse(line);
            if (j.contains("digest")) {
                script_digest(j.at("digest").get<std::string>(), j.at("response").get<std::string>());
            } else if (j.contains("attachment")) {
                script_attachment(j.at("attachment").get<std::string>(), j.value("contains", std::string{}),
                                  j.at("response").get<std::string>());
            } else if (j.contains("forecast")) {
                script_forecast(j.at("forecast"));
            } else if (j.contains("default")) {
                set_default_response(j.at("default").get<std::string>());
            } else {
                throw std::invalid_argument("unknown entry kind");
            }
        } catch (const std::exception& e) {
            throw std::invalid_argument(script.filename().string() + ":" + std::to_string(line_no) + ": " +
                                        e.what());
        }
    }
}

void MockBackend::script_digest(std::string digest, std::string response)
{
    by_digest_[std::move(digest)] = std::move(response);
}

void MockBackend::script_attachment(std::string uid, std::string contains, std::string response)
{
    by_attachment_[std::move(uid)].push_back({std::move(contains), std::move(response)});
}

void MockBackend::script_forecast(json rule)
{
    auto key = forecast_key(rule.at("query_line").get<std::string>(), rule.at("options_line").get<std::string>());
    forecasts_[std::move(key)] = std::move(rule);
}

std::optional<std::string> MockBackend::answer_forecast(const ChatRequest& req) const
{
    if (forecasts_.empty()) return std::nullopt;
    for (const auto& m : req.messages) {
        if (m.role != Role::User) continue;
        auto blocks = split_blocks(m.text);
        auto it = forecasts_.find(forecast_key(blocks.query_line, blocks.options_line));
        if (it == forecasts_.end()) continue;
        const auto& rule = it->second;
        const bool supported =
            any_listed(rule.value("key_support", json::array()), blocks.key_lines) ||
            any_listed(rule.value("complementary_support", json::array()), blocks.related_lines);
        const auto letter = rule.at(supported ? "gold" : "fallback").get<std::string>();
        return "The answer is " + letter + ".";
    }
    return std::nullopt;
}

std::string MockBackend::send(const ChatRequest& req)
{
    if (auto it = by_digest_.find(req.digest); it != by_digest_.end()) return it->second;

    for (const auto& m : req.messages) {
        for (const auto& a : m.attachments) {
            auto it = by_attachment_.find(a.uid);
            if (it == by_attachment_.end()) continue;
            for (const auto& rule : it->second) {
                for (const auto& mm : req.messages) {
                    if (mm.text.find(rule.contains) != std::string::npos) return rule.response;
                }
            }
        }
    }
    if (auto answer = answer_forecast(req)) return *answer;
    if (handler_) {
        if (auto answer = handler_(req)) return *answer;
    }
    return default_response_;
}

// ---------------------------------------------------------------------------
// Replay

ReplayBackend::ReplayBackend(const std::filesystem::path& log)
{
    std::ifstream in(log);
    if (!in) throw std::invalid_argument("cannot open replay log '" + log.string() + "'");
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        auto j = json::parse(line);
        responses_[j.at("digest").get<std::string>()] = j.at("response").get<std::string>();
    }
}

std::string ReplayBackend::send(const ChatRequest& req)
{
    auto it = responses_.find(req.digest);
    if (it == responses_.end()) throw PermanentError("replay log has no entry for digest " + req.digest);
    return it->second;
}

ReplayLog::ReplayLog(const std::filesystem::path& path) : out_(path, std::ios::app)
{
    if (!out_) throw std::invalid_argument("cannot open replay log '" + path.string() + "' for append");
}

void ReplayLog::append(const ChatRequest& req, const std::string& response, std::chrono::milliseconds latency,
                       int attempts)
{
    json j{{"digest", req.digest},
           {"request", request_snapshot(req)},
           {"response", response},
           {"latency_ms", latency.count()},
           {"attempts", attempts}};
    std::lock_guard lock(mu_);
    out_ << j.dump() << '\n';
    out_.flush();
}

// ---------------------------------------------------------------------------
// Gateway

LlmGateway::LlmGateway(BackendConfig config, std::unique_ptr<Backend> backend)
    : config_(std::move(config)), backend_(std::move(backend)), slots_(std::max(1, config_.max_in_flight))
{
    if (config_.max_in_flight < 1) throw std::invalid_argument("max_in_flight must be positive");
    if (config_.retry.max_attempts < 1) throw std::invalid_argument("retry.max_attempts must be positive");
    if (!config_.replay_log.empty() && backend_->records_to_log()) {
        log_ = std::make_unique<ReplayLog>(config_.replay_log);
    }
}

GatewayStats LlmGateway::stats() const
{
    return GatewayStats{calls_.load(), attempts_.load(), peak_in_flight_.load()};
}

std::string LlmGateway::complete(const std::vector<ChatMessage>& messages, const GenerationParams& params)
{
    for (const auto& m : messages) {
        if (m.role == Role::User && m.text.empty()) throw std::invalid_argument("user message text is empty");
    }
    ChatRequest req{config_.model, messages, params, prompt_digest(messages, params, config_.model)};

    slots_.acquire();
    const auto now = ++in_flight_;
    auto peak = peak_in_flight_.load();
    while (now > peak && !peak_in_flight_.compare_exchange_weak(peak, now)) {
    }
    struct Release {
        LlmGateway& g;
        ~Release()
        {
            --g.in_flight_;
            g.slots_.release();
        }
    } release{*this};

    ++calls_;
    const auto start = std::chrono::steady_clock::now();
    for (int attempt = 1;; ++attempt) {
        ++attempts_;
        try {
            auto text = backend_->send(req);
            if (log_) {
                log_->append(req, text,
                             std::chrono::duration_cast<std::chrono::milliseconds>(
                                 std::chrono::steady_clock::now() - start),
                             attempt);
            }
            return text;
        } catch (const TransientError& e) {
            if (attempt >= config_.retry.max_attempts) {
                throw TransportError("gave up after " + std::to_string(attempt) + " attempts: " + e.what());
            }
            spdlog::warn("attempt {} failed ({}), retrying", attempt, e.what());
            std::this_thread::sleep_for(config_.retry.base_backoff * (1LL << (attempt - 1)));
        }
    }
}

std::unique_ptr<LlmGateway> make_gateway(const BackendConfig& config)
{
    std::unique_ptr<Backend> backend;
    switch (config.kind) {
    case BackendKind::HttpChat: backend = std::make_unique<HttpChatBackend>(config); break;
    case BackendKind::Mock:
        backend = config.mock_script.empty() ? std::make_unique<MockBackend>()
                                             : std::make_unique<MockBackend>(config.mock_script);
        break;
    case BackendKind::Replay: backend = std::make_unique<ReplayBackend>(config.replay_log); break;
    }
    return std::make_unique<LlmGateway>(config, std::move(backend));
}

}  // namespace evf
