#include <gtest/gtest.h>

#include <algorithm>
#include <atomic>
#include <cstdlib>
#include <thread>

#include <httplib.h>
#include <nlohmann/json.hpp>

#include "evf/llm_gateway.hpp"
#include "support/temp_dir.hpp"

using namespace evf;
using nlohmann::json;

namespace {

/// Local chat endpoint whose status codes come from a script; answers are
/// "reply N" where N counts successful requests.
class FakeChatServer {
public:
    explicit FakeChatServer(std::vector<int> statuses = {}) : statuses_(std::move(statuses))
    {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            const auto n = hits_++;
            last_body_ = req.body;
            last_auth_ = req.get_header_value("Authorization");
            const int status = n < statuses_.size() ? statuses_[n] : 200;
            res.status = status;
            if (status == 200) {
                json body{{"choices", json::array({{{"message", {{"role", "assistant"}, {"content", "reply " + std::to_string(n)}}}}})}};
                res.set_content(body.dump(), "application/json");
            } else {
                res.set_content("{\"error\": \"scripted\"}", "application/json");
            }
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    ~FakeChatServer()
    {
        server_.stop();
        thread_.join();
    }

    std::string endpoint() const { return "http://127.0.0.1:" + std::to_string(port_) + "/v1/chat/completions"; }
    std::size_t hits() const { return hits_; }
    std::string last_body() const { return last_body_; }
    std::string last_auth() const { return last_auth_; }

private:
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::vector<int> statuses_;
    std::atomic<std::size_t> hits_{0};
    std::string last_body_;
    std::string last_auth_;
};

BackendConfig http_config(const std::string& endpoint)
{
    BackendConfig c;
    c.kind = BackendKind::HttpChat;
    c.endpoint = endpoint;
    c.model = "test-model";
    c.retry.max_attempts = 3;
    c.retry.base_backoff = std::chrono::milliseconds(1);
    c.timeout = std::chrono::milliseconds(2000);
    return c;
}

std::vector<ChatMessage> hello() { return {{Role::System, "sys", {}}, {Role::User, "hello", {}}}; }

}  // namespace

TEST(Encoding, Sha256AndBase64KnownVectors)
{
    EXPECT_EQ(sha256_hex(""), "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
    EXPECT_EQ(sha256_hex("abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    EXPECT_EQ(base64_encode(""), "");
    EXPECT_EQ(base64_encode("f"), "Zg==");
    EXPECT_EQ(base64_encode("fo"), "Zm8=");
    EXPECT_EQ(base64_encode("foobar"), "Zm9vYmFy");
}

TEST(Digest, StableAndSensitive)
{
    const auto d = prompt_digest(hello(), {}, "m");
    EXPECT_EQ(d, prompt_digest(hello(), {}, "m"));
    EXPECT_NE(d, prompt_digest(hello(), {}, "other"));
    GenerationParams p;
    p.seed = 7;
    EXPECT_NE(d, prompt_digest(hello(), p, "m"));
    auto with_image = hello();
    with_image[1].attachments.push_back({"img9", "/nonexistent.png"});
    EXPECT_NE(d, prompt_digest(with_image, {}, "m"));
}

TEST(HttpChat, WireFormat)
{
    oracle::TempDir dir;
    dir.write("pic.png", "PNGDATA");
    ChatRequest req{"m1", {{Role::System, "sys", {}}, {Role::User, "look", {{"pic", dir.path() / "pic.png"}}}},
                    GenerationParams{0.0, 256, 42}, ""};
    const auto body = HttpChatBackend::request_body(req);
    EXPECT_EQ(body["model"], "m1");
    EXPECT_EQ(body["temperature"], 0.0);
    EXPECT_EQ(body["max_tokens"], 256);
    EXPECT_EQ(body["seed"], 42);
    EXPECT_EQ(body["messages"][0], (json{{"role", "system"}, {"content", "sys"}}));
    const auto& parts = body["messages"][1]["content"];
    EXPECT_EQ(body["messages"][1]["role"], "user");
    EXPECT_EQ(parts[0], (json{{"type", "text"}, {"text", "look"}}));
    EXPECT_EQ(parts[1]["image_url"]["url"], "data:image/png;base64," + base64_encode("PNGDATA"));

    EXPECT_EQ(HttpChatBackend::parse_response(R"({"choices":[{"message":{"content":"B"}}]})"), "B");
    EXPECT_THROW(HttpChatBackend::parse_response("{}"), PermanentError);
    EXPECT_THROW(HttpChatBackend::parse_response("not json"), PermanentError);
}

TEST(HttpChat, RetriesTransientFailures)
{
    FakeChatServer server({503, 429});
    auto gw = make_gateway(http_config(server.endpoint()));
    EXPECT_EQ(gw->complete(hello()), "reply 2");
    EXPECT_EQ(server.hits(), 3u);
    EXPECT_EQ(gw->stats().attempts, 3u);
    EXPECT_EQ(gw->stats().calls, 1u);
    const auto body = json::parse(server.last_body());
    EXPECT_EQ(body["model"], "test-model");
}

TEST(HttpChat, GivesUpAfterMaxAttempts)
{
    FakeChatServer server({500, 500, 500, 500});
    auto gw = make_gateway(http_config(server.endpoint()));
    EXPECT_THROW(gw->complete(hello()), TransportError);
    EXPECT_EQ(server.hits(), 3u);
}

TEST(HttpChat, PermanentErrorsAreNotRetried)
{
    FakeChatServer server({400});
    auto gw = make_gateway(http_config(server.endpoint()));
    try {
        gw->complete(hello());
        FAIL() << "400 accepted";
    } catch (const PermanentError& e) {
        EXPECT_EQ(e.status(), 400);
    }
    EXPECT_EQ(server.hits(), 1u);
}

TEST(HttpChat, UnreachableEndpointIsTransient)
{
    int port = 0;
    {
        httplib::Server probe;
        port = probe.bind_to_any_port("127.0.0.1");
    }
    auto c = http_config("http://127.0.0.1:" + std::to_string(port) + "/v1/chat/completions");
    c.retry.max_attempts = 2;
    c.timeout = std::chrono::milliseconds(300);
    auto gw = make_gateway(c);
    EXPECT_THROW(gw->complete(hello()), TransportError);
    EXPECT_EQ(gw->stats().attempts, 2u);
}

TEST(HttpChat, CredentialOnlyInHeader)
{
    ::setenv("EVF_TEST_KEY", "sk-secret-123", 1);
    FakeChatServer server;
    oracle::TempDir dir;
    auto c = http_config(server.endpoint());
    c.credential_env = "EVF_TEST_KEY";
    c.replay_log = dir.path() / "replay.jsonl";
    auto gw = make_gateway(c);
    gw->complete(hello());
    EXPECT_EQ(server.last_auth(), "Bearer sk-secret-123");
    EXPECT_EQ(server.last_body().find("sk-secret"), std::string::npos);
    EXPECT_EQ(c.snapshot().dump().find("sk-secret"), std::string::npos);
    EXPECT_EQ(c.snapshot()["credential_env"], "EVF_TEST_KEY");
    EXPECT_EQ(oracle::slurp(c.replay_log).find("sk-secret"), std::string::npos);

    c.credential_env = "EVF_TEST_KEY_UNSET";
    ::unsetenv("EVF_TEST_KEY_UNSET");
    EXPECT_THROW(make_gateway(c), std::invalid_argument);
}

TEST(Gateway, InFlightBoundHolds)
{
    std::atomic<int> active{0};
    std::atomic<int> peak{0};
    auto backend = std::make_unique<MockBackend>();
    backend->set_handler([&](const ChatRequest&) -> std::optional<std::string> {
        const int now = ++active;
        int p = peak.load();
        while (now > p && !peak.compare_exchange_weak(p, now)) {
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
        --active;
        return "ok";
    });
    BackendConfig c;
    c.max_in_flight = 3;
    LlmGateway gw(c, std::move(backend));

    std::vector<std::thread> threads;
    for (int i = 0; i < 12; ++i) {
        threads.emplace_back([&] {
            for (int k = 0; k < 5; ++k) EXPECT_EQ(gw.complete(hello()), "ok");
        });
    }
    for (auto& t : threads) t.join();
    EXPECT_LE(peak.load(), 3);
    EXPECT_LE(gw.stats().peak_in_flight, 3u);
    EXPECT_EQ(gw.stats().calls, 60u);
}

TEST(Gateway, RejectsBadConfigAndEmptyPrompts)
{
    BackendConfig c;
    c.max_in_flight = 0;
    EXPECT_THROW(LlmGateway(c, std::make_unique<MockBackend>()), std::invalid_argument);
    LlmGateway ok({}, std::make_unique<MockBackend>());
    EXPECT_THROW(ok.complete({{Role::User, "", {}}}), std::invalid_argument);
    EXPECT_THROW(backend_kind_from_string("carrier-pigeon"), std::invalid_argument);
    EXPECT_EQ(backend_kind_from_string("http"), BackendKind::HttpChat);
}

TEST(Replay, RecordThenServeWithoutNetwork)
{
    oracle::TempDir dir;
    const auto log = dir.path() / "replay.jsonl";
    {
        FakeChatServer server;
        auto c = http_config(server.endpoint());
        c.replay_log = log;
        auto gw = make_gateway(c);
        EXPECT_EQ(gw->complete(hello()), "reply 0");
        EXPECT_EQ(gw->complete({{Role::User, "second", {}}}), "reply 1");
    }
    const auto record = json::parse(oracle::slurp(log).substr(0, oracle::slurp(log).find('\n')));
    EXPECT_EQ(record["digest"], prompt_digest(hello(), {}, "test-model"));
    EXPECT_EQ(record["response"], "reply 0");
    EXPECT_EQ(record["attempts"], 1);
    EXPECT_TRUE(record.contains("latency_ms"));
    EXPECT_EQ(record["request"]["messages"][1]["text"], "hello");

    // Replay ignores the endpoint entirely: a live server sees nothing.
    FakeChatServer watcher;
    BackendConfig r;
    r.kind = BackendKind::Replay;
    r.model = "test-model";
    r.replay_log = log;
    r.endpoint = watcher.endpoint();
    auto gw = make_gateway(r);
    EXPECT_EQ(gw->complete(hello()), "reply 0");
    EXPECT_EQ(gw->complete({{Role::User, "second", {}}}), "reply 1");
    EXPECT_THROW(gw->complete({{Role::User, "never seen", {}}}), PermanentError);
    EXPECT_EQ(watcher.hits(), 0u);
    // Replaying does not grow the log.
    const auto text = oracle::slurp(log);
    EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 2);
}

TEST(Mock, ScriptKinds)
{
    oracle::TempDir dir;
    const auto digest = prompt_digest({{Role::User, "exact", {}}}, {}, "mock");
    dir.write("script.jsonl",
              json{{"digest", digest}, {"response", "by digest"}}.dump() + "\n" +
                  json{{"attachment", "img1"}, {"contains", "judge"}, {"response", "highlighting"}}.dump() + "\n" +
                  json{{"forecast",
                        {{"query_line", "[Query]: (A, R, 5)"},
                         {"options_line", "[Options]: A.x B.y C.z D.w E.v"},
                         {"gold", "C"},
                         {"fallback", "A"},
                         {"key_support", {"(A, R, z, 3)"}},
                         {"complementary_support", {"z was seen"}}}}}
                      .dump() +
                  "\n" + json{{"default", "dunno"}}.dump() + "\n");
    BackendConfig c;
    c.mock_script = dir.path() / "script.jsonl";
    auto gw = make_gateway(c);

    EXPECT_EQ(gw->complete({{Role::User, "exact", {}}}), "by digest");
    EXPECT_EQ(gw->complete({{Role::User, "please judge this", {{"img1", "x.png"}}}}), "highlighting");
    EXPECT_EQ(gw->complete({{Role::User, "something else", {{"img1", "x.png"}}}}), "dunno");

    const std::string opts = "[Options]: A.x B.y C.z D.w E.v";
    EXPECT_EQ(gw->complete({{Role::User,
                             "[Query]: (A, R, 5)\n[Key Events]:\n(A, R, z, 3)\n[Related Events]: None.\n" + opts, {}}}),
              "The answer is C.");
    EXPECT_EQ(gw->complete({{Role::User, "[Query]: (A, R, 5)\n[Key Events]: None.\n[Related Events]:\n(A, R, z, 3)\n" + opts, {}}}),
              "The answer is A.");
    EXPECT_EQ(gw->complete({{Role::User, "[Query]: (A, R, 5)\n[Key Events]: None.\n[Related Events]:\nz was seen\n" + opts, {}}}),
              "The answer is C.");

    dir.write("bad.jsonl", "{\"what\": 1}\n");
    c.mock_script = dir.path() / "bad.jsonl";
    EXPECT_THROW(make_gateway(c), std::invalid_argument);
}
