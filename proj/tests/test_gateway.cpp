#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <atomic>
#include <thread>

#include <httplib.h>

#include "setupx/errors.hpp"
#include "setupx/gateway.hpp"
#include "setupx/store.hpp"

using namespace setupx;

namespace {

struct StubServer {
    httplib::Server server;
    std::thread thread;
    int port = 0;

    explicit StubServer(std::function<void(httplib::Server&)> setup) {
        setup(server);
        port = server.bind_to_any_port("127.0.0.1");
        thread = std::thread([this] { server.listen_after_bind(); });
        server.wait_until_ready();
    }

    ~StubServer() {
        server.stop();
        thread.join();
    }

    std::string url() const { return "http://127.0.0.1:" + std::to_string(port); }
};

}  // namespace

TEST_CASE("scripted backend replays per-role queues in order") {
    ScriptedChatBackend backend;
    backend.push(ChatRole::Setup, "A");
    backend.push(ChatRole::Setup, "B");
    backend.push(ChatRole::Verifier, "V");

    CHECK(backend.chat(ChatRole::Setup, {}, ResponseContract::FreeText) == "A");
    CHECK(backend.chat(ChatRole::Verifier, {}, ResponseContract::FreeText) == "V");
    CHECK(backend.chat(ChatRole::Setup, {}, ResponseContract::FreeText) == "B");
    CHECK_THROWS_AS(backend.chat(ChatRole::Setup, {}, ResponseContract::FreeText),
                    ScriptExhausted);
    CHECK(backend.calls_made(ChatRole::Setup) == 3);
}

TEST_CASE("scripted backend loads role-keyed fixtures") {
    nlohmann::json script = {{"setup", {"one", "two"}},
                             {"judge", nlohmann::json::array({nlohmann::json{{"ruling", "upheld"}}})}};
    auto backend = ScriptedChatBackend::from_json(script);
    CHECK(backend->remaining(ChatRole::Setup) == 2);
    CHECK(backend->chat(ChatRole::Setup, {}, ResponseContract::FreeText) == "one");
    // non-string entries arrive as serialized JSON
    std::string judged = backend->chat(ChatRole::Judge, {}, ResponseContract::FreeText);
    CHECK(nlohmann::json::parse(judged).at("ruling") == "upheld");
}

TEST_CASE("remote chat backend retries then fails loudly on persistent 500s") {
    std::atomic<int> requests{0};
    StubServer stub([&](httplib::Server& s) {
        s.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
            ++requests;
            res.status = 500;
            res.set_content("boom", "text/plain");
        });
    });

    RemoteChatBackend::Options options;
    options.base_url = stub.url();
    options.max_attempts = 3;
    options.backoff_base_s = 0.0;
    RemoteChatBackend backend(options);
    CHECK_THROWS_AS(backend.chat(ChatRole::Setup, {{"user", "hi"}}, ResponseContract::FreeText),
                    GatewayFailure);
    CHECK(requests.load() == 3);  // retries + 1 original
}

TEST_CASE("remote chat backend returns the first choice content") {
    StubServer stub([&](httplib::Server& s) {
        s.Post("/v1/chat/completions", [&](const httplib::Request& req, httplib::Response& res) {
            auto body = nlohmann::json::parse(req.body);
            CHECK(body.at("messages").size() == 2);
            CHECK(req.get_header_value("Authorization") == "Bearer sk-test");
            nlohmann::json reply = {
                {"choices", {{{"message", {{"role", "assistant"}, {"content", "pong"}}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
    });

    RemoteChatBackend::Options options;
    options.base_url = stub.url();
    options.api_key = "sk-test";
    RemoteChatBackend backend(options);
    std::string out = backend.chat(
        ChatRole::Setup, {{"system", "s"}, {"user", "ping"}}, ResponseContract::FreeText);
    CHECK(out == "pong");
}

TEST_CASE("remote embedding backend parses the data array") {
    StubServer stub([&](httplib::Server& s) {
        s.Post("/v1/embeddings", [&](const httplib::Request&, httplib::Response& res) {
            nlohmann::json reply = {{"data", {{{"embedding", {0.5, 0.5, 0.0, 0.0}}}}}};
            res.set_content(reply.dump(), "application/json");
        });
    });
    RemoteEmbeddingBackend::Options options;
    options.base_url = stub.url();
    options.dimension = 4;
    RemoteEmbeddingBackend backend(options);
    CHECK(backend.embed("text") == Embedding{0.5, 0.5, 0.0, 0.0});
}

TEST_CASE("hash embeddings are deterministic unit vectors") {
    HashEmbeddingBackend backend(64);
    Embedding a1 = backend.embed("poetry lock conflict");
    Embedding a2 = backend.embed("poetry lock conflict");
    CHECK(a1 == a2);
    CHECK(cosine_similarity(a1, a2) == doctest::Approx(1.0).epsilon(1e-9));
    double norm = 0;
    for (double x : a1) norm += x * x;
    CHECK(norm == doctest::Approx(1.0).epsilon(1e-9));

    // unrelated texts land away from each other, shared tokens pull closer
    Embedding other = backend.embed("cuda driver mismatch");
    Embedding related = backend.embed("poetry lock conflict in ci");
    CHECK(cosine_similarity(a1, related) > cosine_similarity(a1, other));
}

TEST_CASE("fixture embedding backend serves the map and falls back when configured") {
    std::map<std::string, Embedding> fixtures = {{"a", {1.0, 0.0}}, {"b", {0.0, 1.0}}};
    FixtureEmbeddingBackend exact(fixtures, 2);
    CHECK(exact.embed("a") == Embedding{1.0, 0.0});
    CHECK(exact.embed("b") == Embedding{0.0, 1.0});
    CHECK_THROWS_AS(exact.embed("unknown"), GatewayFailure);

    FixtureEmbeddingBackend with_fallback(fixtures, 2, std::make_shared<HashEmbeddingBackend>(2));
    CHECK(with_fallback.embed("a") == Embedding{1.0, 0.0});
    CHECK_NOTHROW(with_fallback.embed("unknown"));
}

TEST_CASE("gateway log attributes every chat call to one role and run id") {
    auto chat = std::make_shared<ScriptedChatBackend>();
    chat->push(ChatRole::Setup, "x");
    chat->push(ChatRole::Verifier, "y");
    LlmGateway gateway(chat, std::make_shared<HashEmbeddingBackend>(8));
    gateway.set_run_id("run-42");
    gateway.chat(ChatRole::Setup, {{"user", "u"}});
    gateway.chat(ChatRole::Verifier, {{"user", "v"}});

    auto log = gateway.log();
    REQUIRE(log.size() == 2);
    CHECK(log[0].seq == 1);
    CHECK(log[1].seq == 2);
    CHECK(log[0].role == ChatRole::Setup);
    CHECK(log[1].role == ChatRole::Verifier);
    CHECK(log[0].run_id == "run-42");
    CHECK(log[1].run_id == "run-42");
}

TEST_CASE("role names round-trip") {
    for (ChatRole role : {ChatRole::Setup, ChatRole::RetrieverSelect, ChatRole::RetrieverAudit,
                          ChatRole::Verifier, ChatRole::Prosecutor, ChatRole::Judge,
                          ChatRole::Distiller})
        CHECK(chat_role_from_name(chat_role_name(role)) == role);
}
