#pragma once

#include <cstdint>
#include <deque>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <vector>

#include "setupx/store.hpp"

namespace setupx {

enum class ChatRole {
    Setup,
    RetrieverSelect,
    RetrieverAudit,
    Verifier,
    Prosecutor,
    Judge,
    Distiller,
};

const std::string& chat_role_name(ChatRole role);
ChatRole chat_role_from_name(const std::string& name);

struct ChatMessage {
    std::string role;  // "system" | "user" | "assistant"
    std::string content;
};

enum class ResponseContract { FreeText, StructuredDocument };

class ChatBackend {
public:
    virtual ~ChatBackend() = default;
    virtual std::string chat(ChatRole role, const std::vector<ChatMessage>& messages,
                             ResponseContract contract) = 0;
};

class EmbeddingBackend {
public:
    virtual ~EmbeddingBackend() = default;
    virtual Embedding embed(const std::string& text) = 0;
    virtual std::size_t dimension() const = 0;
};

// Replay backend: one response queue per role; pops in order and throws
// ScriptExhausted when a role's queue runs dry.
class ScriptedChatBackend : public ChatBackend {
public:
    ScriptedChatBackend() = default;

    // Fixture format: {"setup": ["...", ...], "verifier": [...], ...}
    static std::shared_ptr<ScriptedChatBackend> from_json(const nlohmann::json& script);
    static std::shared_ptr<ScriptedChatBackend> from_file(const std::string& path);

    void push(ChatRole role, std::string response);
    std::size_t remaining(ChatRole role) const;
    std::size_t calls_made(ChatRole role) const;

    std::string chat(ChatRole role, const std::vector<ChatMessage>& messages,
                     ResponseContract contract) override;

private:
    mutable std::mutex mutex_;
    std::map<ChatRole, std::deque<std::string>> queues_;
    std::map<ChatRole, std::size_t> calls_;
};

// Chat-completions HTTP backend with bounded retry and exponential backoff.
class RemoteChatBackend : public ChatBackend {
public:
    struct Options {
        std::string base_url;             // e.g. http://localhost:8000
        std::string path = "/v1/chat/completions";
        std::string model = "qwen3.5-plus";
        std::string api_key;              // sent as Bearer token when non-empty
        int max_attempts = 3;
        double backoff_base_s = 0.25;     // doubles per retry
        double timeout_s = 120.0;
    };

    explicit RemoteChatBackend(Options options);

    std::string chat(ChatRole role, const std::vector<ChatMessage>& messages,
                     ResponseContract contract) override;

private:
    Options options_;
};

// Deterministic local embeddings: token-hashed random projection, stable
// across runs for a fixed seed. Shared tokens between texts produce
// proportionally higher cosine similarity.
class HashEmbeddingBackend : public EmbeddingBackend {
public:
    explicit HashEmbeddingBackend(std::size_t dimension = 1536, std::uint64_t seed = 0x5e70a11ull);

    Embedding embed(const std::string& text) override;
    std::size_t dimension() const override { return dimension_; }

private:
    std::size_t dimension_;
    std::uint64_t seed_;
};

// Exact text -> vector map for threshold tests; unknown texts go to the
// fallback backend when configured, otherwise raise GatewayFailure.
class FixtureEmbeddingBackend : public EmbeddingBackend {
public:
    FixtureEmbeddingBackend(std::map<std::string, Embedding> fixtures, std::size_t dimension,
                            std::shared_ptr<EmbeddingBackend> fallback = nullptr);

    static std::shared_ptr<FixtureEmbeddingBackend> from_file(
        const std::string& path, std::shared_ptr<EmbeddingBackend> fallback = nullptr);

    Embedding embed(const std::string& text) override;
    std::size_t dimension() const override { return dimension_; }

private:
    std::map<std::string, Embedding> fixtures_;
    std::size_t dimension_;
    std::shared_ptr<EmbeddingBackend> fallback_;
};

class RemoteEmbeddingBackend : public EmbeddingBackend {
public:
    struct Options {
        std::string base_url;
        std::string path = "/v1/embeddings";
        std::string model = "text-embedding-3-small";
        std::string api_key;
        std::size_t dimension = 1536;
        int max_attempts = 3;
        double backoff_base_s = 0.25;
        double timeout_s = 60.0;
    };

    explicit RemoteEmbeddingBackend(Options options);

    Embedding embed(const std::string& text) override;
    std::size_t dimension() const override { return options_.dimension; }

private:
    Options options_;
};

struct GatewayCallRecord {
    std::uint64_t seq = 0;
    ChatRole role = ChatRole::Setup;
    std::string run_id;
    std::size_t request_chars = 0;
    std::size_t response_chars = 0;
};

// Front door for every model call: routes to the configured backends and
// keeps an append-only, sequence-numbered call log attributing each call to
// one role and one run id.
class LlmGateway {
public:
    LlmGateway(std::shared_ptr<ChatBackend> chat, std::shared_ptr<EmbeddingBackend> embedding);

    void set_run_id(std::string run_id);
    const std::string& run_id() const { return run_id_; }

    std::string chat(ChatRole role, const std::vector<ChatMessage>& messages,
                     ResponseContract contract = ResponseContract::FreeText);
    Embedding embed(const std::string& text);
    std::size_t embedding_dimension() const;

    std::vector<GatewayCallRecord> log() const;

private:
    std::shared_ptr<ChatBackend> chat_;
    std::shared_ptr<EmbeddingBackend> embedding_;
    std::string run_id_ = "unset";
    mutable std::mutex mutex_;
    std::vector<GatewayCallRecord> log_;
    std::uint64_t next_seq_ = 1;
};

}  // namespace setupx
