#include "setupx/gateway.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "setupx/errors.hpp"

namespace setupx {

namespace {

const std::vector<std::pair<ChatRole, std::string>>& role_names() {
    static const std::vector<std::pair<ChatRole, std::string>> names = {
        {ChatRole::Setup, "setup"},
        {ChatRole::RetrieverSelect, "retriever_select"},
        {ChatRole::RetrieverAudit, "retriever_audit"},
        {ChatRole::Verifier, "verifier"},
        {ChatRole::Prosecutor, "prosecutor"},
        {ChatRole::Judge, "judge"},
        {ChatRole::Distiller, "distiller"},
    };
    return names;
}

std::pair<std::string, std::string> split_base_url(const std::string& base_url) {
    // httplib wants scheme://host:port separate from the request path.
    auto scheme_end = base_url.find("://");
    std::size_t host_start = scheme_end == std::string::npos ? 0 : scheme_end + 3;
    auto path_start = base_url.find('/', host_start);
    if (path_start == std::string::npos) return {base_url, ""};
    return {base_url.substr(0, path_start), base_url.substr(path_start)};
}

std::string http_post_json_with_retry(const std::string& base_url, const std::string& path,
                                      const std::string& api_key, const nlohmann::json& body,
                                      int max_attempts, double backoff_base_s, double timeout_s) {
    auto [origin, prefix] = split_base_url(base_url);
    std::string full_path = prefix + path;
    std::string last_error = "no attempts made";
    for (int attempt = 0; attempt < max_attempts; ++attempt) {
        if (attempt > 0) {
            double delay = backoff_base_s * std::pow(2.0, attempt - 1);
            std::this_thread::sleep_for(std::chrono::duration<double>(delay));
        }
        httplib::Client client(origin);
        client.set_connection_timeout(std::chrono::duration<double>(timeout_s));
        client.set_read_timeout(std::chrono::duration<double>(timeout_s));
        client.set_write_timeout(std::chrono::duration<double>(timeout_s));
        httplib::Headers headers;
        if (!api_key.empty()) headers.emplace("Authorization", "Bearer " + api_key);
        auto res = client.Post(full_path, headers, body.dump(), "application/json");
        if (!res) {
            last_error = "transport error: " + httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 200 && res->status < 300) return res->body;
        last_error = "HTTP " + std::to_string(res->status);
        if (res->status >= 400 && res->status < 500 && res->status != 429)
            break;  // client errors do not improve with retry
    }
    throw GatewayFailure(last_error + " from " + base_url + path);
}

std::uint64_t fnv1a(const std::string& data, std::uint64_t seed) {
    std::uint64_t h = 1469598103934665603ull ^ seed;
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

std::uint64_t splitmix64(std::uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    std::uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace

const std::string& chat_role_name(ChatRole role) {
    for (const auto& [r, name] : role_names())
        if (r == role) return name;
    throw Error("unmapped chat role");
}

ChatRole chat_role_from_name(const std::string& name) {
    for (const auto& [r, n] : role_names())
        if (n == name) return r;
    throw Error("unknown chat role: " + name);
}

// -- ScriptedChatBackend ------------------------------------------------------

std::shared_ptr<ScriptedChatBackend> ScriptedChatBackend::from_json(const nlohmann::json& script) {
    auto backend = std::make_shared<ScriptedChatBackend>();
    for (const auto& [role_name, responses] : script.items()) {
        ChatRole role = chat_role_from_name(role_name);
        for (const auto& r : responses)
            backend->push(role, r.is_string() ? r.get<std::string>() : r.dump());
    }
    return backend;
}

std::shared_ptr<ScriptedChatBackend> ScriptedChatBackend::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open chat script " + path);
    nlohmann::json j;
    in >> j;
    return from_json(j);
}

void ScriptedChatBackend::push(ChatRole role, std::string response) {
    std::lock_guard lock(mutex_);
    queues_[role].push_back(std::move(response));
}

std::size_t ScriptedChatBackend::remaining(ChatRole role) const {
    std::lock_guard lock(mutex_);
    auto it = queues_.find(role);
    return it == queues_.end() ? 0 : it->second.size();
}

std::size_t ScriptedChatBackend::calls_made(ChatRole role) const {
    std::lock_guard lock(mutex_);
    auto it = calls_.find(role);
    return it == calls_.end() ? 0 : it->second;
}

std::string ScriptedChatBackend::chat(ChatRole role, const std::vector<ChatMessage>&,
                                      ResponseContract) {
    std::lock_guard lock(mutex_);
    ++calls_[role];
    auto it = queues_.find(role);
    if (it == queues_.end() || it->second.empty()) throw ScriptExhausted(chat_role_name(role));
    std::string response = std::move(it->second.front());
    it->second.pop_front();
    return response;
}

// -- RemoteChatBackend --------------------------------------------------------

RemoteChatBackend::RemoteChatBackend(Options options) : options_(std::move(options)) {}

std::string RemoteChatBackend::chat(ChatRole, const std::vector<ChatMessage>& messages,
                                    ResponseContract contract) {
    nlohmann::json body;
    body["model"] = options_.model;
    body["messages"] = nlohmann::json::array();
    for (const auto& m : messages) body["messages"].push_back({{"role", m.role}, {"content", m.content}});
    if (contract == ResponseContract::StructuredDocument)
        body["response_format"] = {{"type", "json_object"}};
    std::string raw = http_post_json_with_retry(options_.base_url, options_.path, options_.api_key,
                                                body, options_.max_attempts,
                                                options_.backoff_base_s, options_.timeout_s);
    nlohmann::json parsed = nlohmann::json::parse(raw, nullptr, false);
    if (parsed.is_discarded()) throw GatewayFailure("chat response is not JSON");
    try {
        return parsed.at("choices").at(0).at("message").at("content").get<std::string>();
    } catch (const std::exception& e) {
        throw GatewayFailure(std::string("unexpected chat response shape: ") + e.what());
    }
}

// -- HashEmbeddingBackend -----------------------------------------------------

HashEmbeddingBackend::HashEmbeddingBackend(std::size_t dimension, std::uint64_t seed)
    : dimension_(dimension), seed_(seed) {
    if (dimension_ == 0) throw Error("embedding dimension must be positive");
}

Embedding HashEmbeddingBackend::embed(const std::string& text) {
    Embedding v(dimension_, 0.0);
    std::string token;
    auto flush = [&] {
        if (token.empty()) return;
        // Each token contributes four signed spikes at hash-derived positions.
        std::uint64_t state = fnv1a(token, seed_);
        for (int i = 0; i < 4; ++i) {
            std::uint64_t r = splitmix64(state);
            std::size_t index = static_cast<std::size_t>(r % dimension_);
            double sign = (r >> 63) ? 1.0 : -1.0;
            v[index] += sign;
        }
        token.clear();
    };
    for (char c : text) {
        if (std::isalnum(static_cast<unsigned char>(c)) || c == '_' || c == '.')
            token += static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
        else
            flush();
    }
    flush();
    double norm = 0.0;
    for (double x : v) norm += x * x;
    if (norm == 0.0) {
        v[0] = 1.0;  // embeddings of empty text are a fixed unit vector
        return v;
    }
    norm = std::sqrt(norm);
    for (double& x : v) x /= norm;
    return v;
}

// -- FixtureEmbeddingBackend --------------------------------------------------

FixtureEmbeddingBackend::FixtureEmbeddingBackend(std::map<std::string, Embedding> fixtures,
                                                 std::size_t dimension,
                                                 std::shared_ptr<EmbeddingBackend> fallback)
    : fixtures_(std::move(fixtures)), dimension_(dimension), fallback_(std::move(fallback)) {}

std::shared_ptr<FixtureEmbeddingBackend> FixtureEmbeddingBackend::from_file(
    const std::string& path, std::shared_ptr<EmbeddingBackend> fallback) {
    std::ifstream in(path);
    if (!in) throw IoFailure("cannot open embedding fixture " + path);
    nlohmann::json j;
    in >> j;
    std::map<std::string, Embedding> fixtures;
    std::size_t dim = fallback ? fallback->dimension() : 0;
    for (const auto& [text, vec] : j.items()) {
        fixtures[text] = vec.get<Embedding>();
        dim = fixtures[text].size();
    }
    return std::make_shared<FixtureEmbeddingBackend>(std::move(fixtures), dim, std::move(fallback));
}

Embedding FixtureEmbeddingBackend::embed(const std::string& text) {
    auto it = fixtures_.find(text);
    if (it != fixtures_.end()) return it->second;
    if (fallback_) return fallback_->embed(text);
    throw GatewayFailure("no fixture embedding for text: " + text.substr(0, 80));
}

// -- RemoteEmbeddingBackend ---------------------------------------------------

RemoteEmbeddingBackend::RemoteEmbeddingBackend(Options options) : options_(std::move(options)) {}

Embedding RemoteEmbeddingBackend::embed(const std::string& text) {
    nlohmann::json body = {{"model", options_.model}, {"input", text}};
    std::string raw = http_post_json_with_retry(options_.base_url, options_.path, options_.api_key,
                                                body, options_.max_attempts,
                                                options_.backoff_base_s, options_.timeout_s);
    nlohmann::json parsed = nlohmann::json::parse(raw, nullptr, false);
    if (parsed.is_discarded()) throw GatewayFailure("embedding response is not JSON");
    try {
        Embedding v = parsed.at("data").at(0).at("embedding").get<Embedding>();
        if (options_.dimension != 0 && v.size() != options_.dimension)
            throw DimensionMismatch(options_.dimension, v.size());
        return v;
    } catch (const DimensionMismatch&) {
        throw;
    } catch (const std::exception& e) {
        throw GatewayFailure(std::string("unexpected embedding response shape: ") + e.what());
    }
}

// -- LlmGateway ---------------------------------------------------------------

LlmGateway::LlmGateway(std::shared_ptr<ChatBackend> chat,
                       std::shared_ptr<EmbeddingBackend> embedding)
    : chat_(std::move(chat)), embedding_(std::move(embedding)) {}

void LlmGateway::set_run_id(std::string run_id) {
    std::lock_guard lock(mutex_);
    run_id_ = std::move(run_id);
}

std::string LlmGateway::chat(ChatRole role, const std::vector<ChatMessage>& messages,
                             ResponseContract contract) {
    if (!chat_) throw GatewayFailure("no chat backend configured");
    std::size_t request_chars = 0;
    for (const auto& m : messages) request_chars += m.content.size();
    std::string response = chat_->chat(role, messages, contract);
    {
        std::lock_guard lock(mutex_);
        log_.push_back({next_seq_++, role, run_id_, request_chars, response.size()});
    }
    return response;
}

Embedding LlmGateway::embed(const std::string& text) {
    if (!embedding_) throw GatewayFailure("no embedding backend configured");
    return embedding_->embed(text);
}

std::size_t LlmGateway::embedding_dimension() const {
    if (!embedding_) return 0;
    return embedding_->dimension();
}

std::vector<GatewayCallRecord> LlmGateway::log() const {
    std::lock_guard lock(mutex_);
    return log_;
}

}  // namespace setupx
