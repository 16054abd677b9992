#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <algorithm>
#include <chrono>
#include <thread>

#include "uagent/errors.hpp"
#include "uagent/gateway.hpp"
#include "uagent/jsonio.hpp"

namespace uagent::llm {

namespace {

// Retryable failures: transport errors, rate limiting, server errors.
struct TransientError {
    std::string message;
};

void split_base_url(const std::string& base_url, std::string& origin, std::string& path_prefix) {
    std::size_t scheme = base_url.find("://");
    if (scheme == std::string::npos) {
        throw ConfigError("base_url must include a scheme: " + base_url);
    }
    std::size_t path = base_url.find('/', scheme + 3);
    if (path == std::string::npos) {
        origin = base_url;
        path_prefix.clear();
    } else {
        origin = base_url.substr(0, path);
        path_prefix = base_url.substr(path);
    }
    while (!path_prefix.empty() && path_prefix.back() == '/') {
        path_prefix.pop_back();
    }
}

std::string body_snippet(const std::string& body) {
    std::string snippet = body.substr(0, 200);
    std::replace(snippet.begin(), snippet.end(), '\n', ' ');
    return snippet;
}

} // namespace

LiveGateway::LiveGateway(LiveOptions options) : options_(std::move(options)) {
    if (options_.base_url.empty()) {
        throw ConfigError("live gateway requires a base_url");
    }
    if (options_.api_key.empty()) {
        throw AuthError("live gateway requires an API key");
    }
    if (options_.max_attempts < 1) {
        options_.max_attempts = 1;
    }
    split_base_url(options_.base_url, origin_, path_prefix_);
}

std::string LiveGateway::post_json(const std::string& route, const std::string& body) {
    std::string last_error;
    for (int attempt = 0; attempt < options_.max_attempts; ++attempt) {
        if (attempt > 0) {
            std::size_t slot = std::min<std::size_t>(static_cast<std::size_t>(attempt - 1),
                                                     options_.backoff_ms.empty()
                                                         ? 0
                                                         : options_.backoff_ms.size() - 1);
            int delay = options_.backoff_ms.empty() ? 0 : options_.backoff_ms[slot];
            std::this_thread::sleep_for(std::chrono::milliseconds(delay));
        }
        httplib::Client client(origin_);
        client.set_connection_timeout(options_.timeout_seconds, 0);
        client.set_read_timeout(options_.timeout_seconds, 0);
        client.set_write_timeout(options_.timeout_seconds, 0);
        client.set_default_headers({{"Authorization", "Bearer " + options_.api_key}});

        auto result = client.Post(path_prefix_ + route, body, "application/json");
        if (!result) {
            last_error = "transport error: " + httplib::to_string(result.error());
            continue;
        }
        int status = result->status;
        if (status == 401 || status == 403) {
            throw AuthError("provider rejected credentials (HTTP " + std::to_string(status) +
                            "): " + body_snippet(result->body));
        }
        if (status == 429 || status >= 500) {
            last_error = "HTTP " + std::to_string(status) + ": " + body_snippet(result->body);
            continue;
        }
        if (status < 200 || status >= 300) {
            throw GatewayError("provider request failed (HTTP " + std::to_string(status) +
                               "): " + body_snippet(result->body));
        }
        return result->body;
    }
    throw GatewayError("provider unreachable after " + std::to_string(options_.max_attempts) +
                       " attempts; last error: " + last_error);
}

ChatResponse LiveGateway::chat(const ChatRequest& request) {
    request.validate();
    nlohmann::json body{
        {"model", request.model_id},
        {"messages",
         nlohmann::json::array({
             nlohmann::json{{"role", "system"}, {"content", request.system_text}},
             nlohmann::json{{"role", "user"}, {"content", request.user_text}},
         })},
        {"temperature", request.temperature},
        {"max_tokens", request.max_tokens},
    };
    std::string raw = post_json("/chat/completions", canonical_dump(body));
    nlohmann::json parsed = parse_json(raw, "chat completion response");
    if (!parsed.contains("choices") || !parsed["choices"].is_array() || parsed["choices"].empty()) {
        throw GatewayError("malformed provider payload: missing choices");
    }
    const nlohmann::json& message = parsed["choices"][0].value("message", nlohmann::json::object());
    if (!message.contains("content") || !message["content"].is_string()) {
        throw GatewayError("malformed provider payload: missing message content");
    }
    ChatResponse response;
    response.text = message["content"].get<std::string>();
    const nlohmann::json usage = parsed.value("usage", nlohmann::json::object());
    response.prompt_token_count = usage.value("prompt_tokens", 0);
    response.completion_token_count = usage.value("completion_tokens", 0);
    if (response.prompt_token_count < 0 || response.completion_token_count < 0) {
        throw GatewayError("malformed provider payload: negative token counts");
    }
    return response;
}

std::vector<EmbeddingVector> LiveGateway::embed(const std::vector<std::string>& texts) {
    if (texts.empty()) {
        throw GatewayError("embedding request rejected: empty text list");
    }
    for (const std::string& text : texts) {
        if (text.empty()) {
            throw GatewayError("embedding request rejected: empty text");
        }
    }
    nlohmann::json body{
        {"model", options_.embed_model},
        {"input", texts},
    };
    std::string raw = post_json("/embeddings", canonical_dump(body));
    nlohmann::json parsed = parse_json(raw, "embedding response");
    if (!parsed.contains("data") || !parsed["data"].is_array() ||
        parsed["data"].size() != texts.size()) {
        throw GatewayError("malformed provider payload: embedding count mismatch");
    }
    std::vector<EmbeddingVector> vectors(texts.size());
    std::vector<bool> filled(texts.size(), false);
    for (const nlohmann::json& item : parsed["data"]) {
        if (!item.contains("index") || !item["index"].is_number_integer() ||
            !item.contains("embedding") || !item["embedding"].is_array()) {
            throw GatewayError("malformed provider payload: bad embedding item");
        }
        std::int64_t index = item["index"].get<std::int64_t>();
        if (index < 0 || static_cast<std::size_t>(index) >= texts.size() ||
            filled[static_cast<std::size_t>(index)]) {
            throw GatewayError("malformed provider payload: bad embedding index");
        }
        EmbeddingVector vec;
        vec.reserve(item["embedding"].size());
        for (const auto& v : item["embedding"]) {
            if (!v.is_number()) {
                throw GatewayError("malformed provider payload: non-numeric embedding value");
            }
            vec.push_back(v.get<double>());
        }
        vectors[static_cast<std::size_t>(index)] = std::move(vec);
        filled[static_cast<std::size_t>(index)] = true;
    }
    std::lock_guard<std::mutex> lock(dimension_mutex_);
    for (const EmbeddingVector& vec : vectors) {
        if (dimension_ == 0) {
            dimension_ = vec.size();
        }
        if (vec.empty() || vec.size() != dimension_) {
            throw GatewayError("provider embedding dimension mismatch");
        }
    }
    return vectors;
}

} // namespace uagent::llm
