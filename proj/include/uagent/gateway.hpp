#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <memory>
#include <mutex>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <vector>

namespace uagent::llm {

// ===== Requests and responses =====

struct ChatRequest {
    std::string model_id;
    std::string system_text;
    std::string user_text;
    double temperature = 0.0;
    int max_tokens = 1024;

    // Throws GatewayError when a field is out of contract.
    void validate() const;
};

struct ChatResponse {
    std::string text;
    std::int64_t prompt_token_count = 0;
    std::int64_t completion_token_count = 0;
};

using EmbeddingVector = std::vector<double>;

// ===== Prompt operation markers =====
// Structured tags each pipeline stage places in its prompts. The mock
// gateway dispatches on them; live models see them as part of the
// instruction text. Dispatch checks them in the order listed here so a
// payload that happens to embed another marker's text cannot be
// misrouted.
namespace markers {
inline constexpr const char* kClassifyFiles = "OPERATION: classify-files";
inline constexpr const char* kExtractIdentifiers = "OPERATION: extract-identifiers";
inline constexpr const char* kExtractApiNames = "OPERATION: extract-api-names";
inline constexpr const char* kEvaluateCode = "OPERATION: evaluate-code";
inline constexpr const char* kReviseRubric = "OPERATION: revise-rubric";
inline constexpr const char* kGenerateCode = "OPERATION: generate-code";
inline constexpr const char* kTaskPrefix = "TASK:";
inline constexpr const char* kLanguagePrefix = "LANGUAGE:";
inline constexpr const char* kFilesHeader = "FILES:";
inline constexpr const char* kRubricBegin = "BEGIN RUBRIC";
inline constexpr const char* kRubricEnd = "END RUBRIC";
} // namespace markers

// ===== Fingerprints and cassette form =====
// A fingerprint is the SHA-256 hex digest of the request's canonical
// JSON serialization; every request field participates. Embedding
// requests fingerprint each text separately so batch composition never
// affects replay.

std::string chat_fingerprint(const ChatRequest& request);
std::string embed_fingerprint(const std::string& model_id, const std::string& text);

std::string chat_response_payload(const ChatResponse& response);
ChatResponse chat_response_from_payload(const std::string& payload);
std::string embed_response_payload(const EmbeddingVector& vector);
EmbeddingVector embed_response_from_payload(const std::string& payload);

struct CassetteEntry {
    std::string kind; // "chat" or "embed"
    std::string request_fingerprint;
    std::string response_payload;
};

// One canonical JSON object, no trailing newline.
std::string cassette_line(const CassetteEntry& entry);
CassetteEntry cassette_entry_from_line(const std::string& line);
std::vector<CassetteEntry> load_cassette(const std::filesystem::path& path);

// ===== Gateway interface =====

class Gateway {
public:
    virtual ~Gateway() = default;

    virtual ChatResponse chat(const ChatRequest& request) = 0;

    // One vector per input, order preserving. Equal texts yield equal
    // vectors under one gateway configuration.
    virtual std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) = 0;

    // 0 means unknown until the first embed call returns.
    virtual std::size_t embedding_dimension() const = 0;

    // Model id used when fingerprinting embedding requests.
    virtual std::string embed_model_id() const = 0;
};

// Splits texts into fixed-size batches and embeds at most `parallelism`
// batches concurrently. Results keep input order. The batch size is a
// constant so output never depends on the parallelism setting.
std::vector<EmbeddingVector> embed_bounded(Gateway& gateway,
                                           const std::vector<std::string>& texts,
                                           std::size_t parallelism = 4);

// ===== Mock gateway =====
// Fully offline stand-in. Chat responses are templated on the operation
// marker found in the prompt; embeddings hash lowercase alphanumeric
// tokens into 64 buckets and normalize to unit length. Every response
// is a pure function of (seed, request).

class MockGateway final : public Gateway {
public:
    static constexpr std::size_t kDimension = 64;

    explicit MockGateway(std::uint64_t seed = 0, std::string embed_model = "mock-embed");

    ChatResponse chat(const ChatRequest& request) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::size_t embedding_dimension() const override { return kDimension; }
    std::string embed_model_id() const override { return embed_model_; }

    static EmbeddingVector embed_one(const std::string& text);

private:
    std::string respond(const ChatRequest& request) const;

    std::uint64_t seed_;
    std::string embed_model_;
};

// ===== Record and replay =====

// Wraps another gateway and appends one CassetteEntry per novel request
// fingerprint. Entries already present in the file are kept and never
// duplicated, so separate stage invocations may share one cassette.
// Responses are returned re-parsed from the recorded payload, which
// makes a record run observationally identical to its later replay.
class RecordingGateway final : public Gateway {
public:
    RecordingGateway(std::shared_ptr<Gateway> inner, std::filesystem::path cassette_path);

    ChatResponse chat(const ChatRequest& request) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::size_t embedding_dimension() const override { return inner_->embedding_dimension(); }
    std::string embed_model_id() const override { return inner_->embed_model_id(); }

private:
    void record(const CassetteEntry& entry);

    std::shared_ptr<Gateway> inner_;
    std::filesystem::path path_;
    std::ofstream out_;
    std::unordered_set<std::string> seen_;
    std::mutex mutex_;
};

// Serves responses purely from a cassette. An unrecorded fingerprint
// raises FingerprintMissError naming the digest: the run is not
// reproducible from this cassette.
class ReplayGateway final : public Gateway {
public:
    ReplayGateway(const std::filesystem::path& cassette_path, std::string embed_model);

    ChatResponse chat(const ChatRequest& request) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::size_t embedding_dimension() const override { return dimension_; }
    std::string embed_model_id() const override { return embed_model_; }

private:
    const std::string& lookup(const std::string& fingerprint) const;

    std::unordered_map<std::string, std::string> entries_;
    std::string embed_model_;
    std::size_t dimension_ = 0;
};

// ===== Live gateway =====
// Talks to an HTTP provider exposing the common hosted-model shape:
// POST {base}/chat/completions and POST {base}/embeddings. Transient
// failures retry with exponential backoff; auth failures never retry.

struct LiveOptions {
    std::string base_url;
    std::string api_key;
    std::string embed_model;
    int max_attempts = 3;
    std::vector<int> backoff_ms = {500, 1000, 2000};
    int timeout_seconds = 120;
};

class LiveGateway final : public Gateway {
public:
    explicit LiveGateway(LiveOptions options);

    ChatResponse chat(const ChatRequest& request) override;
    std::vector<EmbeddingVector> embed(const std::vector<std::string>& texts) override;
    std::size_t embedding_dimension() const override { return dimension_; }
    std::string embed_model_id() const override { return options_.embed_model; }

private:
    std::string post_json(const std::string& route, const std::string& body);

    LiveOptions options_;
    std::string origin_;
    std::string path_prefix_;
    std::size_t dimension_ = 0;
    std::mutex dimension_mutex_;
};

} // namespace uagent::llm
