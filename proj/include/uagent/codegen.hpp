#pragma once

// Code generation: one chat call per experience level combining the
// generation instruction with the level prompt, plus clean-code
// extraction from the raw model reply.

#include <string>
#include <vector>

#include "json.hpp"
#include "uagent/errors.hpp"
#include "uagent/gateway.hpp"
#include "uagent/knowledge.hpp"
#include "uagent/prompts.hpp"

namespace uagent::gen {

// ===== Types =====

struct GeneratedArtifact {
    std::string task_id;
    sim::ExperienceLevel level = sim::ExperienceLevel::Junior;
    std::string prompt_digest; // fingerprint of the request actually sent
    std::string raw_response;
    std::string code; // non-empty on success
    std::string language_tag;
    bool low_confidence = false; // extraction fell back to the whole reply
};

struct ExtractedCode {
    std::string code;
    std::string fence_tag;       // empty when absent
    bool low_confidence = false; // no fence found; whole reply used
};

// Raised when a reply yields no usable code; carries the reply for
// diagnostics.
class ExtractionError : public Error {
public:
    ExtractionError(const std::string& message, std::string raw_response)
        : Error(message), raw_response_(std::move(raw_response)) {}
    const std::string& raw_response() const { return raw_response_; }

private:
    std::string raw_response_;
};

struct GenOptions {
    std::string model_id = "mock-chat";
    double temperature = 0.0;
    int max_tokens = 2048;
    std::size_t context_k = 5; // extra API retrieval appended to the instruction
};

// ===== Operations =====

// First fenced code block, else the whole reply trimmed and flagged
// low-confidence. Throws ExtractionError when nothing usable remains.
ExtractedCode extract_code(const std::string& raw_response);

// The exact chat request generate() sends: instruction template plus
// retrieved API context as the system text, task marker plus the level
// prompt as the user text.
llm::ChatRequest build_generation_request(const sim::TaskSpec& task,
                                          const sim::LevelPrompt& prompt,
                                          const std::string& context_text,
                                          const GenOptions& options);

GeneratedArtifact generate(const sim::TaskSpec& task,
                           const sim::LevelPrompt& prompt,
                           const kb::VectorIndex& index,
                           llm::Gateway& gateway,
                           const GenOptions& options,
                           std::vector<std::string>& warnings);

// generate() plus a copy of the outgoing request for audit trails; a
// null request_out behaves exactly like generate().
GeneratedArtifact generate_with_request(const sim::TaskSpec& task,
                                        const sim::LevelPrompt& prompt,
                                        const kb::VectorIndex& index,
                                        llm::Gateway& gateway,
                                        const GenOptions& options,
                                        std::vector<std::string>& warnings,
                                        llm::ChatRequest* request_out);

// One artifact per level, collected in level order.
std::vector<GeneratedArtifact> generate_for_bundle(const sim::TaskSpec& task,
                                                   const sim::PromptBundle& bundle,
                                                   const kb::VectorIndex& index,
                                                   llm::Gateway& gateway,
                                                   const GenOptions& options,
                                                   std::vector<std::string>& warnings);

nlohmann::json artifact_to_json(const GeneratedArtifact& artifact);
GeneratedArtifact artifact_from_json(const nlohmann::json& encoded);

} // namespace uagent::gen
