#include "uagent/codegen.hpp"

#include "uagent/textutil.hpp"

namespace uagent::gen {

// ===== Extraction =====

ExtractedCode extract_code(const std::string& raw_response) {
    std::optional<FencedBlock> block = first_fenced_block(raw_response);
    ExtractedCode extracted;
    if (block.has_value()) {
        extracted.code = block->body;
        extracted.fence_tag = block->tag;
        if (extracted.code.empty()) {
            throw ExtractionError("the reply's fenced code block was empty", raw_response);
        }
        return extracted;
    }
    extracted.code = trim(raw_response);
    extracted.low_confidence = true;
    if (extracted.code.empty()) {
        throw ExtractionError("the reply contained no code", raw_response);
    }
    return extracted;
}

// ===== Generation =====

namespace {

std::string context_for_task(const sim::TaskSpec& task,
                             const kb::VectorIndex& index,
                             llm::Gateway& gateway,
                             const GenOptions& options,
                             std::vector<std::string>& warnings) {
    std::vector<kb::ScoredChunk> chunks = kb::retrieve(index, task.description, options.context_k,
                                                       gateway, ingest::FileRole::CoreApi);
    if (chunks.empty()) {
        warnings.push_back("task " + task.task_id +
                           ": no API context chunks were retrieved for generation");
        return "(no information available)";
    }
    std::string joined;
    for (const kb::ScoredChunk& scored : chunks) {
        if (!joined.empty()) {
            joined += "\n\n";
        }
        joined += scored.chunk.text;
    }
    return joined;
}

} // namespace

llm::ChatRequest build_generation_request(const sim::TaskSpec& task,
                                          const sim::LevelPrompt& prompt,
                                          const std::string& context_text,
                                          const GenOptions& options) {
    llm::ChatRequest request;
    request.model_id = options.model_id;
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    request.system_text = std::string(llm::markers::kGenerateCode) + "\n" +
                          llm::markers::kLanguagePrefix + " " + task.target_language_tag +
                          "\nImplement the task described by the user. Reply with exactly one "
                          "fenced code block in the named language and no other code blocks." +
                          "\n\n=== Retrieved API Context ===\n" + context_text;
    request.user_text =
        std::string(llm::markers::kTaskPrefix) + " " + task.task_id + "\n\n" +
        prompt.assembled_text;
    return request;
}

GeneratedArtifact generate_with_request(const sim::TaskSpec& task,
                                        const sim::LevelPrompt& prompt,
                                        const kb::VectorIndex& index,
                                        llm::Gateway& gateway,
                                        const GenOptions& options,
                                        std::vector<std::string>& warnings,
                                        llm::ChatRequest* request_out) {
    std::string context = context_for_task(task, index, gateway, options, warnings);
    llm::ChatRequest request = build_generation_request(task, prompt, context, options);
    if (request_out != nullptr) {
        *request_out = request;
    }

    GeneratedArtifact artifact;
    artifact.task_id = task.task_id;
    artifact.level = prompt.level;
    artifact.prompt_digest = llm::chat_fingerprint(request);
    artifact.raw_response = gateway.chat(request).text;

    ExtractedCode extracted = extract_code(artifact.raw_response);
    artifact.code = extracted.code;
    artifact.low_confidence = extracted.low_confidence;
    artifact.language_tag =
        extracted.fence_tag.empty() ? task.target_language_tag : extracted.fence_tag;
    return artifact;
}

GeneratedArtifact generate(const sim::TaskSpec& task,
                           const sim::LevelPrompt& prompt,
                           const kb::VectorIndex& index,
                           llm::Gateway& gateway,
                           const GenOptions& options,
                           std::vector<std::string>& warnings) {
    return generate_with_request(task, prompt, index, gateway, options, warnings, nullptr);
}

std::vector<GeneratedArtifact> generate_for_bundle(const sim::TaskSpec& task,
                                                   const sim::PromptBundle& bundle,
                                                   const kb::VectorIndex& index,
                                                   llm::Gateway& gateway,
                                                   const GenOptions& options,
                                                   std::vector<std::string>& warnings) {
    std::vector<GeneratedArtifact> artifacts;
    for (sim::ExperienceLevel level : sim::all_levels()) {
        artifacts.push_back(
            generate(task, bundle.prompts.at(level), index, gateway, options, warnings));
    }
    return artifacts;
}

// ===== Persistence =====

nlohmann::json artifact_to_json(const GeneratedArtifact& artifact) {
    return nlohmann::json{
        {"task_id", artifact.task_id},
        {"level", sim::level_name(artifact.level)},
        {"prompt_digest", artifact.prompt_digest},
        {"raw_response", artifact.raw_response},
        {"code", artifact.code},
        {"language_tag", artifact.language_tag},
        {"low_confidence", artifact.low_confidence},
    };
}

GeneratedArtifact artifact_from_json(const nlohmann::json& encoded) {
    GeneratedArtifact artifact;
    try {
        artifact.task_id = encoded.at("task_id").get<std::string>();
        std::optional<sim::ExperienceLevel> level =
            sim::level_from_name(encoded.at("level").get<std::string>());
        if (!level.has_value()) {
            throw ParseError("artifact names an unknown experience level");
        }
        artifact.level = *level;
        artifact.prompt_digest = encoded.at("prompt_digest").get<std::string>();
        artifact.raw_response = encoded.at("raw_response").get<std::string>();
        artifact.code = encoded.at("code").get<std::string>();
        artifact.language_tag = encoded.at("language_tag").get<std::string>();
        artifact.low_confidence = encoded.value("low_confidence", false);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed artifact record: ") + e.what());
    }
    if (artifact.code.empty()) {
        throw ParseError("artifact record has empty code");
    }
    if (artifact.prompt_digest.size() != 64) {
        throw ParseError("artifact record has a malformed prompt digest");
    }
    return artifact;
}

} // namespace uagent::gen
