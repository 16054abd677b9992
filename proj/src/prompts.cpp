#include "uagent/prompts.hpp"

#include <algorithm>
#include <set>

#include "uagent/errors.hpp"
#include "uagent/textutil.hpp"

namespace uagent::sim {

// ===== Levels =====

const std::array<ExperienceLevel, 4>& all_levels() {
    static const std::array<ExperienceLevel, 4> levels = {
        ExperienceLevel::Junior,
        ExperienceLevel::Intermediate,
        ExperienceLevel::Senior,
        ExperienceLevel::Expert,
    };
    return levels;
}

std::string level_name(ExperienceLevel level) {
    switch (level) {
    case ExperienceLevel::Junior: return "junior";
    case ExperienceLevel::Intermediate: return "intermediate";
    case ExperienceLevel::Senior: return "senior";
    case ExperienceLevel::Expert: return "expert";
    }
    throw Error("unknown experience level");
}

std::string level_label(ExperienceLevel level) {
    std::string name = level_name(level);
    name[0] = static_cast<char>(name[0] - 'a' + 'A');
    return name;
}

std::optional<ExperienceLevel> level_from_name(const std::string& name) {
    for (ExperienceLevel level : all_levels()) {
        if (level_name(level) == name) {
            return level;
        }
    }
    return std::nullopt;
}

// ===== Sections =====

std::string section_kind_name(SectionKind kind) {
    switch (kind) {
    case SectionKind::TaskDescription: return "task_description";
    case SectionKind::ApiNames: return "api_names";
    case SectionKind::ApiDetails: return "api_details";
    case SectionKind::ExampleCode: return "example_code";
    case SectionKind::PseudoCode: return "pseudo_code";
    }
    throw Error("unknown section kind");
}

std::optional<SectionKind> section_kind_from_name(const std::string& name) {
    for (SectionKind kind : {SectionKind::TaskDescription, SectionKind::ApiNames,
                             SectionKind::ApiDetails, SectionKind::ExampleCode,
                             SectionKind::PseudoCode}) {
        if (section_kind_name(kind) == name) {
            return kind;
        }
    }
    return std::nullopt;
}

std::string section_header(SectionKind kind) {
    switch (kind) {
    case SectionKind::TaskDescription: return "Task Description";
    case SectionKind::ApiNames: return "API Names";
    case SectionKind::ApiDetails: return "API Details";
    case SectionKind::ExampleCode: return "Example Code";
    case SectionKind::PseudoCode: return "Pseudo-code";
    }
    throw Error("unknown section kind");
}

std::vector<SectionKind> sections_for_level(ExperienceLevel level) {
    switch (level) {
    case ExperienceLevel::Junior:
        return {SectionKind::TaskDescription};
    case ExperienceLevel::Intermediate:
        return {SectionKind::TaskDescription, SectionKind::ApiNames};
    case ExperienceLevel::Senior:
        return {SectionKind::TaskDescription, SectionKind::ApiNames, SectionKind::ApiDetails,
                SectionKind::ExampleCode};
    case ExperienceLevel::Expert:
        return {SectionKind::TaskDescription, SectionKind::ApiNames, SectionKind::ApiDetails,
                SectionKind::ExampleCode, SectionKind::PseudoCode};
    }
    throw Error("unknown experience level");
}

// ===== Tasks =====

void validate_task(const TaskSpec& task) {
    if (task.task_id.empty()) {
        throw ConfigError("task has an empty task_id");
    }
    for (char c : task.task_id) {
        if (!is_ident_char(c) && c != '-') {
            throw ConfigError("task_id '" + task.task_id + "' is not a slug");
        }
    }
    if (task.description.empty()) {
        throw ConfigError("task '" + task.task_id + "' has an empty description");
    }
    if (task.reference_path.has_value() == task.reference_code.has_value()) {
        throw ConfigError("task '" + task.task_id +
                          "' must set exactly one of reference_path and reference_code");
    }
    if (task.reference_path.has_value() && task.reference_path->empty()) {
        throw ConfigError("task '" + task.task_id + "' has an empty reference_path");
    }
    if (task.reference_code.has_value() && task.reference_code->empty()) {
        throw ConfigError("task '" + task.task_id + "' has empty reference_code");
    }
    if (task.pseudo_code.has_value() && task.pseudo_code->empty()) {
        throw ConfigError("task '" + task.task_id + "' has empty pseudo_code");
    }
    if (task.target_language_tag.empty()) {
        throw ConfigError("task '" + task.task_id + "' has an empty target_language_tag");
    }
}

nlohmann::json task_to_json(const TaskSpec& task) {
    nlohmann::json encoded{
        {"task_id", task.task_id},
        {"title", task.title},
        {"description", task.description},
        {"target_language_tag", task.target_language_tag},
    };
    if (task.pseudo_code.has_value()) {
        encoded["pseudo_code"] = *task.pseudo_code;
    }
    if (task.reference_path.has_value()) {
        encoded["reference_path"] = *task.reference_path;
    }
    if (task.reference_code.has_value()) {
        encoded["reference_code"] = *task.reference_code;
    }
    return encoded;
}

TaskSpec task_from_json(const nlohmann::json& encoded) {
    TaskSpec task;
    try {
        task.task_id = encoded.at("task_id").get<std::string>();
        task.title = encoded.value("title", std::string());
        task.description = encoded.at("description").get<std::string>();
        task.target_language_tag = encoded.at("target_language_tag").get<std::string>();
        if (encoded.contains("pseudo_code")) {
            task.pseudo_code = encoded.at("pseudo_code").get<std::string>();
        }
        if (encoded.contains("reference_path")) {
            task.reference_path = encoded.at("reference_path").get<std::string>();
        }
        if (encoded.contains("reference_code")) {
            task.reference_code = encoded.at("reference_code").get<std::string>();
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed task file: ") + e.what());
    }
    validate_task(task);
    return task;
}

// ===== Prompt assembly =====

std::string default_preamble(ExperienceLevel level) {
    switch (level) {
    case ExperienceLevel::Junior:
        return "You are a beginner developer with no prior knowledge of this platform's API. "
               "Solve the task using only the information provided below.";
    case ExperienceLevel::Intermediate:
        return "You are a developer with limited experience on this platform. You know the "
               "names of its core APIs but not their details. Solve the task using the "
               "information provided below.";
    case ExperienceLevel::Senior:
        return "You are an experienced developer on this platform. You are familiar with its "
               "API usage and have worked from its example code. Solve the task using the "
               "information provided below.";
    case ExperienceLevel::Expert:
        return "You are an expert developer on this platform. You know its API in depth and "
               "can implement algorithmic pseudo-code precisely. Solve the task using the "
               "information provided below.";
    }
    throw Error("unknown experience level");
}

std::string assemble_prompt(const std::string& preamble,
                            const std::vector<PromptSection>& sections) {
    std::string assembled = preamble + "\n";
    for (const PromptSection& section : sections) {
        assembled += "\n=== " + section_header(section.kind) + " ===\n" + section.text + "\n";
    }
    return assembled;
}

namespace {

const char kNoInformation[] = "(no information available)";

// True when `token` occurs in `text` with non-identifier characters (or
// the string edge) on both sides.
bool boundary_contains(const std::string& text, const std::string& token) {
    if (token.empty()) {
        return false;
    }
    std::size_t pos = 0;
    while ((pos = text.find(token, pos)) != std::string::npos) {
        bool left_ok = pos == 0 || !is_ident_char(text[pos - 1]);
        std::size_t end = pos + token.size();
        bool right_ok = end == text.size() || !is_ident_char(text[end]);
        if (left_ok && right_ok) {
            return true;
        }
        ++pos;
    }
    return false;
}

bool placeholder_like(const std::string& token) {
    for (const std::string& prefix : {std::string("api_func_"), std::string("param_")}) {
        if (token.size() > prefix.size() && token.rfind(prefix, 0) == 0 &&
            std::all_of(token.begin() + static_cast<std::ptrdiff_t>(prefix.size()), token.end(),
                        [](char c) { return c >= '0' && c <= '9'; })) {
            return true;
        }
    }
    return false;
}

std::string join_chunk_texts(const std::vector<kb::ScoredChunk>& chunks) {
    std::string joined;
    for (const kb::ScoredChunk& scored : chunks) {
        if (!joined.empty()) {
            joined += "\n\n";
        }
        joined += scored.chunk.text;
    }
    return joined;
}

// Name extraction over retrieved API context: one structured LLM call,
// falling back to a placeholder-pattern token scan of the context.
std::vector<std::string> extract_api_names(const std::string& task_id,
                                           const std::string& context,
                                           llm::Gateway& gateway,
                                           const PromptOptions& options,
                                           std::vector<std::string>& warnings) {
    llm::ChatRequest request;
    request.model_id = options.model_id;
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    request.system_text =
        std::string(llm::markers::kExtractApiNames) +
        "\nList the API function names and parameter names that appear in the provided "
        "context. Reply with exactly one fenced json block of the form "
        "{\"functions\": [...], \"parameters\": [...]} and nothing else inside it.";
    request.user_text = context;

    std::vector<std::string> names;
    std::set<std::string> seen;
    auto admit = [&](const std::string& name) {
        // Only names with a boundary occurrence in the retrieved context
        // are kept, so the prompt never introduces text absent from it.
        if (boundary_contains(context, name) && seen.insert(name).second) {
            names.push_back(name);
        }
    };

    std::optional<FencedBlock> block = first_fenced_block(gateway.chat(request).text);
    bool parsed = false;
    if (block.has_value()) {
        try {
            nlohmann::json reply = nlohmann::json::parse(block->body);
            for (const char* key : {"functions", "parameters"}) {
                if (!reply.contains(key)) {
                    continue;
                }
                for (const nlohmann::json& item : reply.at(key)) {
                    if (item.is_string()) {
                        admit(item.get<std::string>());
                    }
                }
            }
            parsed = reply.is_object();
        } catch (const nlohmann::json::exception&) {
            parsed = false;
        }
    }
    if (!parsed) {
        warnings.push_back("task " + task_id +
                           ": name extraction reply carried no parseable list; placeholder "
                           "scan used");
        for (const std::string& token : ident_tokens(context)) {
            if (placeholder_like(token)) {
                admit(token);
            }
        }
    }
    return names;
}

} // namespace

// ===== Level construction =====

LevelPrompt build_level_prompt(const TaskSpec& task,
                               ExperienceLevel level,
                               const kb::VectorIndex& index,
                               llm::Gateway& gateway,
                               const PromptOptions& options,
                               std::vector<std::string>& warnings) {
    validate_task(task);
    const std::vector<SectionKind> kinds = sections_for_level(level);
    const bool needs_api =
        std::find(kinds.begin(), kinds.end(), SectionKind::ApiNames) != kinds.end();
    const bool needs_examples =
        std::find(kinds.begin(), kinds.end(), SectionKind::ExampleCode) != kinds.end();

    // One API retrieval feeds both the name list and the detail text.
    std::vector<kb::ScoredChunk> api_chunks;
    std::string api_context;
    if (needs_api) {
        api_chunks = kb::retrieve(index, task.description + "\nRelevant API functions and parameters",
                                  options.api_k, gateway, ingest::FileRole::CoreApi);
        if (api_chunks.empty()) {
            warnings.push_back("task " + task.task_id + " (" + level_name(level) +
                               "): no API documentation chunks were retrieved");
        }
        api_context = join_chunk_texts(api_chunks);
    }

    std::vector<kb::ScoredChunk> example_chunks;
    if (needs_examples) {
        example_chunks = kb::retrieve(index, task.description + "\nExample usage code",
                                      options.example_k, gateway, ingest::FileRole::ExampleCode);
        if (example_chunks.empty()) {
            warnings.push_back("task " + task.task_id + " (" + level_name(level) +
                               "): no example code chunks were retrieved");
        }
    }

    LevelPrompt prompt;
    prompt.level = level;
    auto preamble_it = options.preamble_overrides.find(level);
    prompt.role_preamble = preamble_it != options.preamble_overrides.end()
                               ? preamble_it->second
                               : default_preamble(level);

    for (SectionKind kind : kinds) {
        PromptSection section;
        section.kind = kind;
        switch (kind) {
        case SectionKind::TaskDescription:
            section.text = task.title.empty() ? task.description
                                              : task.title + "\n\n" + task.description;
            break;
        case SectionKind::ApiNames: {
            if (api_context.empty()) {
                section.text = kNoInformation;
                break;
            }
            std::vector<std::string> names =
                extract_api_names(task.task_id, api_context, gateway, options, warnings);
            if (names.empty()) {
                section.text = kNoInformation;
                break;
            }
            for (const std::string& name : names) {
                if (!section.text.empty()) {
                    section.text += "\n";
                }
                section.text += "- " + name;
            }
            break;
        }
        case SectionKind::ApiDetails:
            section.text = api_context.empty() ? kNoInformation : api_context;
            break;
        case SectionKind::ExampleCode: {
            std::string joined = join_chunk_texts(example_chunks);
            section.text = joined.empty() ? kNoInformation : joined;
            break;
        }
        case SectionKind::PseudoCode:
            if (!task.pseudo_code.has_value()) {
                throw ConfigError("task '" + task.task_id +
                                  "' has no pseudo_code, required for the expert level");
            }
            section.text = *task.pseudo_code;
            break;
        }
        prompt.sections.push_back(std::move(section));
    }

    prompt.assembled_text = assemble_prompt(prompt.role_preamble, prompt.sections);
    return prompt;
}

PromptBundle build_all_levels(const TaskSpec& task,
                              const kb::VectorIndex& index,
                              llm::Gateway& gateway,
                              const PromptOptions& options,
                              std::vector<std::string>& warnings) {
    PromptBundle bundle;
    bundle.task_id = task.task_id;
    for (ExperienceLevel level : all_levels()) {
        bundle.prompts.emplace(level,
                               build_level_prompt(task, level, index, gateway, options, warnings));
    }
    return bundle;
}

// ===== Persistence =====

nlohmann::json bundle_to_json(const PromptBundle& bundle) {
    nlohmann::json prompts = nlohmann::json::object();
    for (const auto& [level, prompt] : bundle.prompts) {
        nlohmann::json sections = nlohmann::json::array();
        for (const PromptSection& section : prompt.sections) {
            sections.push_back(nlohmann::json{
                {"kind", section_kind_name(section.kind)},
                {"text", section.text},
            });
        }
        prompts[level_name(level)] = nlohmann::json{
            {"level", level_name(level)},
            {"role_preamble", prompt.role_preamble},
            {"sections", std::move(sections)},
            {"assembled_text", prompt.assembled_text},
        };
    }
    return nlohmann::json{{"task_id", bundle.task_id}, {"prompts", std::move(prompts)}};
}

PromptBundle bundle_from_json(const nlohmann::json& encoded) {
    PromptBundle bundle;
    try {
        bundle.task_id = encoded.at("task_id").get<std::string>();
        const nlohmann::json& prompts = encoded.at("prompts");
        for (ExperienceLevel level : all_levels()) {
            const nlohmann::json& item = prompts.at(level_name(level));
            LevelPrompt prompt;
            prompt.level = level;
            prompt.role_preamble = item.at("role_preamble").get<std::string>();
            for (const nlohmann::json& sec : item.at("sections")) {
                std::optional<SectionKind> kind =
                    section_kind_from_name(sec.at("kind").get<std::string>());
                if (!kind.has_value()) {
                    throw ParseError("prompt bundle names an unknown section kind");
                }
                prompt.sections.push_back(PromptSection{*kind, sec.at("text").get<std::string>()});
            }
            prompt.assembled_text = item.at("assembled_text").get<std::string>();
            bundle.prompts.emplace(level, std::move(prompt));
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed prompt bundle: ") + e.what());
    }
    for (const auto& [level, prompt] : bundle.prompts) {
        std::vector<SectionKind> expected = sections_for_level(level);
        if (prompt.sections.size() != expected.size()) {
            throw ParseError("prompt bundle section set does not match the level matrix");
        }
        for (std::size_t i = 0; i < expected.size(); ++i) {
            if (prompt.sections[i].kind != expected[i]) {
                throw ParseError("prompt bundle section set does not match the level matrix");
            }
        }
    }
    return bundle;
}

} // namespace uagent::sim
