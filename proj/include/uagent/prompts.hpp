#pragma once

// Experience-level prompt construction: four developer profiles per
// task, each receiving a strictly larger information section set.

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uagent/gateway.hpp"
#include "uagent/knowledge.hpp"

namespace uagent::sim {

// ===== Levels =====

enum class ExperienceLevel { Junior = 1, Intermediate = 2, Senior = 3, Expert = 4 };

const std::array<ExperienceLevel, 4>& all_levels();
std::string level_name(ExperienceLevel level);   // "junior" .. "expert"
std::string level_label(ExperienceLevel level);  // "Junior" .. "Expert"
std::optional<ExperienceLevel> level_from_name(const std::string& name);

// ===== Sections =====

enum class SectionKind { TaskDescription, ApiNames, ApiDetails, ExampleCode, PseudoCode };

std::string section_kind_name(SectionKind kind); // "task_description" ..
std::optional<SectionKind> section_kind_from_name(const std::string& name);
std::string section_header(SectionKind kind);    // "Task Description" ..

// The fixed inclusion matrix, in section order.
std::vector<SectionKind> sections_for_level(ExperienceLevel level);

// ===== Tasks =====

struct TaskSpec {
    std::string task_id; // slug: [A-Za-z0-9_-]+
    std::string title;
    std::string description;
    std::optional<std::string> pseudo_code;
    std::optional<std::string> reference_path; // exactly one of the two
    std::optional<std::string> reference_code; // references is set
    std::string target_language_tag;
};

void validate_task(const TaskSpec& task); // throws ConfigError
nlohmann::json task_to_json(const TaskSpec& task);
TaskSpec task_from_json(const nlohmann::json& encoded);

// ===== Prompts =====

struct PromptSection {
    SectionKind kind = SectionKind::TaskDescription;
    std::string text;
};

struct LevelPrompt {
    ExperienceLevel level = ExperienceLevel::Junior;
    std::string role_preamble;
    std::vector<PromptSection> sections; // matches sections_for_level exactly
    std::string assembled_text;
};

struct PromptBundle {
    std::string task_id;
    std::map<ExperienceLevel, LevelPrompt> prompts; // all four levels
};

struct PromptOptions {
    std::size_t api_k = 5;     // ApiNames / ApiDetails retrieval depth
    std::size_t example_k = 3; // ExampleCode retrieval depth
    std::string model_id = "mock-chat";
    double temperature = 0.0;
    int max_tokens = 1024;
    std::map<ExperienceLevel, std::string> preamble_overrides;
};

std::string default_preamble(ExperienceLevel level);

// Deterministic concatenation: preamble, then one "=== Header ===" block
// per section, in section order.
std::string assemble_prompt(const std::string& preamble,
                            const std::vector<PromptSection>& sections);

LevelPrompt build_level_prompt(const TaskSpec& task,
                               ExperienceLevel level,
                               const kb::VectorIndex& index,
                               llm::Gateway& gateway,
                               const PromptOptions& options,
                               std::vector<std::string>& warnings);

PromptBundle build_all_levels(const TaskSpec& task,
                              const kb::VectorIndex& index,
                              llm::Gateway& gateway,
                              const PromptOptions& options,
                              std::vector<std::string>& warnings);

nlohmann::json bundle_to_json(const PromptBundle& bundle);
PromptBundle bundle_from_json(const nlohmann::json& encoded); // validates all four levels

} // namespace uagent::sim
