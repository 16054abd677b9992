#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "uagent/gateway.hpp"
#include "uagent/ingestion.hpp"

namespace uagent::anon {

// ===== Types =====

enum class RuleKind { Platform, Function, Parameter };

std::string kind_name(RuleKind kind);
std::optional<RuleKind> kind_from_name(std::string_view name);

struct Rule {
    std::string original;
    std::string placeholder;
    RuleKind kind = RuleKind::Platform;
};

struct RuleSet {
    std::vector<Rule> rules; // assignment order; file form sorts by placeholder
    std::string generated_from; // digest of the source DocumentSet
};

// ===== Validation =====

// True when the candidate may serve as a rule original: non-empty,
// at most 80 bytes, contains an identifier character, and is free of
// whitespace, control bytes, and placeholder-shaped substrings (those
// would let a placeholder occur inside an original, breaking both
// injectivity and idempotence).
bool valid_original(std::string_view candidate);

// 0-based index to "Platform_A"/"api_func_1"/"param_1" style names.
std::string placeholder_for(RuleKind kind, std::size_t index);

// Throws Error when any rule-set invariant is violated.
void validate_ruleset(const RuleSet& ruleset);

// ===== Operations =====

struct GenerateOptions {
    std::string model_id = "mock-chat";
    double temperature = 0.0;
    int max_tokens = 4096;
    // Keeps the pipeline going with an empty set instead of aborting.
    bool allow_empty = false;
    // Prompt body cap; overlong document text is truncated, not dropped.
    std::size_t prompt_char_cap = 64 * 1024;
};

// Prompts the gateway with the readme and API documents, validates and
// deduplicates the suggested identifiers (drops recorded as redacted
// warnings that never quote the identifier), orders survivors by first
// boundary occurrence in the concatenated document set, and assigns
// placeholders in that order.
RuleSet generate_rules(const ingest::DocumentSet& documents, llm::Gateway& gateway,
                       const GenerateOptions& options, std::vector<std::string>& warnings);

// Single left-to-right scan; at each position the longest matching
// original wins. A match requires identifier boundaries on both sides
// (neighbors not in [A-Za-z0-9_]); matching is case-sensitive.
std::string apply_rules(std::string_view text, const RuleSet& ruleset);

// Applies the rule set to every document text; paths are metadata and
// pass through untouched.
ingest::DocumentSet anonymize_documents(const ingest::DocumentSet& documents,
                                        const RuleSet& ruleset);

struct Violation {
    std::string original;
    std::size_t byte_offset = 0;

    bool operator==(const Violation&) const = default;
};

// Every boundary occurrence of any original still present in the text,
// ordered by (byte_offset, original). Empty result means clean.
std::vector<Violation> verify_anonymized(std::string_view text, const RuleSet& ruleset);

// ===== Serialization =====

// Rules appear sorted by placeholder in the file form.
nlohmann::json ruleset_to_json(const RuleSet& ruleset);
RuleSet ruleset_from_json(const nlohmann::json& value);

} // namespace uagent::anon
