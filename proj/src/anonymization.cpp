#include "uagent/anonymization.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <limits>
#include <set>

#include "uagent/digest.hpp"
#include "uagent/errors.hpp"
#include "uagent/jsonio.hpp"
#include "uagent/textutil.hpp"

namespace uagent::anon {

// ===== Names and schemes =====

std::string kind_name(RuleKind kind) {
    switch (kind) {
    case RuleKind::Platform:
        return "platform";
    case RuleKind::Function:
        return "function";
    case RuleKind::Parameter:
        return "parameter";
    }
    return "platform";
}

std::optional<RuleKind> kind_from_name(std::string_view name) {
    if (name == "platform") {
        return RuleKind::Platform;
    }
    if (name == "function") {
        return RuleKind::Function;
    }
    if (name == "parameter") {
        return RuleKind::Parameter;
    }
    return std::nullopt;
}

std::string placeholder_for(RuleKind kind, std::size_t index) {
    switch (kind) {
    case RuleKind::Platform: {
        // Spreadsheet-column letters: A..Z, AA, AB, ...
        std::string letters;
        std::size_t n = index + 1;
        while (n > 0) {
            std::size_t rem = (n - 1) % 26;
            letters.insert(letters.begin(), static_cast<char>('A' + rem));
            n = (n - 1) / 26;
        }
        return "Platform_" + letters;
    }
    case RuleKind::Function:
        return "api_func_" + std::to_string(index + 1);
    case RuleKind::Parameter:
        return "param_" + std::to_string(index + 1);
    }
    return "";
}

namespace {

bool is_upper(char c) { return c >= 'A' && c <= 'Z'; }
bool is_digit(char c) { return c >= '0' && c <= '9'; }

// Detects placeholder-shaped substrings anywhere in the candidate.
bool contains_placeholder_pattern(std::string_view s) {
    auto after_prefix = [&](std::string_view prefix, auto char_ok) {
        std::size_t pos = s.find(prefix);
        while (pos != std::string_view::npos) {
            std::size_t next = pos + prefix.size();
            if (next < s.size() && char_ok(s[next])) {
                return true;
            }
            pos = s.find(prefix, pos + 1);
        }
        return false;
    };
    return after_prefix("Platform_", is_upper) || after_prefix("api_func_", is_digit) ||
           after_prefix("param_", is_digit);
}

bool matches_scheme(const std::string& placeholder, RuleKind kind) {
    switch (kind) {
    case RuleKind::Platform: {
        const std::string prefix = "Platform_";
        if (placeholder.size() <= prefix.size() || placeholder.rfind(prefix, 0) != 0) {
            return false;
        }
        return std::all_of(placeholder.begin() + static_cast<std::ptrdiff_t>(prefix.size()),
                           placeholder.end(), is_upper);
    }
    case RuleKind::Function:
    case RuleKind::Parameter: {
        const std::string prefix = kind == RuleKind::Function ? "api_func_" : "param_";
        if (placeholder.size() <= prefix.size() || placeholder.rfind(prefix, 0) != 0) {
            return false;
        }
        return std::all_of(placeholder.begin() + static_cast<std::ptrdiff_t>(prefix.size()),
                           placeholder.end(), is_digit);
    }
    }
    return false;
}

bool boundary_before(std::string_view text, std::size_t pos) {
    return pos == 0 || !is_ident_char(text[pos - 1]);
}

bool boundary_after(std::string_view text, std::size_t end) {
    return end >= text.size() || !is_ident_char(text[end]);
}

bool boundary_match_at(std::string_view text, std::size_t pos, std::string_view token) {
    if (pos + token.size() > text.size() || !boundary_before(text, pos) ||
        !boundary_after(text, pos + token.size())) {
        return false;
    }
    return text.compare(pos, token.size(), token) == 0;
}

std::size_t first_boundary_occurrence(std::string_view text, std::string_view token) {
    std::size_t pos = text.find(token);
    while (pos != std::string_view::npos) {
        if (boundary_before(text, pos) && boundary_after(text, pos + token.size())) {
            return pos;
        }
        pos = text.find(token, pos + 1);
    }
    return std::string_view::npos;
}

// Rule indices bucketed by the original's first byte, longest original
// first within a bucket. Both scan operations share this layout.
struct Matcher {
    std::array<std::vector<const Rule*>, 256> buckets{};

    explicit Matcher(const RuleSet& ruleset) {
        for (const Rule& rule : ruleset.rules) {
            if (!rule.original.empty()) {
                buckets[static_cast<unsigned char>(rule.original[0])].push_back(&rule);
            }
        }
        for (auto& bucket : buckets) {
            std::sort(bucket.begin(), bucket.end(), [](const Rule* a, const Rule* b) {
                if (a->original.size() != b->original.size()) {
                    return a->original.size() > b->original.size();
                }
                return a->original < b->original;
            });
        }
    }

    const std::vector<const Rule*>& candidates(char first) const {
        return buckets[static_cast<unsigned char>(first)];
    }
};

} // namespace

// ===== Validation =====

bool valid_original(std::string_view candidate) {
    if (candidate.empty() || candidate.size() > 80) {
        return false;
    }
    bool has_ident = false;
    for (char c : candidate) {
        unsigned char uc = static_cast<unsigned char>(c);
        if (std::isspace(uc) || uc < 0x20 || uc == 0x7f) {
            return false;
        }
        has_ident = has_ident || is_ident_char(c);
    }
    if (!has_ident) {
        return false;
    }
    return !contains_placeholder_pattern(candidate);
}

void validate_ruleset(const RuleSet& ruleset) {
    std::set<std::string> originals;
    std::set<std::string> placeholders;
    for (const Rule& rule : ruleset.rules) {
        if (!valid_original(rule.original)) {
            throw Error("rule set invariant violated: invalid original");
        }
        if (!matches_scheme(rule.placeholder, rule.kind)) {
            throw Error("rule set invariant violated: placeholder '" + rule.placeholder +
                        "' does not match the " + kind_name(rule.kind) + " scheme");
        }
        if (!originals.insert(rule.original).second) {
            throw Error("rule set invariant violated: duplicate original");
        }
        if (!placeholders.insert(rule.placeholder).second) {
            throw Error("rule set invariant violated: duplicate placeholder " + rule.placeholder);
        }
    }
    for (const std::string& placeholder : placeholders) {
        for (const Rule& rule : ruleset.rules) {
            if (rule.original.find(placeholder) != std::string::npos) {
                throw Error("rule set invariant violated: placeholder " + placeholder +
                            " occurs inside an original");
            }
        }
    }
}

// ===== Application and verification =====

std::string apply_rules(std::string_view text, const RuleSet& ruleset) {
    if (ruleset.rules.empty()) {
        return std::string(text);
    }
    Matcher matcher(ruleset);
    std::string out;
    out.reserve(text.size());
    std::size_t pos = 0;
    while (pos < text.size()) {
        const Rule* matched = nullptr;
        if (boundary_before(text, pos)) {
            for (const Rule* rule : matcher.candidates(text[pos])) {
                if (boundary_match_at(text, pos, rule->original)) {
                    matched = rule;
                    break; // longest candidate first
                }
            }
        }
        if (matched != nullptr) {
            out += matched->placeholder;
            pos += matched->original.size();
        } else {
            out += text[pos];
            ++pos;
        }
    }
    return out;
}

ingest::DocumentSet anonymize_documents(const ingest::DocumentSet& documents,
                                        const RuleSet& ruleset) {
    ingest::DocumentSet anonymized = documents;
    anonymized.readme_text = apply_rules(documents.readme_text, ruleset);
    for (ingest::Document& doc : anonymized.api_documents) {
        doc.text = apply_rules(doc.text, ruleset);
    }
    for (ingest::Document& doc : anonymized.example_documents) {
        doc.text = apply_rules(doc.text, ruleset);
    }
    return anonymized;
}

std::vector<Violation> verify_anonymized(std::string_view text, const RuleSet& ruleset) {
    std::vector<Violation> violations;
    if (ruleset.rules.empty()) {
        return violations;
    }
    Matcher matcher(ruleset);
    for (std::size_t pos = 0; pos < text.size(); ++pos) {
        if (!boundary_before(text, pos)) {
            continue;
        }
        for (const Rule* rule : matcher.candidates(text[pos])) {
            if (boundary_match_at(text, pos, rule->original)) {
                violations.push_back(Violation{rule->original, pos});
            }
        }
    }
    std::sort(violations.begin(), violations.end(), [](const Violation& a, const Violation& b) {
        if (a.byte_offset != b.byte_offset) {
            return a.byte_offset < b.byte_offset;
        }
        return a.original < b.original;
    });
    return violations;
}

// ===== Rule generation =====

namespace {

void append_capped(std::string& prompt, const std::string& text, std::size_t cap) {
    if (prompt.size() >= cap) {
        return;
    }
    std::size_t room = cap - prompt.size();
    if (text.size() <= room) {
        prompt += text;
    } else {
        prompt.append(text, 0, room);
        prompt += "\n[truncated]\n";
    }
}

} // namespace

RuleSet generate_rules(const ingest::DocumentSet& documents, llm::Gateway& gateway,
                       const GenerateOptions& options, std::vector<std::string>& warnings) {
    std::string body;
    append_capped(body, "README:\n" + documents.readme_text + "\n", options.prompt_char_cap);
    append_capped(body, "\nAPI DOCUMENTATION:\n", options.prompt_char_cap);
    for (const ingest::Document& doc : documents.api_documents) {
        append_capped(body, "FILE: " + doc.path + "\n" + doc.text + "\n", options.prompt_char_cap);
    }

    llm::ChatRequest request;
    request.model_id = options.model_id;
    request.system_text =
        std::string(llm::markers::kExtractIdentifiers) +
        "\nSurvey the documentation below and list the platform name(s), the platform-"
        "specific function names, and the parameter identifiers a developer would use. "
        "Reply with a single fenced JSON object holding the string arrays \"platforms\", "
        "\"functions\", and \"parameters\".";
    request.user_text = body;
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;

    llm::ChatResponse response = gateway.chat(request);

    nlohmann::json suggestions = nlohmann::json::object();
    auto block = first_fenced_block(response.text);
    if (block.has_value()) {
        nlohmann::json parsed = nlohmann::json::parse(block->body, nullptr, false);
        if (parsed.is_object()) {
            suggestions = std::move(parsed);
        }
    }
    if (suggestions.empty()) {
        warnings.push_back("identifier extraction reply carried no parseable block");
    }

    // Accept valid, globally-unique suggestions per kind. Drop reasons
    // are recorded without quoting the identifier itself so warnings
    // stay publishable.
    struct Accepted {
        std::string original;
        RuleKind kind;
    };
    std::vector<Accepted> accepted;
    std::set<std::string> seen;
    const std::array<std::pair<const char*, RuleKind>, 3> kinds{{
        {"platforms", RuleKind::Platform},
        {"functions", RuleKind::Function},
        {"parameters", RuleKind::Parameter},
    }};
    for (const auto& [key, kind] : kinds) {
        const nlohmann::json list = suggestions.value(key, nlohmann::json::array());
        if (!list.is_array()) {
            warnings.push_back(std::string("identifier list '") + key + "' is not an array");
            continue;
        }
        std::size_t index = 0;
        for (const nlohmann::json& item : list) {
            ++index;
            if (!item.is_string() || !valid_original(item.get<std::string>())) {
                warnings.push_back("dropped invalid identifier suggestion (" + kind_name(kind) +
                                   " #" + std::to_string(index) + ")");
                continue;
            }
            std::string original = item.get<std::string>();
            if (!seen.insert(original).second) {
                warnings.push_back("dropped duplicate identifier suggestion (" + kind_name(kind) +
                                   " #" + std::to_string(index) + ")");
                continue;
            }
            accepted.push_back(Accepted{std::move(original), kind});
        }
    }

    // First-occurrence order within the concatenated document set.
    std::string concat = documents.readme_text;
    for (const ingest::Document& doc : documents.api_documents) {
        concat += "\n" + doc.text;
    }
    for (const ingest::Document& doc : documents.example_documents) {
        concat += "\n" + doc.text;
    }

    RuleSet ruleset;
    ruleset.generated_from = sha256_hex(canonical_dump(ingest::documents_to_json(documents)));

    for (RuleKind kind : {RuleKind::Platform, RuleKind::Function, RuleKind::Parameter}) {
        std::vector<std::pair<std::size_t, const Accepted*>> ordered;
        for (const Accepted& entry : accepted) {
            if (entry.kind == kind) {
                std::size_t offset = first_boundary_occurrence(concat, entry.original);
                ordered.emplace_back(offset, &entry);
            }
        }
        std::stable_sort(ordered.begin(), ordered.end(),
                         [](const auto& a, const auto& b) { return a.first < b.first; });
        std::size_t index = 0;
        for (const auto& [offset, entry] : ordered) {
            ruleset.rules.push_back(
                Rule{entry->original, placeholder_for(kind, index), kind});
            ++index;
        }
    }

    if (ruleset.rules.empty()) {
        if (!options.allow_empty) {
            throw Error("no anonymization rules were generated; aborting (set "
                        "allow_unanonymized to continue without anonymization)");
        }
        warnings.push_back("proceeding with an empty anonymization rule set");
    }
    validate_ruleset(ruleset);
    return ruleset;
}

// ===== Serialization =====

nlohmann::json ruleset_to_json(const RuleSet& ruleset) {
    std::vector<const Rule*> sorted;
    sorted.reserve(ruleset.rules.size());
    for (const Rule& rule : ruleset.rules) {
        sorted.push_back(&rule);
    }
    std::sort(sorted.begin(), sorted.end(),
              [](const Rule* a, const Rule* b) { return a->placeholder < b->placeholder; });
    nlohmann::json rules = nlohmann::json::array();
    for (const Rule* rule : sorted) {
        rules.push_back(nlohmann::json{{"kind", kind_name(rule->kind)},
                                       {"original", rule->original},
                                       {"placeholder", rule->placeholder}});
    }
    return nlohmann::json{{"generated_from", ruleset.generated_from}, {"rules", rules}};
}

RuleSet ruleset_from_json(const nlohmann::json& value) {
    if (!value.is_object() || !value.contains("rules") || !value["rules"].is_array()) {
        throw ParseError("malformed rule set document");
    }
    RuleSet ruleset;
    ruleset.generated_from = value.value("generated_from", "");
    for (const nlohmann::json& item : value["rules"]) {
        Rule rule;
        rule.original = item.value("original", "");
        rule.placeholder = item.value("placeholder", "");
        auto kind = kind_from_name(item.value("kind", ""));
        if (!kind.has_value()) {
            throw ParseError("rule has an unknown kind");
        }
        rule.kind = *kind;
        ruleset.rules.push_back(std::move(rule));
    }
    validate_ruleset(ruleset);
    return ruleset;
}

} // namespace uagent::anon
