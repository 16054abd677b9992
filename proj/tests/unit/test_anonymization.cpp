#include "doctest.h"

#include <algorithm>
#include <random>
#include <set>

#include "uagent/anonymization.hpp"
#include "uagent/digest.hpp"
#include "uagent/errors.hpp"
#include "uagent/ingestion.hpp"
#include "uagent/jsonio.hpp"

using namespace uagent;
using namespace uagent::anon;

namespace {

const std::filesystem::path kFixtures = UAGENT_FIXTURE_DIR;

bool oracle_ident(char c) {
    return (c >= 'A' && c <= 'Z') || (c >= 'a' && c <= 'z') || (c >= '0' && c <= '9') || c == '_';
}

// Reference substitution: a deliberately naive character-level scan,
// longest original first at each position, written independently of the
// production matcher.
std::string oracle_apply(const std::string& text, const RuleSet& ruleset) {
    std::vector<Rule> by_length(ruleset.rules.begin(), ruleset.rules.end());
    std::sort(by_length.begin(), by_length.end(), [](const Rule& a, const Rule& b) {
        if (a.original.size() != b.original.size()) {
            return a.original.size() > b.original.size();
        }
        return a.original < b.original;
    });
    std::string out;
    std::size_t i = 0;
    while (i < text.size()) {
        bool left_ok = i == 0 || !oracle_ident(text[i - 1]);
        const Rule* hit = nullptr;
        if (left_ok) {
            for (const Rule& rule : by_length) {
                const std::string& o = rule.original;
                if (i + o.size() > text.size()) {
                    continue;
                }
                if (text.compare(i, o.size(), o) != 0) {
                    continue;
                }
                std::size_t end = i + o.size();
                if (end < text.size() && oracle_ident(text[end])) {
                    continue;
                }
                hit = &rule;
                break;
            }
        }
        if (hit != nullptr) {
            out += hit->placeholder;
            i += hit->original.size();
        } else {
            out += text[i];
            ++i;
        }
    }
    return out;
}

RuleSet make_ruleset(const std::vector<std::pair<std::string, RuleKind>>& entries) {
    RuleSet ruleset;
    std::size_t counts[3] = {0, 0, 0};
    for (const auto& [original, kind] : entries) {
        std::size_t& n = counts[static_cast<int>(kind)];
        ruleset.rules.push_back(Rule{original, placeholder_for(kind, n), kind});
        ++n;
    }
    validate_ruleset(ruleset);
    return ruleset;
}

struct RandomCase {
    std::string text;
    RuleSet ruleset;
};

RandomCase random_case(std::mt19937_64& rng) {
    auto pick = [&rng](std::size_t n) { return std::uniform_int_distribution<std::size_t>(0, n - 1)(rng); };

    const std::string ident_chars = "abcdefgABCDEFG0123_";
    auto random_original = [&]() {
        for (;;) {
            std::size_t len = 1 + pick(8);
            std::string s;
            for (std::size_t i = 0; i < len; ++i) {
                // Mostly identifier characters, occasionally '.' or '-'.
                std::size_t roll = pick(12);
                if (roll == 0) {
                    s += '.';
                } else if (roll == 1) {
                    s += '-';
                } else {
                    s += ident_chars[pick(ident_chars.size())];
                }
            }
            if (valid_original(s)) {
                return s;
            }
        }
    };

    RandomCase result;
    std::size_t rule_count = pick(9); // 0..8
    std::vector<std::pair<std::string, RuleKind>> entries;
    std::set<std::string> used;
    while (entries.size() < rule_count) {
        std::string original = random_original();
        if (!used.insert(original).second) {
            continue;
        }
        entries.emplace_back(original, static_cast<RuleKind>(pick(3)));
    }
    result.ruleset = make_ruleset(entries);

    // Texts mix rule originals, near-misses, placeholders, junk words,
    // and separators so boundary logic is exercised from every side.
    std::size_t token_count = pick(60);
    for (std::size_t i = 0; i < token_count; ++i) {
        switch (pick(8)) {
        case 0:
        case 1:
            if (!entries.empty()) {
                result.text += entries[pick(entries.size())].first;
                break;
            }
            [[fallthrough]];
        case 2:
            if (!entries.empty()) {
                // Non-boundary variants of an original.
                const std::string& o = entries[pick(entries.size())].first;
                result.text += pick(2) == 0 ? o + "x" : "_" + o;
                break;
            }
            [[fallthrough]];
        case 3:
            if (!result.ruleset.rules.empty()) {
                result.text += result.ruleset.rules[pick(result.ruleset.rules.size())].placeholder;
                break;
            }
            [[fallthrough]];
        case 4: {
            std::size_t len = 1 + pick(6);
            for (std::size_t k = 0; k < len; ++k) {
                result.text += ident_chars[pick(ident_chars.size())];
            }
            break;
        }
        default: {
            const std::string separators = " \n\t.,;()[]-+*/\"'";
            result.text += separators[pick(separators.size())];
            break;
        }
        }
    }
    return result;
}

} // namespace

TEST_CASE("placeholder schemes follow kind and index") {
    CHECK(placeholder_for(RuleKind::Platform, 0) == "Platform_A");
    CHECK(placeholder_for(RuleKind::Platform, 25) == "Platform_Z");
    CHECK(placeholder_for(RuleKind::Platform, 26) == "Platform_AA");
    CHECK(placeholder_for(RuleKind::Function, 0) == "api_func_1");
    CHECK(placeholder_for(RuleKind::Function, 11) == "api_func_12");
    CHECK(placeholder_for(RuleKind::Parameter, 0) == "param_1");
}

TEST_CASE("valid_original filters malformed and placeholder-shaped strings") {
    CHECK(valid_original("GraphFlow"));
    CHECK(valid_original("vertex_map"));
    CHECK(valid_original("a.b-c"));
    CHECK_FALSE(valid_original(""));
    CHECK_FALSE(valid_original("two words"));
    CHECK_FALSE(valid_original("tab\tseparated"));
    CHECK_FALSE(valid_original("...---"));
    CHECK_FALSE(valid_original(std::string(81, 'a')));
    CHECK_FALSE(valid_original("param_1"));
    CHECK_FALSE(valid_original("xparam_12y"));
    CHECK_FALSE(valid_original("api_func_3"));
    CHECK_FALSE(valid_original("Platform_A"));
    CHECK_FALSE(valid_original("myPlatform_Bthing"));
    CHECK(valid_original("param_x"));
    CHECK(valid_original("api_func"));
    CHECK(valid_original("Platform_a"));
}

TEST_CASE("validate_ruleset rejects invariant violations") {
    RuleSet dup_original;
    dup_original.rules = {Rule{"x", "param_1", RuleKind::Parameter},
                          Rule{"x", "param_2", RuleKind::Parameter}};
    CHECK_THROWS_AS(validate_ruleset(dup_original), Error);

    RuleSet dup_placeholder;
    dup_placeholder.rules = {Rule{"x", "param_1", RuleKind::Parameter},
                             Rule{"y", "param_1", RuleKind::Parameter}};
    CHECK_THROWS_AS(validate_ruleset(dup_placeholder), Error);

    RuleSet wrong_scheme;
    wrong_scheme.rules = {Rule{"x", "api_func_1", RuleKind::Parameter}};
    CHECK_THROWS_AS(validate_ruleset(wrong_scheme), Error);

    RuleSet ok;
    ok.rules = {Rule{"x", "param_1", RuleKind::Parameter},
                Rule{"Flow", "Platform_A", RuleKind::Platform}};
    CHECK_NOTHROW(validate_ruleset(ok));
}

TEST_CASE("apply_rules with an empty rule set is the identity") {
    RuleSet empty;
    CHECK(apply_rules("any text at all `x()`", empty) == "any text at all `x()`");
}

TEST_CASE("apply_rules respects identifier boundaries") {
    RuleSet ruleset = make_ruleset({{"GraphX", RuleKind::Platform}});
    CHECK(apply_rules("GraphXish calls GraphX", ruleset) == "GraphXish calls Platform_A");
    CHECK(apply_rules("GraphX", ruleset) == "Platform_A");
    CHECK(apply_rules("(GraphX)", ruleset) == "(Platform_A)");
    CHECK(apply_rules("_GraphX GraphX_", ruleset) == "_GraphX GraphX_");
    CHECK(apply_rules("graphx", ruleset) == "graphx"); // case-sensitive
}

TEST_CASE("apply_rules picks the longest original at each position") {
    RuleSet ruleset = make_ruleset({
        {"vertexMap", RuleKind::Function},
        {"vertexMapReduce", RuleKind::Function},
    });
    CHECK(apply_rules("vertexMapReduce vertexMap", ruleset) == "api_func_2 api_func_1");
}

TEST_CASE("apply_rules output is independent of rule list order") {
    RuleSet forward = make_ruleset({
        {"load", RuleKind::Function},
        {"loadEdge", RuleKind::Function},
        {"edge", RuleKind::Parameter},
    });
    RuleSet reversed = forward;
    std::reverse(reversed.rules.begin(), reversed.rules.end());
    const std::string text = "load loadEdge edge loadEdgeX";
    CHECK(apply_rules(text, forward) == apply_rules(text, reversed));
}

TEST_CASE("verify_anonymized reports ascending boundary occurrences") {
    RuleSet ruleset = make_ruleset({{"GraphX", RuleKind::Platform}, {"load", RuleKind::Function}});
    auto violations = verify_anonymized("load then GraphX then load", ruleset);
    REQUIRE(violations.size() == 3);
    CHECK(violations[0] == Violation{"load", 0});
    CHECK(violations[1] == Violation{"GraphX", 10});
    CHECK(violations[2] == Violation{"load", 22});

    CHECK(verify_anonymized("GraphXish loads graphx", ruleset).empty());
    CHECK(verify_anonymized("", ruleset).empty());
}

TEST_CASE("apply then verify is always clean, and apply is idempotent") {
    std::mt19937_64 rng(20240817);
    for (int i = 0; i < 500; ++i) {
        RandomCase c = random_case(rng);
        std::string once = apply_rules(c.text, c.ruleset);
        CHECK(verify_anonymized(once, c.ruleset).empty());
        CHECK(apply_rules(once, c.ruleset) == once);
    }
}

TEST_CASE("apply_rules equals the reference oracle on random cases") {
    std::mt19937_64 rng(987654321);
    for (int i = 0; i < 500; ++i) {
        RandomCase c = random_case(rng);
        std::string got = apply_rules(c.text, c.ruleset);
        std::string want = oracle_apply(c.text, c.ruleset);
        if (got != want) {
            CAPTURE(c.text);
            REQUIRE(got == want);
        }
        // Shuffled rule order must not change the outcome.
        RuleSet shuffled = c.ruleset;
        std::shuffle(shuffled.rules.begin(), shuffled.rules.end(), rng);
        CHECK(apply_rules(c.text, shuffled) == want);
    }
}

TEST_CASE("mock-gateway rule generation matches the frozen fixture manifest") {
    ingest::RepoSnapshot snapshot =
        ingest::fetch_repo(ingest::source_from_locator((kFixtures / "repo").string()));
    llm::MockGateway gateway(7);
    ingest::DocumentSet documents =
        ingest::extract_documents(ingest::classify_files(snapshot, &gateway));

    std::vector<std::string> warnings;
    RuleSet ruleset = generate_rules(documents, gateway, GenerateOptions{}, warnings);
    CHECK(warnings.empty());
    CHECK(ruleset.generated_from ==
          sha256_hex(canonical_dump(ingest::documents_to_json(documents))));

    nlohmann::json expected = read_json_file(kFixtures / "expected_rules.json");
    REQUIRE(expected["rules"].size() == ruleset.rules.size());
    for (std::size_t i = 0; i < ruleset.rules.size(); ++i) {
        INFO("rule index: ", i);
        const nlohmann::json& want = expected["rules"][i];
        CHECK(ruleset.rules[i].original == want["original"].get<std::string>());
        CHECK(ruleset.rules[i].placeholder == want["placeholder"].get<std::string>());
        CHECK(kind_name(ruleset.rules[i].kind) == want["kind"].get<std::string>());
    }
}

TEST_CASE("invalid and duplicate suggestions are dropped with redacted warnings") {
    struct ScriptedGateway final : llm::Gateway {
        llm::ChatResponse chat(const llm::ChatRequest&) override {
            return llm::ChatResponse{
                "```json\n"
                "{\"platforms\": [\"GraphX\", \"GraphX\", \"bad name\"],\n"
                " \"functions\": [\"loadEdge\", \"GraphX\", \"param_7\"],\n"
                " \"parameters\": [\"alpha\", 42]}\n"
                "```",
                1, 1};
        }
        std::vector<llm::EmbeddingVector> embed(const std::vector<std::string>&) override {
            return {};
        }
        std::size_t embedding_dimension() const override { return 0; }
        std::string embed_model_id() const override { return "none"; }
    };

    ingest::DocumentSet documents;
    documents.readme_text = "GraphX loadEdge alpha";
    ScriptedGateway gateway;
    std::vector<std::string> warnings;
    RuleSet ruleset = generate_rules(documents, gateway, GenerateOptions{}, warnings);

    REQUIRE(ruleset.rules.size() == 3);
    CHECK(ruleset.rules[0].original == "GraphX");
    CHECK(ruleset.rules[0].placeholder == "Platform_A");
    CHECK(ruleset.rules[1].original == "loadEdge");
    CHECK(ruleset.rules[1].placeholder == "api_func_1");
    CHECK(ruleset.rules[2].original == "alpha");
    CHECK(ruleset.rules[2].placeholder == "param_1");

    // One duplicate platform, one invalid platform, one duplicate
    // function, one placeholder-shaped function, one non-string param.
    CHECK(warnings.size() == 5);
    for (const std::string& warning : warnings) {
        CHECK(warning.find("GraphX") == std::string::npos);
        CHECK(warning.find("bad name") == std::string::npos);
    }
}

TEST_CASE("an empty rule set aborts unless explicitly allowed") {
    struct EmptyGateway final : llm::Gateway {
        llm::ChatResponse chat(const llm::ChatRequest&) override {
            return llm::ChatResponse{
                "```json\n{\"platforms\":[],\"functions\":[],\"parameters\":[]}\n```", 1, 1};
        }
        std::vector<llm::EmbeddingVector> embed(const std::vector<std::string>&) override {
            return {};
        }
        std::size_t embedding_dimension() const override { return 0; }
        std::string embed_model_id() const override { return "none"; }
    };

    ingest::DocumentSet documents;
    documents.readme_text = "nothing to see";
    EmptyGateway gateway;
    std::vector<std::string> warnings;
    CHECK_THROWS_AS(generate_rules(documents, gateway, GenerateOptions{}, warnings), Error);

    GenerateOptions allow;
    allow.allow_empty = true;
    warnings.clear();
    RuleSet ruleset = generate_rules(documents, gateway, allow, warnings);
    CHECK(ruleset.rules.empty());
    REQUIRE_FALSE(warnings.empty());
}

TEST_CASE("rule set JSON round-trips sorted by placeholder") {
    RuleSet ruleset = make_ruleset({
        {"zeta", RuleKind::Parameter},
        {"Graph", RuleKind::Platform},
        {"loadIt", RuleKind::Function},
    });
    ruleset.generated_from = std::string(64, 'a');
    nlohmann::json encoded = ruleset_to_json(ruleset);
    REQUIRE(encoded["rules"].size() == 3);
    CHECK(encoded["rules"][0]["placeholder"] == "Platform_A");
    CHECK(encoded["rules"][1]["placeholder"] == "api_func_1");
    CHECK(encoded["rules"][2]["placeholder"] == "param_1");

    RuleSet decoded = ruleset_from_json(encoded);
    CHECK(decoded.generated_from == ruleset.generated_from);
    REQUIRE(decoded.rules.size() == 3);

    encoded["rules"][0]["placeholder"] = "param_1";
    CHECK_THROWS_AS(ruleset_from_json(encoded), Error);
}
