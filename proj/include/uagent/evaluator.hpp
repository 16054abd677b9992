#pragma once

// Structured judging of generated code against the anonymized
// reference on three metrics, plus the iterative rubric-calibration
// loop with its pure stability predicate.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "uagent/codegen.hpp"
#include "uagent/gateway.hpp"

namespace uagent::eval {

// ===== Metrics and score cards =====

enum class Metric { Compliance, Correctness, Readability };

const std::array<Metric, 3>& all_metrics();
std::string metric_name(Metric metric); // "compliance" ..
std::optional<Metric> metric_from_name(const std::string& name);

struct ScoreCard {
    std::map<Metric, int> scores;                 // all three, each in [0,100]
    std::map<Metric, std::string> justifications; // all three, non-empty
    double overall = 0.0;                         // unweighted mean of the scores

    bool operator==(const ScoreCard&) const = default;
};

// Validates completeness and ranges and computes the mean.
ScoreCard make_scorecard(const std::map<Metric, int>& scores,
                         const std::map<Metric, std::string>& justifications);

// Fenced json block with integer metric keys and *_justification string
// keys. parse_scorecard(render_scorecard(card)) == card for every valid
// card; backticks inside justifications are emitted as ` escapes
// so the fence cannot be broken from inside.
std::string render_scorecard(const ScoreCard& card);
ScoreCard parse_scorecard(const std::string& response_text); // throws ParseError, names the fault

nlohmann::json scorecard_to_json(const ScoreCard& card);
ScoreCard scorecard_from_json(const nlohmann::json& encoded);

// ===== Instructions =====

struct EvaluatorInstructions {
    std::string rubric_text; // metric definitions + output-format contract
    std::size_t version = 0;
};

EvaluatorInstructions default_instructions();
void validate_instructions(const EvaluatorInstructions& instructions); // throws ConfigError

// ===== Evaluation =====

struct EvalOptions {
    std::string model_id = "mock-chat";
    double temperature = 0.0;
    int max_tokens = 1024;
};

// Core judge call on raw code strings; one automatic re-ask with a
// stricter format reminder on parse failure, then the ParseError
// propagates.
ScoreCard evaluate_code(const std::string& candidate_code,
                        const std::string& candidate_language,
                        const std::string& reference_code,
                        const EvaluatorInstructions& instructions,
                        llm::Gateway& gateway,
                        const EvalOptions& options = {});

ScoreCard evaluate(const gen::GeneratedArtifact& artifact,
                   const std::string& reference_code,
                   const EvaluatorInstructions& instructions,
                   llm::Gateway& gateway,
                   const EvalOptions& options = {});

// ===== Calibration =====

struct CalibrationExample {
    std::string candidate_code;
    std::string reference_code;
    std::string feedback;
    std::map<Metric, std::pair<int, int>> expected_bands; // optional, per metric
};

void validate_example(const CalibrationExample& example); // throws ConfigError
nlohmann::json example_to_json(const CalibrationExample& example);
CalibrationExample example_from_json(const nlohmann::json& encoded);

// Pure stability predicate halves: both are functions of score tables
// only, no gateway involved.
bool scores_stable(const std::vector<ScoreCard>& previous,
                   const std::vector<ScoreCard>& current,
                   int max_delta = 5);
bool bands_satisfied(const std::vector<ScoreCard>& cards,
                     const std::vector<CalibrationExample>& examples);
// True when at least one example declares a band.
bool any_bands(const std::vector<CalibrationExample>& examples);

struct CalibrationResult {
    EvaluatorInstructions instructions;
    bool converged = false;
    nlohmann::json transcript; // one entry per iteration, for audit
};

// Evaluate-revise loop: at most 5 evaluation iterations; a revision
// call is issued only when another iteration follows. Iteration 1
// terminates immediately when declared bands all hold. Failures
// mid-loop keep the last complete version and add a warning.
CalibrationResult calibrate(const EvaluatorInstructions& instructions,
                            const std::vector<CalibrationExample>& examples,
                            llm::Gateway& gateway,
                            std::vector<std::string>& warnings,
                            const EvalOptions& options = {});

} // namespace uagent::eval
