#include "uagent/evaluator.hpp"

#include <cmath>

#include "uagent/errors.hpp"
#include "uagent/textutil.hpp"

namespace uagent::eval {

// ===== Metrics =====

const std::array<Metric, 3>& all_metrics() {
    static const std::array<Metric, 3> metrics = {Metric::Compliance, Metric::Correctness,
                                                  Metric::Readability};
    return metrics;
}

std::string metric_name(Metric metric) {
    switch (metric) {
    case Metric::Compliance: return "compliance";
    case Metric::Correctness: return "correctness";
    case Metric::Readability: return "readability";
    }
    throw Error("unknown metric");
}

std::optional<Metric> metric_from_name(const std::string& name) {
    for (Metric metric : all_metrics()) {
        if (metric_name(metric) == name) {
            return metric;
        }
    }
    return std::nullopt;
}

// ===== Score cards =====

ScoreCard make_scorecard(const std::map<Metric, int>& scores,
                         const std::map<Metric, std::string>& justifications) {
    ScoreCard card;
    int total = 0;
    for (Metric metric : all_metrics()) {
        auto score_it = scores.find(metric);
        if (score_it == scores.end()) {
            throw Error("scorecard is missing the " + metric_name(metric) + " score");
        }
        if (score_it->second < 0 || score_it->second > 100) {
            throw Error("scorecard " + metric_name(metric) + " score is out of range: " +
                        std::to_string(score_it->second));
        }
        auto just_it = justifications.find(metric);
        if (just_it == justifications.end() || just_it->second.empty()) {
            throw Error("scorecard is missing a justification for " + metric_name(metric));
        }
        total += score_it->second;
    }
    card.scores = scores;
    card.justifications = justifications;
    card.overall = total / 3.0;
    return card;
}

namespace {

nlohmann::json flat_card_json(const ScoreCard& card) {
    nlohmann::json flat = nlohmann::json::object();
    for (Metric metric : all_metrics()) {
        flat[metric_name(metric)] = card.scores.at(metric);
        flat[metric_name(metric) + "_justification"] = card.justifications.at(metric);
    }
    return flat;
}

ScoreCard card_from_flat_json(const nlohmann::json& flat, const char* what) {
    if (!flat.is_object()) {
        throw ParseError(std::string(what) + " is not a JSON object");
    }
    std::map<Metric, int> scores;
    std::map<Metric, std::string> justifications;
    for (Metric metric : all_metrics()) {
        const std::string key = metric_name(metric);
        if (!flat.contains(key)) {
            throw ParseError(std::string(what) + " is missing key '" + key + "'");
        }
        if (!flat.at(key).is_number_integer()) {
            throw ParseError(std::string(what) + " value for '" + key + "' is not an integer");
        }
        const auto value = flat.at(key).get<long long>();
        if (value < 0 || value > 100) {
            throw ParseError(std::string(what) + " value for '" + key +
                             "' is out of range: " + std::to_string(value));
        }
        scores[metric] = static_cast<int>(value);

        const std::string just_key = key + "_justification";
        if (!flat.contains(just_key) || !flat.at(just_key).is_string()) {
            throw ParseError(std::string(what) + " is missing key '" + just_key + "'");
        }
        justifications[metric] = flat.at(just_key).get<std::string>();
        if (justifications[metric].empty()) {
            throw ParseError(std::string(what) + " has an empty '" + just_key + "'");
        }
    }
    return make_scorecard(scores, justifications);
}

} // namespace

std::string render_scorecard(const ScoreCard& card) {
    std::string dumped = flat_card_json(card).dump();
    // Backticks only ever occur inside string literals here; escaping
    // them keeps the fence intact for any justification content.
    std::string escaped;
    escaped.reserve(dumped.size());
    for (char c : dumped) {
        if (c == '`') {
            escaped += "\\u0060";
        } else {
            escaped += c;
        }
    }
    return "```json\n" + escaped + "\n```";
}

ScoreCard parse_scorecard(const std::string& response_text) {
    std::optional<FencedBlock> block = first_fenced_block(response_text);
    if (!block.has_value()) {
        throw ParseError("evaluation reply carried no fenced scorecard block");
    }
    nlohmann::json flat;
    try {
        flat = nlohmann::json::parse(block->body);
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("scorecard block is not valid JSON: ") + e.what());
    }
    return card_from_flat_json(flat, "scorecard");
}

nlohmann::json scorecard_to_json(const ScoreCard& card) {
    nlohmann::json encoded = flat_card_json(card);
    encoded["overall"] = card.overall;
    return encoded;
}

ScoreCard scorecard_from_json(const nlohmann::json& encoded) {
    ScoreCard card = card_from_flat_json(encoded, "scorecard record");
    if (encoded.contains("overall")) {
        double declared = encoded.at("overall").get<double>();
        if (std::abs(declared - card.overall) > 1e-9) {
            throw ParseError("scorecard record declares an overall that is not the mean");
        }
    }
    return card;
}

// ===== Instructions =====

EvaluatorInstructions default_instructions() {
    EvaluatorInstructions instructions;
    instructions.version = 0;
    instructions.rubric_text =
        "Score the candidate implementation against the reference implementation on three "
        "metrics, each as an integer from 0 to 100.\n"
        "\n"
        "compliance: adherence to the platform's coding standards and idioms as evidenced by "
        "the reference implementation and the provided API material. Heavily penalize any call "
        "to a function that appears in neither the provided API material nor the reference: "
        "invented functions cap this score at 20.\n"
        "correctness: whether the candidate performs the intended task accurately, judged by "
        "comparison with the reference implementation rather than by execution.\n"
        "readability: clarity and maintainability of the candidate code, including naming, "
        "structure, and comments.\n"
        "\n"
        "Basic requirements: judge only the code shown, do not reward length, and accept "
        "behaviorally equivalent implementations that differ in style.\n"
        "\n"
        "Reply with exactly one fenced json block containing integer keys compliance, "
        "correctness, readability and non-empty string keys compliance_justification, "
        "correctness_justification, readability_justification.";
    return instructions;
}

void validate_instructions(const EvaluatorInstructions& instructions) {
    for (Metric metric : all_metrics()) {
        if (instructions.rubric_text.find(metric_name(metric)) == std::string::npos) {
            throw ConfigError("rubric text does not define the " + metric_name(metric) +
                              " metric");
        }
    }
    if (instructions.rubric_text.find("json") == std::string::npos) {
        throw ConfigError("rubric text does not state the output-format contract");
    }
}

// ===== Evaluation =====

namespace {

llm::ChatRequest build_judge_request(const std::string& candidate_code,
                                     const std::string& candidate_language,
                                     const std::string& reference_code,
                                     const EvaluatorInstructions& instructions,
                                     const EvalOptions& options) {
    llm::ChatRequest request;
    request.model_id = options.model_id;
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    request.system_text =
        std::string(llm::markers::kEvaluateCode) + "\n\n" + instructions.rubric_text;
    std::string label = "=== Candidate Implementation";
    if (!candidate_language.empty()) {
        label += " (" + candidate_language + ")";
    }
    label += " ===";
    request.user_text = label + "\n" + candidate_code + "\n\n=== Reference Implementation ===\n" +
                        reference_code;
    return request;
}

} // namespace

ScoreCard evaluate_code(const std::string& candidate_code,
                        const std::string& candidate_language,
                        const std::string& reference_code,
                        const EvaluatorInstructions& instructions,
                        llm::Gateway& gateway,
                        const EvalOptions& options) {
    validate_instructions(instructions);
    llm::ChatRequest request = build_judge_request(candidate_code, candidate_language,
                                                   reference_code, instructions, options);
    try {
        return parse_scorecard(gateway.chat(request).text);
    } catch (const ParseError&) {
        // One re-ask with a stricter reminder; a second failure propagates.
        request.user_text +=
            "\n\nYour previous reply could not be parsed. Reply again with exactly one fenced "
            "json block containing integer keys compliance, correctness, readability and "
            "non-empty string keys compliance_justification, correctness_justification, "
            "readability_justification, and nothing else.";
        return parse_scorecard(gateway.chat(request).text);
    }
}

ScoreCard evaluate(const gen::GeneratedArtifact& artifact,
                   const std::string& reference_code,
                   const EvaluatorInstructions& instructions,
                   llm::Gateway& gateway,
                   const EvalOptions& options) {
    return evaluate_code(artifact.code, artifact.language_tag, reference_code, instructions,
                         gateway, options);
}

// ===== Calibration =====

void validate_example(const CalibrationExample& example) {
    if (example.candidate_code.empty()) {
        throw ConfigError("calibration example has empty candidate code");
    }
    if (example.reference_code.empty()) {
        throw ConfigError("calibration example has empty reference code");
    }
    for (const auto& [metric, band] : example.expected_bands) {
        if (band.first < 0 || band.second > 100 || band.first > band.second) {
            throw ConfigError("calibration example has an invalid " + metric_name(metric) +
                              " band [" + std::to_string(band.first) + ", " +
                              std::to_string(band.second) + "]");
        }
    }
}

nlohmann::json example_to_json(const CalibrationExample& example) {
    nlohmann::json bands = nlohmann::json::object();
    for (const auto& [metric, band] : example.expected_bands) {
        bands[metric_name(metric)] = nlohmann::json::array({band.first, band.second});
    }
    return nlohmann::json{
        {"candidate_code", example.candidate_code},
        {"reference_code", example.reference_code},
        {"feedback", example.feedback},
        {"expected_bands", std::move(bands)},
    };
}

CalibrationExample example_from_json(const nlohmann::json& encoded) {
    CalibrationExample example;
    try {
        example.candidate_code = encoded.at("candidate_code").get<std::string>();
        example.reference_code = encoded.at("reference_code").get<std::string>();
        example.feedback = encoded.value("feedback", std::string());
        if (encoded.contains("expected_bands")) {
            for (const auto& [key, value] : encoded.at("expected_bands").items()) {
                std::optional<Metric> metric = metric_from_name(key);
                if (!metric.has_value()) {
                    throw ParseError("calibration example names an unknown metric '" + key + "'");
                }
                if (!value.is_array() || value.size() != 2) {
                    throw ParseError("calibration example band for '" + key +
                                     "' is not a [lo, hi] pair");
                }
                example.expected_bands[*metric] = {value.at(0).get<int>(),
                                                   value.at(1).get<int>()};
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed calibration example: ") + e.what());
    }
    validate_example(example);
    return example;
}

bool scores_stable(const std::vector<ScoreCard>& previous,
                   const std::vector<ScoreCard>& current,
                   int max_delta) {
    if (previous.size() != current.size()) {
        return false;
    }
    for (std::size_t i = 0; i < current.size(); ++i) {
        for (Metric metric : all_metrics()) {
            if (std::abs(current[i].scores.at(metric) - previous[i].scores.at(metric)) >
                max_delta) {
                return false;
            }
        }
    }
    return true;
}

bool bands_satisfied(const std::vector<ScoreCard>& cards,
                     const std::vector<CalibrationExample>& examples) {
    if (cards.size() != examples.size()) {
        return false;
    }
    for (std::size_t i = 0; i < examples.size(); ++i) {
        for (const auto& [metric, band] : examples[i].expected_bands) {
            int score = cards[i].scores.at(metric);
            if (score < band.first || score > band.second) {
                return false;
            }
        }
    }
    return true;
}

bool any_bands(const std::vector<CalibrationExample>& examples) {
    for (const CalibrationExample& example : examples) {
        if (!example.expected_bands.empty()) {
            return true;
        }
    }
    return false;
}

namespace {

int max_score_delta(const std::vector<ScoreCard>& previous,
                    const std::vector<ScoreCard>& current) {
    int worst = 0;
    for (std::size_t i = 0; i < current.size(); ++i) {
        for (Metric metric : all_metrics()) {
            worst = std::max(worst, std::abs(current[i].scores.at(metric) -
                                             previous[i].scores.at(metric)));
        }
    }
    return worst;
}

// One revision call; returns the revised text, or nullopt when the
// reply carried no usable rubric.
std::optional<std::string> request_revision(const EvaluatorInstructions& instructions,
                                            const std::vector<CalibrationExample>& examples,
                                            const std::vector<ScoreCard>& cards,
                                            llm::Gateway& gateway,
                                            const EvalOptions& options) {
    llm::ChatRequest request;
    request.model_id = options.model_id;
    request.temperature = options.temperature;
    request.max_tokens = options.max_tokens;
    request.system_text =
        std::string(llm::markers::kReviseRubric) +
        "\nRevise the scoring rubric found between the BEGIN RUBRIC and END RUBRIC lines so "
        "that repeated evaluations become stable and match the expected score bands. Keep all "
        "three metric definitions and the output-format contract. Reply with the complete "
        "revised rubric in one fenced block.";
    std::string user = std::string(llm::markers::kRubricBegin) + "\n" + instructions.rubric_text +
                       "\n" + llm::markers::kRubricEnd + "\n\nCalibration feedback:\n";
    for (std::size_t i = 0; i < examples.size(); ++i) {
        user += "- example " + std::to_string(i + 1) + " scored";
        for (Metric metric : all_metrics()) {
            user += " " + metric_name(metric) + " " +
                    std::to_string(cards[i].scores.at(metric));
        }
        if (!examples[i].feedback.empty()) {
            user += ": " + examples[i].feedback;
        }
        user += "\n";
        for (const auto& [metric, band] : examples[i].expected_bands) {
            int score = cards[i].scores.at(metric);
            if (score < band.first || score > band.second) {
                user += "- example " + std::to_string(i + 1) + " missed the expected " +
                        metric_name(metric) + " band [" + std::to_string(band.first) + ", " +
                        std::to_string(band.second) + "] with " + std::to_string(score) + "\n";
            }
        }
    }
    request.user_text = user;

    std::optional<FencedBlock> block = first_fenced_block(gateway.chat(request).text);
    if (!block.has_value() || trim(block->body).empty()) {
        return std::nullopt;
    }
    return block->body;
}

} // namespace

CalibrationResult calibrate(const EvaluatorInstructions& instructions,
                            const std::vector<CalibrationExample>& examples,
                            llm::Gateway& gateway,
                            std::vector<std::string>& warnings,
                            const EvalOptions& options) {
    if (examples.empty()) {
        throw ConfigError("calibration requires at least one example");
    }
    for (const CalibrationExample& example : examples) {
        validate_example(example);
    }
    validate_instructions(instructions);

    constexpr int kMaxIterations = 5;
    CalibrationResult result;
    result.instructions = instructions;
    result.transcript = nlohmann::json::array();

    std::vector<ScoreCard> previous;
    for (int iteration = 1; iteration <= kMaxIterations; ++iteration) {
        std::vector<ScoreCard> cards;
        try {
            for (const CalibrationExample& example : examples) {
                cards.push_back(evaluate_code(example.candidate_code, "", example.reference_code,
                                              result.instructions, gateway, options));
            }
        } catch (const Error& e) {
            warnings.push_back("calibration aborted at iteration " + std::to_string(iteration) +
                               ": " + e.what() + "; keeping rubric version " +
                               std::to_string(result.instructions.version));
            return result;
        }

        const bool bands_ok = bands_satisfied(cards, examples);
        bool stable = false;
        nlohmann::json delta_entry; // null on the first iteration
        if (iteration == 1) {
            // Band-only convergence: deltas are vacuous without a
            // previous table, so declared bands must carry the decision.
            stable = any_bands(examples) && bands_ok;
        } else {
            int delta = max_score_delta(previous, cards);
            delta_entry = delta;
            stable = delta <= 5 && bands_ok;
        }
        const bool will_revise = !stable && iteration < kMaxIterations;

        nlohmann::json scores = nlohmann::json::array();
        for (const ScoreCard& card : cards) {
            nlohmann::json row = nlohmann::json::object();
            for (Metric metric : all_metrics()) {
                row[metric_name(metric)] = card.scores.at(metric);
            }
            scores.push_back(std::move(row));
        }
        result.transcript.push_back(nlohmann::json{
            {"iteration", iteration},
            {"rubric_version", result.instructions.version},
            {"scores", std::move(scores)},
            {"bands_satisfied", bands_ok},
            {"max_delta", delta_entry},
            {"stable", stable},
            {"revised", will_revise},
        });

        if (stable) {
            result.converged = true;
            return result;
        }
        if (will_revise) {
            std::optional<std::string> revised;
            try {
                revised = request_revision(result.instructions, examples, cards, gateway, options);
            } catch (const Error& e) {
                warnings.push_back("calibration aborted at iteration " +
                                   std::to_string(iteration) + ": " + e.what() +
                                   "; keeping rubric version " +
                                   std::to_string(result.instructions.version));
                return result;
            }
            bool usable = revised.has_value();
            if (usable) {
                EvaluatorInstructions candidate{*revised, result.instructions.version + 1};
                try {
                    validate_instructions(candidate);
                } catch (const ConfigError&) {
                    usable = false;
                }
                if (usable) {
                    result.instructions = candidate;
                }
            }
            if (!usable) {
                // Record the unusable revision and keep the rubric; the
                // next iteration re-checks stability with it unchanged.
                result.transcript.back()["revised"] = false;
                warnings.push_back("calibration iteration " + std::to_string(iteration) +
                                   ": revision reply was not a usable rubric; keeping version " +
                                   std::to_string(result.instructions.version));
            }
        }
        previous = std::move(cards);
    }

    warnings.push_back("calibration did not converge within 5 iterations; keeping rubric "
                       "version " +
                       std::to_string(result.instructions.version));
    return result;
}

} // namespace uagent::eval
