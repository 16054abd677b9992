#pragma once

// Aggregation of per-task, per-level scorecards into the usability
// report, with canonical JSON plus static Markdown and HTML renderings.

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "uagent/anonymization.hpp"
#include "uagent/evaluator.hpp"
#include "uagent/prompts.hpp"

namespace uagent::report {

// ===== Types =====

inline constexpr int kSchemaVersion = 1;

struct ReportCell {
    std::optional<eval::ScoreCard> scorecard;
    std::string unscored_reason; // non-empty exactly when scorecard is absent
};

// task_id -> level -> cell; every task carries all four levels.
using TaskResults = std::map<std::string, std::map<sim::ExperienceLevel, ReportCell>>;

struct UsabilityReport {
    int schema_version = kSchemaVersion;
    std::string run_id;
    std::string config_digest;
    std::string platform_original;    // de-anonymized, the one field allowed to carry it
    std::string platform_placeholder;
    TaskResults per_task;
    std::map<sim::ExperienceLevel, std::map<eval::Metric, double>> level_aggregates;
    double overall_usability = 0.0;
    std::vector<std::string> warnings;
};

// ===== Operations =====

// Computes aggregates over scored cells only; requires at least one.
// The platform pair comes from the rule set's first platform rule; the
// rule set is also applied to warnings, reasons, and justifications so
// no original can enter the report outside platform_original.
UsabilityReport aggregate(const TaskResults& results,
                          const anon::RuleSet& ruleset,
                          const std::string& run_id,
                          const std::string& config_digest,
                          const std::vector<std::string>& warnings);

// Canonical JSON bytes: sorted keys, no insignificant whitespace,
// shortest round-trip reals, trailing LF.
std::string emit_json(const UsabilityReport& report);

std::string emit_markdown(const UsabilityReport& report);
std::string emit_html(const UsabilityReport& report); // single self-contained file

nlohmann::json report_to_json(const UsabilityReport& report);
UsabilityReport report_from_json(const nlohmann::json& encoded); // rejects unknown versions

} // namespace uagent::report
