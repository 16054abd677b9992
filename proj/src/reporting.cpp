#include "uagent/reporting.hpp"

#include <cstdio>

#include "uagent/errors.hpp"
#include "uagent/jsonio.hpp"

namespace uagent::report {

// ===== Aggregation =====

namespace {

std::string fmt2(double value) {
    char buffer[64];
    std::snprintf(buffer, sizeof(buffer), "%.2f", value);
    return buffer;
}

void validate_cell(const std::string& task_id, const ReportCell& cell) {
    if (cell.scorecard.has_value() == cell.unscored_reason.empty()) {
        return; // exactly one of scorecard / reason is set
    }
    throw Error("task '" + task_id +
                "' has a cell with neither a scorecard nor an unscored reason");
}

} // namespace

UsabilityReport aggregate(const TaskResults& results,
                          const anon::RuleSet& ruleset,
                          const std::string& run_id,
                          const std::string& config_digest,
                          const std::vector<std::string>& warnings) {
    if (results.empty()) {
        throw Error("report aggregation received no task results");
    }

    UsabilityReport report;
    report.run_id = run_id;
    report.config_digest = config_digest;
    for (const anon::Rule& rule : ruleset.rules) {
        if (rule.kind == anon::RuleKind::Platform) {
            report.platform_original = rule.original;
            report.platform_placeholder = rule.placeholder;
            break;
        }
    }

    // Everything presentation-bound passes through the rule set again;
    // only platform_original may carry a de-anonymized name.
    for (const std::string& warning : warnings) {
        report.warnings.push_back(anon::apply_rules(warning, ruleset));
    }

    long long level_sum[5][3] = {}; // [level][metric], integer sums keep the means exact
    long long level_count[5] = {};  // scored cells per level
    long long total_sum = 0;
    long long total_values = 0;

    for (const auto& [task_id, levels] : results) {
        std::map<sim::ExperienceLevel, ReportCell> cleaned;
        for (sim::ExperienceLevel level : sim::all_levels()) {
            auto it = levels.find(level);
            if (it == levels.end()) {
                throw Error("task '" + task_id + "' is missing the " + sim::level_name(level) +
                            " level cell");
            }
            validate_cell(task_id, it->second);
            ReportCell cell = it->second;
            if (cell.scorecard.has_value()) {
                for (auto& [metric, text] : cell.scorecard->justifications) {
                    text = anon::apply_rules(text, ruleset);
                }
                const int level_index = static_cast<int>(level);
                int metric_index = 0;
                for (eval::Metric metric : eval::all_metrics()) {
                    const int score = cell.scorecard->scores.at(metric);
                    level_sum[level_index][metric_index] += score;
                    total_sum += score;
                    ++total_values;
                    ++metric_index;
                }
                ++level_count[level_index];
            } else {
                cell.unscored_reason = anon::apply_rules(cell.unscored_reason, ruleset);
            }
            cleaned.emplace(level, std::move(cell));
        }
        report.per_task.emplace(task_id, std::move(cleaned));
    }

    if (total_values == 0) {
        throw Error("report aggregation requires at least one scored cell");
    }
    report.overall_usability = static_cast<double>(total_sum) / static_cast<double>(total_values);

    for (sim::ExperienceLevel level : sim::all_levels()) {
        const int level_index = static_cast<int>(level);
        if (level_count[level_index] == 0) {
            continue; // a level with no scored cells has no aggregate
        }
        std::map<eval::Metric, double> per_metric;
        int metric_index = 0;
        for (eval::Metric metric : eval::all_metrics()) {
            per_metric[metric] = static_cast<double>(level_sum[level_index][metric_index]) /
                                 static_cast<double>(level_count[level_index]);
            ++metric_index;
        }
        report.level_aggregates.emplace(level, std::move(per_metric));
    }
    return report;
}

// ===== JSON =====

nlohmann::json report_to_json(const UsabilityReport& report) {
    nlohmann::json per_task = nlohmann::json::object();
    for (const auto& [task_id, levels] : report.per_task) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& [level, cell] : levels) {
            if (cell.scorecard.has_value()) {
                row[sim::level_name(level)] =
                    nlohmann::json{{"scorecard", eval::scorecard_to_json(*cell.scorecard)}};
            } else {
                row[sim::level_name(level)] =
                    nlohmann::json{{"unscored_reason", cell.unscored_reason}};
            }
        }
        per_task[task_id] = std::move(row);
    }

    nlohmann::json aggregates = nlohmann::json::object();
    for (const auto& [level, per_metric] : report.level_aggregates) {
        nlohmann::json row = nlohmann::json::object();
        for (const auto& [metric, mean] : per_metric) {
            row[eval::metric_name(metric)] = mean;
        }
        aggregates[sim::level_name(level)] = std::move(row);
    }

    return nlohmann::json{
        {"schema_version", report.schema_version},
        {"run_id", report.run_id},
        {"config_digest", report.config_digest},
        {"platform",
         {{"original", report.platform_original}, {"placeholder", report.platform_placeholder}}},
        {"per_task", std::move(per_task)},
        {"level_aggregates", std::move(aggregates)},
        {"overall_usability", report.overall_usability},
        {"warnings", report.warnings},
    };
}

UsabilityReport report_from_json(const nlohmann::json& encoded) {
    UsabilityReport report;
    try {
        report.schema_version = encoded.at("schema_version").get<int>();
        if (report.schema_version != kSchemaVersion) {
            throw ParseError("unsupported report schema version " +
                             std::to_string(report.schema_version));
        }
        report.run_id = encoded.at("run_id").get<std::string>();
        report.config_digest = encoded.at("config_digest").get<std::string>();
        report.platform_original = encoded.at("platform").at("original").get<std::string>();
        report.platform_placeholder = encoded.at("platform").at("placeholder").get<std::string>();
        for (const auto& [task_id, levels] : encoded.at("per_task").items()) {
            std::map<sim::ExperienceLevel, ReportCell> row;
            for (const auto& [level_name, cell_json] : levels.items()) {
                std::optional<sim::ExperienceLevel> level = sim::level_from_name(level_name);
                if (!level.has_value()) {
                    throw ParseError("report names an unknown level '" + level_name + "'");
                }
                ReportCell cell;
                if (cell_json.contains("scorecard")) {
                    cell.scorecard = eval::scorecard_from_json(cell_json.at("scorecard"));
                } else {
                    cell.unscored_reason = cell_json.at("unscored_reason").get<std::string>();
                    if (cell.unscored_reason.empty()) {
                        throw ParseError("report has an empty unscored reason");
                    }
                }
                row.emplace(*level, std::move(cell));
            }
            report.per_task.emplace(task_id, std::move(row));
        }
        for (const auto& [level_name, row] : encoded.at("level_aggregates").items()) {
            std::optional<sim::ExperienceLevel> level = sim::level_from_name(level_name);
            if (!level.has_value()) {
                throw ParseError("report aggregates name an unknown level '" + level_name + "'");
            }
            std::map<eval::Metric, double> per_metric;
            for (const auto& [metric_name, mean] : row.items()) {
                std::optional<eval::Metric> metric = eval::metric_from_name(metric_name);
                if (!metric.has_value()) {
                    throw ParseError("report aggregates name an unknown metric '" + metric_name +
                                     "'");
                }
                per_metric[*metric] = mean.get<double>();
            }
            report.level_aggregates.emplace(*level, std::move(per_metric));
        }
        report.overall_usability = encoded.at("overall_usability").get<double>();
        report.warnings = encoded.at("warnings").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("malformed report: ") + e.what());
    }
    return report;
}

std::string emit_json(const UsabilityReport& report) {
    return canonical_dump(report_to_json(report)) + "\n";
}

// ===== Human-readable renderings =====

namespace {

const char kDash[] = "n/a"; // unscored cell marker

std::string level_metric_cell(const ReportCell& cell, eval::Metric metric) {
    if (!cell.scorecard.has_value()) {
        return kDash;
    }
    return std::to_string(cell.scorecard->scores.at(metric));
}

std::string html_escape(const std::string& text) {
    std::string escaped;
    escaped.reserve(text.size());
    for (char c : text) {
        switch (c) {
        case '&': escaped += "&amp;"; break;
        case '<': escaped += "&lt;"; break;
        case '>': escaped += "&gt;"; break;
        case '"': escaped += "&quot;"; break;
        default: escaped += c;
        }
    }
    return escaped;
}

} // namespace

std::string emit_markdown(const UsabilityReport& report) {
    std::string out = "# Usability Report\n\n";
    out += "- Run: `" + report.run_id + "`\n";
    out += "- Configuration digest: `" + report.config_digest + "`\n";
    if (!report.platform_original.empty()) {
        out += "- Platform: " + report.platform_original + " (anonymized as `" +
               report.platform_placeholder + "`)\n";
    }
    out += "- Overall usability: " + fmt2(report.overall_usability) + "\n";

    for (const auto& [task_id, levels] : report.per_task) {
        out += "\n## Task: " + task_id + "\n\n";
        out += "| Level | Compliance | Correctness | Readability | Overall |\n";
        out += "| --- | --- | --- | --- | --- |\n";
        std::vector<std::string> footnotes;
        for (const auto& [level, cell] : levels) {
            out += "| " + sim::level_label(level);
            for (eval::Metric metric : eval::all_metrics()) {
                out += " | " + level_metric_cell(cell, metric);
            }
            out += " | ";
            out += cell.scorecard.has_value() ? fmt2(cell.scorecard->overall) : kDash;
            out += " |\n";
            if (!cell.scorecard.has_value()) {
                footnotes.push_back(sim::level_label(level) + ": " + cell.unscored_reason);
            }
        }
        if (!footnotes.empty()) {
            out += "\nUnscored levels:\n\n";
            for (const std::string& note : footnotes) {
                out += "- " + note + "\n";
            }
        }
    }

    out += "\n## Level aggregates\n\n";
    out += "| Level | Compliance | Correctness | Readability |\n";
    out += "| --- | --- | --- | --- |\n";
    for (sim::ExperienceLevel level : sim::all_levels()) {
        out += "| " + sim::level_label(level);
        auto it = report.level_aggregates.find(level);
        for (eval::Metric metric : eval::all_metrics()) {
            out += " | ";
            out += it != report.level_aggregates.end() ? fmt2(it->second.at(metric)) : kDash;
        }
        out += " |\n";
    }

    out += "\n## Warnings\n\n";
    if (report.warnings.empty()) {
        out += "No warnings.\n";
    } else {
        for (const std::string& warning : report.warnings) {
            out += "- " + warning + "\n";
        }
    }
    return out;
}

std::string emit_html(const UsabilityReport& report) {
    std::string out =
        "<!doctype html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n"
        "<title>Usability Report</title>\n<style>\n"
        "body { font-family: sans-serif; margin: 2rem auto; max-width: 60rem; color: #222; }\n"
        "table { border-collapse: collapse; margin: 1rem 0; }\n"
        "th, td { border: 1px solid #bbb; padding: 0.35rem 0.8rem; text-align: right; }\n"
        "th:first-child, td:first-child { text-align: left; }\n"
        "caption { text-align: left; font-weight: bold; padding: 0.3rem 0; }\n"
        ".meta { color: #555; }\n"
        ".footnote { font-size: 0.9rem; color: #555; }\n"
        "</style>\n</head>\n<body>\n<h1>Usability Report</h1>\n";
    out += "<p class=\"meta\">Run <code>" + html_escape(report.run_id) +
           "</code> &middot; configuration digest <code>" + html_escape(report.config_digest) +
           "</code></p>\n";
    if (!report.platform_original.empty()) {
        out += "<p>Platform: " + html_escape(report.platform_original) + " (anonymized as <code>" +
               html_escape(report.platform_placeholder) + "</code>)</p>\n";
    }
    out += "<p>Overall usability: <strong>" + fmt2(report.overall_usability) + "</strong></p>\n";

    for (const auto& [task_id, levels] : report.per_task) {
        out += "<table>\n<caption>Task: " + html_escape(task_id) + "</caption>\n";
        out += "<tr><th>Level</th><th>Compliance</th><th>Correctness</th><th>Readability</th>"
               "<th>Overall</th></tr>\n";
        std::vector<std::string> footnotes;
        for (const auto& [level, cell] : levels) {
            out += "<tr><td>" + sim::level_label(level) + "</td>";
            for (eval::Metric metric : eval::all_metrics()) {
                out += "<td>" + level_metric_cell(cell, metric) + "</td>";
            }
            out += "<td>";
            out += cell.scorecard.has_value() ? fmt2(cell.scorecard->overall) : kDash;
            out += "</td></tr>\n";
            if (!cell.scorecard.has_value()) {
                footnotes.push_back(sim::level_label(level) + ": " +
                                    html_escape(cell.unscored_reason));
            }
        }
        out += "</table>\n";
        for (const std::string& note : footnotes) {
            out += "<p class=\"footnote\">Unscored " + note + "</p>\n";
        }
    }

    out += "<table>\n<caption>Level aggregates</caption>\n"
           "<tr><th>Level</th><th>Compliance</th><th>Correctness</th><th>Readability</th></tr>\n";
    for (sim::ExperienceLevel level : sim::all_levels()) {
        out += "<tr><td>" + sim::level_label(level) + "</td>";
        auto it = report.level_aggregates.find(level);
        for (eval::Metric metric : eval::all_metrics()) {
            out += "<td>";
            out += it != report.level_aggregates.end() ? fmt2(it->second.at(metric)) : kDash;
            out += "</td>";
        }
        out += "</tr>\n";
    }
    out += "</table>\n<h2>Warnings</h2>\n";
    if (report.warnings.empty()) {
        out += "<p>No warnings.</p>\n";
    } else {
        out += "<ul>\n";
        for (const std::string& warning : report.warnings) {
            out += "<li>" + html_escape(warning) + "</li>\n";
        }
        out += "</ul>\n";
    }
    out += "</body>\n</html>\n";
    return out;
}

} // namespace uagent::report
