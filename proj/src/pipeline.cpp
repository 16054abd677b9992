#include "uagent/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <functional>
#include <map>
#include <set>

#include "uagent/anonymization.hpp"
#include "uagent/codegen.hpp"
#include "uagent/digest.hpp"
#include "uagent/errors.hpp"
#include "uagent/ingestion.hpp"
#include "uagent/jsonio.hpp"
#include "uagent/knowledge.hpp"
#include "uagent/reporting.hpp"

namespace uagent::pipe {

namespace fs = std::filesystem;

// ===== Configuration =====

namespace {

const std::set<std::string> kModes = {"live", "mock", "record", "replay"};

std::uint64_t to_u64(const nlohmann::json& value, const std::string& key) {
    if (!value.is_number_unsigned() && !value.is_number_integer()) {
        throw ConfigError("config key '" + key + "' must be a non-negative integer");
    }
    if (value.is_number_integer() && value.get<std::int64_t>() < 0) {
        throw ConfigError("config key '" + key + "' must be a non-negative integer");
    }
    return value.get<std::uint64_t>();
}

std::string to_str(const nlohmann::json& value, const std::string& key) {
    if (!value.is_string()) {
        throw ConfigError("config key '" + key + "' must be a string");
    }
    return value.get<std::string>();
}

} // namespace

RunConfig config_from_json(const nlohmann::json& encoded) {
    if (!encoded.is_object()) {
        throw ConfigError("the config file must hold a JSON object");
    }
    RunConfig config;
    for (const auto& [key, value] : encoded.items()) {
        if (key == "repo") {
            config.repo = to_str(value, key);
        } else if (key == "tasks") {
            if (!value.is_array()) {
                throw ConfigError("config key 'tasks' must be an array of file paths");
            }
            config.task_paths.clear();
            for (const auto& item : value) {
                config.task_paths.push_back(to_str(item, key));
            }
        } else if (key == "mode") {
            config.mode = to_str(value, key);
        } else if (key == "chat_model") {
            config.chat_model = to_str(value, key);
        } else if (key == "embed_model") {
            config.embed_model = to_str(value, key);
        } else if (key == "endpoint_base") {
            config.endpoint_base = to_str(value, key);
        } else if (key == "api_key_env") {
            config.api_key_env = to_str(value, key);
        } else if (key == "chunk_size") {
            config.chunk_size = to_u64(value, key);
        } else if (key == "overlap") {
            config.overlap = to_u64(value, key);
        } else if (key == "api_k") {
            config.api_k = to_u64(value, key);
        } else if (key == "example_k") {
            config.example_k = to_u64(value, key);
        } else if (key == "context_k") {
            config.context_k = to_u64(value, key);
        } else if (key == "rubric_path") {
            config.rubric_path = to_str(value, key);
        } else if (key == "calibration_dir") {
            config.calibration_dir = to_str(value, key);
        } else if (key == "output_dir") {
            config.output_dir = to_str(value, key);
        } else if (key == "mock_seed") {
            config.mock_seed = to_u64(value, key);
        } else if (key == "parallelism") {
            config.parallelism = to_u64(value, key);
        } else if (key == "allow_unanonymized") {
            if (!value.is_boolean()) {
                throw ConfigError("config key 'allow_unanonymized' must be a boolean");
            }
            config.allow_unanonymized = value.get<bool>();
        } else if (key == "cassette_path") {
            config.cassette_path = to_str(value, key);
        } else {
            throw ConfigError("unknown config key '" + key + "'");
        }
    }
    return config;
}

nlohmann::json config_to_json(const RunConfig& config) {
    return nlohmann::json{
        {"repo", config.repo},
        {"tasks", config.task_paths},
        {"mode", config.mode},
        {"chat_model", config.chat_model},
        {"embed_model", config.embed_model},
        {"endpoint_base", config.endpoint_base},
        {"api_key_env", config.api_key_env},
        {"chunk_size", config.chunk_size},
        {"overlap", config.overlap},
        {"api_k", config.api_k},
        {"example_k", config.example_k},
        {"context_k", config.context_k},
        {"rubric_path", config.rubric_path},
        {"calibration_dir", config.calibration_dir},
        {"output_dir", config.output_dir},
        {"mock_seed", config.mock_seed},
        {"parallelism", config.parallelism},
        {"allow_unanonymized", config.allow_unanonymized},
        {"cassette_path", config.cassette_path},
    };
}

RunConfig load_config(const fs::path& path) {
    if (!fs::exists(path)) {
        throw ConfigError("config file '" + path.string() + "' does not exist");
    }
    nlohmann::json encoded;
    try {
        encoded = read_json_file(path);
    } catch (const Error& e) {
        throw ConfigError("config file '" + path.string() + "': " + e.what());
    }
    RunConfig config = config_from_json(encoded);
    config.base_dir = fs::absolute(path).parent_path().string();
    return config;
}

// ===== Resolution =====

namespace {

bool is_url(const std::string& locator) {
    return locator.rfind("http://", 0) == 0 || locator.rfind("https://", 0) == 0;
}

std::string resolve_path(const std::string& raw, const fs::path& base) {
    if (raw.empty()) {
        return raw;
    }
    fs::path p(raw);
    if (p.is_absolute()) {
        return p.lexically_normal().string();
    }
    return (base / p).lexically_normal().string();
}

} // namespace

ResolvedRun resolve(const RunConfig& config) {
    if (kModes.count(config.mode) == 0) {
        throw ConfigError("mode must be one of live, mock, record, replay; got '" + config.mode +
                          "'");
    }
    if (config.repo.empty()) {
        throw ConfigError("config key 'repo' is required");
    }
    if (config.task_paths.empty()) {
        throw ConfigError("config key 'tasks' must name at least one task file");
    }
    if (config.chunk_size == 0) {
        throw ConfigError("chunk_size must be positive");
    }
    if (config.overlap >= config.chunk_size) {
        throw ConfigError("overlap must be smaller than chunk_size");
    }
    if (config.api_k == 0 || config.example_k == 0 || config.context_k == 0) {
        throw ConfigError("api_k, example_k, and context_k must be positive");
    }
    if (config.parallelism == 0) {
        throw ConfigError("parallelism must be positive");
    }

    ResolvedRun run;
    run.config = config;
    const fs::path base = config.base_dir.empty() ? fs::current_path() : fs::path(config.base_dir);
    if (!is_url(config.repo)) {
        run.config.repo = resolve_path(config.repo, base);
    }
    for (std::string& path : run.config.task_paths) {
        path = resolve_path(path, base);
    }
    run.config.rubric_path = resolve_path(config.rubric_path, base);
    run.config.calibration_dir = resolve_path(config.calibration_dir, base);
    run.config.output_dir = resolve_path(config.output_dir, base);
    run.config.cassette_path = resolve_path(config.cassette_path, base);

    std::set<std::string> seen_ids;
    for (const std::string& path : run.config.task_paths) {
        if (!fs::exists(path)) {
            throw ConfigError("task file '" + path + "' does not exist");
        }
        sim::TaskSpec task;
        try {
            task = sim::task_from_json(read_json_file(path));
            sim::validate_task(task);
        } catch (const Error& e) {
            throw ConfigError("task file '" + path + "': " + e.what());
        }
        if (!seen_ids.insert(task.task_id).second) {
            throw ConfigError("duplicate task id '" + task.task_id + "'");
        }
        run.tasks.push_back(std::move(task));
    }

    if (run.config.rubric_path.empty()) {
        run.instructions = eval::default_instructions();
    } else {
        if (!fs::exists(run.config.rubric_path)) {
            throw ConfigError("rubric file '" + run.config.rubric_path + "' does not exist");
        }
        run.instructions.rubric_text = read_file(run.config.rubric_path);
        run.instructions.version = 0;
        eval::validate_instructions(run.instructions);
    }

    // The digest covers exactly the fields that can change any produced
    // byte: file contents are hashed, not their paths, and plumbing
    // fields (mode, directories, cassette, credentials, parallelism)
    // stay out so record and replay of one run share an identity.
    nlohmann::json tasks = nlohmann::json::array();
    for (const sim::TaskSpec& task : run.tasks) {
        tasks.push_back(sim::task_to_json(task));
    }
    const nlohmann::json digest_body{
        {"allow_unanonymized", run.config.allow_unanonymized},
        {"api_k", run.config.api_k},
        {"chat_model", run.config.chat_model},
        {"chunk_size", run.config.chunk_size},
        {"context_k", run.config.context_k},
        {"embed_model", run.config.embed_model},
        {"example_k", run.config.example_k},
        {"mock_seed", run.config.mock_seed},
        {"overlap", run.config.overlap},
        {"repo", run.config.repo},
        {"rubric", run.instructions.rubric_text},
        {"tasks", tasks},
    };
    run.config_digest = sha256_hex(canonical_dump(digest_body));
    run.run_id = "run-" + run.config_digest.substr(0, 12);
    run.run_dir = fs::path(run.config.output_dir) / run.run_id;
    run.cassette = run.config.cassette_path.empty() ? run.run_dir / "cassette.jsonl"
                                                    : fs::path(run.config.cassette_path);

    if (run.config.mode == "replay" && !fs::exists(run.cassette)) {
        throw ConfigError("replay mode requires an existing cassette at '" +
                          run.cassette.string() + "'");
    }
    if (run.config.mode == "live" || run.config.mode == "record") {
        if (run.config.endpoint_base.empty()) {
            throw ConfigError(run.config.mode + " mode requires endpoint_base");
        }
        if (run.config.api_key_env.empty()) {
            throw ConfigError(run.config.mode + " mode requires api_key_env");
        }
        const char* key = std::getenv(run.config.api_key_env.c_str());
        if (key == nullptr || *key == '\0') {
            throw AuthError("environment variable '" + run.config.api_key_env +
                            "' is not set; " + run.config.mode + " mode needs an API key");
        }
    }
    return run;
}

std::unique_ptr<llm::Gateway> make_gateway(const ResolvedRun& run) {
    const std::string& mode = run.config.mode;
    if (mode == "mock") {
        return std::make_unique<llm::MockGateway>(run.config.mock_seed, run.config.embed_model);
    }
    if (mode == "replay") {
        return std::make_unique<llm::ReplayGateway>(run.cassette, run.config.embed_model);
    }
    llm::LiveOptions options;
    options.base_url = run.config.endpoint_base;
    options.api_key = std::getenv(run.config.api_key_env.c_str());
    options.embed_model = run.config.embed_model;
    if (mode == "live") {
        return std::make_unique<llm::LiveGateway>(std::move(options));
    }
    auto live = std::make_shared<llm::LiveGateway>(std::move(options));
    return std::make_unique<llm::RecordingGateway>(std::move(live), run.cassette);
}

// ===== Run directory layout =====

namespace {

namespace paths {
constexpr const char* kSnapshot = "snapshot.json";
constexpr const char* kClassification = "classification.json";
constexpr const char* kDocuments = "documents.json";
constexpr const char* kRules = "rules.json";
constexpr const char* kAnonDocuments = "anonymized/documents.json";
constexpr const char* kAnonReferences = "anonymized/references.json";
constexpr const char* kIndex = "index.json";
constexpr const char* kScores = "scores.json";
constexpr const char* kWarnings = "warnings.json";
constexpr const char* kManifest = "run_manifest.json";
constexpr const char* kReportJson = "report.json";
constexpr const char* kReportMd = "report.md";
constexpr const char* kReportHtml = "report.html";
constexpr const char* kLock = ".lock";
} // namespace paths

std::string prompts_rel(const std::string& task_id) { return "prompts/" + task_id + ".json"; }

std::string artifact_rel(const std::string& task_id, sim::ExperienceLevel level) {
    return "artifacts/" + task_id + "." + sim::level_name(level) + ".artifact.json";
}

std::string request_rel(const std::string& task_id, sim::ExperienceLevel level) {
    return "artifacts/" + task_id + "." + sim::level_name(level) + ".request.json";
}

void require_output(const ResolvedRun& run, const std::string& rel, const std::string& producer) {
    if (!fs::exists(run.run_dir / rel)) {
        throw Error("missing prerequisite file '" + rel + "'; run the '" + producer +
                    "' stage first");
    }
}

// Each stage owns one key in warnings.json; reruns replace it.
void store_warnings(const ResolvedRun& run, const std::string& stage,
                    const std::vector<std::string>& warnings) {
    const fs::path path = run.run_dir / paths::kWarnings;
    nlohmann::json all = fs::exists(path) ? read_json_file(path) : nlohmann::json::object();
    all[stage] = warnings;
    write_json_file(path, all);
}

std::vector<std::string> collect_warnings(const ResolvedRun& run) {
    const fs::path path = run.run_dir / paths::kWarnings;
    std::vector<std::string> flat;
    if (!fs::exists(path)) {
        return flat;
    }
    const nlohmann::json all = read_json_file(path);
    for (const std::string& stage : stage_order()) {
        if (all.contains(stage)) {
            for (const auto& item : all.at(stage)) {
                flat.push_back(item.get<std::string>());
            }
        }
    }
    return flat;
}

// Residual-identifier gate. The message reports counts and offsets
// only; quoting the match would itself leak it into logs.
void gate_anonymized(const ResolvedRun& run, const anon::RuleSet& ruleset,
                     const std::string& what, std::string_view text) {
    if (run.config.allow_unanonymized) {
        return;
    }
    const std::vector<anon::Violation> violations = anon::verify_anonymized(text, ruleset);
    if (!violations.empty()) {
        throw Error("anonymization check failed for " + what + ": " +
                    std::to_string(violations.size()) +
                    " residual occurrence(s); first at byte offset " +
                    std::to_string(violations.front().byte_offset));
    }
}

anon::RuleSet load_rules(const ResolvedRun& run) {
    return anon::ruleset_from_json(read_json_file(run.run_dir / paths::kRules));
}

} // namespace

// ===== Stages =====

void stage_ingest(const ResolvedRun& run, llm::Gateway& gateway) {
    ingest::RepoSnapshot snapshot =
        ingest::fetch_repo(ingest::source_from_locator(run.config.repo));

    ingest::ClassifyOptions options;
    options.model_id = run.config.chat_model;
    ingest::ClassifiedRepo classified = ingest::classify_files(snapshot, &gateway, options);
    ingest::DocumentSet documents = ingest::extract_documents(classified);

    write_json_file(run.run_dir / paths::kSnapshot, ingest::snapshot_to_json(snapshot));
    write_json_file(run.run_dir / paths::kClassification, ingest::roles_to_json(classified));
    write_json_file(run.run_dir / paths::kDocuments, ingest::documents_to_json(documents));

    std::vector<std::string> warnings = snapshot.warnings;
    warnings.insert(warnings.end(), classified.warnings.begin(), classified.warnings.end());
    warnings.insert(warnings.end(), documents.warnings.begin(), documents.warnings.end());
    store_warnings(run, "ingest", warnings);
}

void stage_anonymize(const ResolvedRun& run, llm::Gateway& gateway) {
    require_output(run, paths::kDocuments, "ingest");
    require_output(run, paths::kSnapshot, "ingest");
    ingest::DocumentSet documents =
        ingest::documents_from_json(read_json_file(run.run_dir / paths::kDocuments));
    ingest::RepoSnapshot snapshot =
        ingest::snapshot_from_json(read_json_file(run.run_dir / paths::kSnapshot));

    std::vector<std::string> warnings;
    anon::GenerateOptions options;
    options.model_id = run.config.chat_model;
    anon::RuleSet ruleset = anon::generate_rules(documents, gateway, options, warnings);

    ingest::DocumentSet anonymized = anon::anonymize_documents(documents, ruleset);
    gate_anonymized(run, ruleset, "the readme document", anonymized.readme_text);
    for (const ingest::Document& doc : anonymized.api_documents) {
        gate_anonymized(run, ruleset, "document '" + doc.path + "'", doc.text);
    }
    for (const ingest::Document& doc : anonymized.example_documents) {
        gate_anonymized(run, ruleset, "document '" + doc.path + "'", doc.text);
    }

    nlohmann::json references = nlohmann::json::object();
    for (const sim::TaskSpec& task : run.tasks) {
        std::string code;
        if (task.reference_code.has_value()) {
            code = *task.reference_code;
        } else {
            const ingest::RepoFile* file = snapshot.find(*task.reference_path);
            if (file == nullptr) {
                throw Error("task '" + task.task_id + "': reference file '" +
                            *task.reference_path + "' is not in the repository snapshot");
            }
            code = file->content;
        }
        std::string anonymized_code = anon::apply_rules(code, ruleset);
        gate_anonymized(run, ruleset,
                        "the reference implementation of task '" + task.task_id + "'",
                        anonymized_code);
        references[task.task_id] = nlohmann::json{
            {"language", task.target_language_tag},
            {"code", std::move(anonymized_code)},
        };
    }

    write_json_file(run.run_dir / paths::kRules, anon::ruleset_to_json(ruleset));
    write_json_file(run.run_dir / paths::kAnonDocuments, ingest::documents_to_json(anonymized));
    write_json_file(run.run_dir / paths::kAnonReferences, references);
    store_warnings(run, "anonymize", warnings);
}

void stage_index(const ResolvedRun& run, llm::Gateway& gateway) {
    require_output(run, paths::kAnonDocuments, "anonymize");
    require_output(run, paths::kRules, "anonymize");
    ingest::DocumentSet documents =
        ingest::documents_from_json(read_json_file(run.run_dir / paths::kAnonDocuments));
    const anon::RuleSet ruleset = load_rules(run);

    std::vector<kb::Chunk> chunks =
        kb::chunk_documents(documents, run.config.chunk_size, run.config.overlap);
    if (chunks.empty()) {
        throw Error("the document set produced no chunks");
    }
    for (const kb::Chunk& chunk : chunks) {
        gate_anonymized(run, ruleset, "chunk " + std::to_string(chunk.chunk_id), chunk.text);
    }

    kb::VectorIndex index = kb::build_index(chunks, gateway, run.config.parallelism);
    write_json_file(run.run_dir / paths::kIndex, kb::index_to_json(index));
    store_warnings(run, "index", {});
}

void stage_prompts(const ResolvedRun& run, llm::Gateway& gateway) {
    require_output(run, paths::kIndex, "index");
    require_output(run, paths::kRules, "anonymize");
    kb::VectorIndex index = kb::index_from_json(read_json_file(run.run_dir / paths::kIndex));
    const anon::RuleSet ruleset = load_rules(run);

    sim::PromptOptions options;
    options.api_k = run.config.api_k;
    options.example_k = run.config.example_k;
    options.model_id = run.config.chat_model;

    std::vector<std::string> warnings;
    for (const sim::TaskSpec& task : run.tasks) {
        sim::PromptBundle bundle =
            sim::build_all_levels(task, index, gateway, options, warnings);
        for (const auto& [level, prompt] : bundle.prompts) {
            gate_anonymized(run, ruleset,
                            "the " + sim::level_name(level) + " prompt of task '" +
                                task.task_id + "'",
                            prompt.assembled_text);
        }
        write_json_file(run.run_dir / prompts_rel(task.task_id), sim::bundle_to_json(bundle));
    }
    store_warnings(run, "prompts", warnings);
}

void stage_generate(const ResolvedRun& run, llm::Gateway& gateway) {
    require_output(run, paths::kIndex, "index");
    require_output(run, paths::kRules, "anonymize");
    kb::VectorIndex index = kb::index_from_json(read_json_file(run.run_dir / paths::kIndex));
    const anon::RuleSet ruleset = load_rules(run);

    gen::GenOptions options;
    options.model_id = run.config.chat_model;
    options.context_k = run.config.context_k;

    std::vector<std::string> warnings;
    for (const sim::TaskSpec& task : run.tasks) {
        require_output(run, prompts_rel(task.task_id), "prompts");
        sim::PromptBundle bundle =
            sim::bundle_from_json(read_json_file(run.run_dir / prompts_rel(task.task_id)));
        for (sim::ExperienceLevel level : sim::all_levels()) {
            llm::ChatRequest request;
            gen::GeneratedArtifact artifact;
            try {
                artifact = gen::generate_with_request(task, bundle.prompts.at(level), index,
                                                      gateway, options, warnings, &request);
            } catch (const gen::ExtractionError& e) {
                warnings.push_back("task " + task.task_id + " (" + sim::level_name(level) +
                                   "): generation failed: " + e.what());
                continue;
            }
            gate_anonymized(run, ruleset,
                            "the generation instruction for task '" + task.task_id + "' (" +
                                sim::level_name(level) + ")",
                            request.system_text);
            gate_anonymized(run, ruleset,
                            "the generation prompt for task '" + task.task_id + "' (" +
                                sim::level_name(level) + ")",
                            request.user_text);
            write_json_file(run.run_dir / artifact_rel(task.task_id, level),
                            gen::artifact_to_json(artifact));
            write_json_file(run.run_dir / request_rel(task.task_id, level),
                            nlohmann::json{
                                {"model_id", request.model_id},
                                {"system_text", request.system_text},
                                {"user_text", request.user_text},
                                {"temperature", request.temperature},
                                {"max_tokens", request.max_tokens},
                            });
        }
    }
    store_warnings(run, "generate", warnings);
}

void stage_evaluate(const ResolvedRun& run, llm::Gateway& gateway) {
    require_output(run, "artifacts", "generate");
    require_output(run, paths::kAnonReferences, "anonymize");
    const nlohmann::json references = read_json_file(run.run_dir / paths::kAnonReferences);

    eval::EvalOptions options;
    options.model_id = run.config.chat_model;

    std::vector<std::string> warnings;
    nlohmann::json scores = nlohmann::json::object();
    for (const sim::TaskSpec& task : run.tasks) {
        if (!references.contains(task.task_id)) {
            throw Error("no anonymized reference recorded for task '" + task.task_id + "'");
        }
        const std::string reference = references.at(task.task_id).at("code").get<std::string>();
        nlohmann::json row = nlohmann::json::object();
        for (sim::ExperienceLevel level : sim::all_levels()) {
            const fs::path artifact_path = run.run_dir / artifact_rel(task.task_id, level);
            if (!fs::exists(artifact_path)) {
                row[sim::level_name(level)] = nlohmann::json{
                    {"unscored_reason", "generation produced no artifact for this level"}};
                continue;
            }
            gen::GeneratedArtifact artifact =
                gen::artifact_from_json(read_json_file(artifact_path));
            try {
                eval::ScoreCard card =
                    eval::evaluate(artifact, reference, run.instructions, gateway, options);
                row[sim::level_name(level)] =
                    nlohmann::json{{"scorecard", eval::scorecard_to_json(card)}};
            } catch (const ParseError& e) {
                row[sim::level_name(level)] = nlohmann::json{
                    {"unscored_reason", std::string("evaluation failed: ") + e.what()}};
                warnings.push_back("task " + task.task_id + " (" + sim::level_name(level) +
                                   "): evaluation failed: " + e.what());
            }
        }
        scores[task.task_id] = std::move(row);
    }
    write_json_file(run.run_dir / paths::kScores, scores);
    store_warnings(run, "evaluate", warnings);
}

void stage_report(const ResolvedRun& run) {
    require_output(run, paths::kScores, "evaluate");
    require_output(run, paths::kRules, "anonymize");
    const nlohmann::json scores = read_json_file(run.run_dir / paths::kScores);
    const anon::RuleSet ruleset = load_rules(run);

    report::TaskResults results;
    for (const auto& [task_id, row] : scores.items()) {
        for (const auto& [level_name, cell_json] : row.items()) {
            std::optional<sim::ExperienceLevel> level = sim::level_from_name(level_name);
            if (!level.has_value()) {
                throw Error("scores file names an unknown level '" + level_name + "'");
            }
            report::ReportCell cell;
            if (cell_json.contains("scorecard")) {
                cell.scorecard = eval::scorecard_from_json(cell_json.at("scorecard"));
            } else {
                cell.unscored_reason = cell_json.at("unscored_reason").get<std::string>();
            }
            results[task_id][*level] = std::move(cell);
        }
    }

    report::UsabilityReport rep = report::aggregate(results, ruleset, run.run_id,
                                                    run.config_digest, collect_warnings(run));
    nlohmann::json body = report::report_to_json(rep);
    body["platform"].erase("original");
    gate_anonymized(run, ruleset, "the report body", canonical_dump(body));

    write_file(run.run_dir / paths::kReportJson, report::emit_json(rep));
    write_file(run.run_dir / paths::kReportMd, report::emit_markdown(rep));
    write_file(run.run_dir / paths::kReportHtml, report::emit_html(rep));
}

void stage_calibrate(const ResolvedRun& run, llm::Gateway& gateway) {
    const std::string& dir = run.config.calibration_dir;
    if (dir.empty()) {
        throw ConfigError("the calibrate stage requires calibration_dir (or --examples)");
    }
    if (!fs::is_directory(dir)) {
        throw Error("calibration examples directory '" + dir + "' does not exist");
    }
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir)) {
        if (entry.is_regular_file() && entry.path().extension() == ".json") {
            files.push_back(entry.path());
        }
    }
    std::sort(files.begin(), files.end());
    if (files.empty()) {
        throw Error("no calibration example files (*.json) found in '" + dir + "'");
    }
    std::vector<eval::CalibrationExample> examples;
    for (const fs::path& file : files) {
        try {
            examples.push_back(eval::example_from_json(read_json_file(file)));
        } catch (const Error& e) {
            throw Error("calibration example '" + file.string() + "': " + e.what());
        }
    }

    std::vector<std::string> warnings;
    eval::CalibrationResult result =
        eval::calibrate(run.instructions, examples, gateway, warnings);

    write_file(run.run_dir / ("rubric/v" + std::to_string(result.instructions.version) + ".txt"),
               result.instructions.rubric_text);
    write_json_file(run.run_dir / "rubric/transcript.json",
                    nlohmann::json{
                        {"converged", result.converged},
                        {"version", result.instructions.version},
                        {"iterations", result.transcript},
                    });
    store_warnings(run, "calibrate", warnings);
}

// ===== Manifest =====

const std::vector<std::string>& stage_order() {
    static const std::vector<std::string> order = {
        "ingest", "anonymize", "index", "prompts", "generate", "evaluate", "report", "calibrate",
    };
    return order;
}

nlohmann::json manifest_to_json(const RunManifest& manifest) {
    nlohmann::json stages = nlohmann::json::array();
    for (const StageStatus& stage : manifest.stages) {
        nlohmann::json entry{
            {"name", stage.name},
            {"status", stage.status},
            {"duration_ms", stage.duration_ms},
        };
        if (!stage.error.empty()) {
            entry["error"] = stage.error;
        }
        stages.push_back(std::move(entry));
    }
    return nlohmann::json{
        {"run_id", manifest.run_id},
        {"config_digest", manifest.config_digest},
        {"stages", std::move(stages)},
        {"warnings", manifest.warnings},
    };
}

// ===== Drivers =====

namespace {

// Exclusive ownership of a run directory for the process lifetime.
class DirLock {
public:
    explicit DirLock(fs::path path) : path_(std::move(path)) {
        fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
        if (fd_ < 0) {
            if (errno == EEXIST) {
                throw Error("run directory is locked by '" + path_.string() +
                            "'; remove the stale lock file if no other process owns this run");
            }
            throw Error("cannot create lock file '" + path_.string() +
                        "': " + std::strerror(errno));
        }
        const std::string pid = std::to_string(::getpid()) + "\n";
        if (::write(fd_, pid.data(), pid.size()) < 0) {
            // Lock content is informational; creation already succeeded.
        }
    }

    DirLock(const DirLock&) = delete;
    DirLock& operator=(const DirLock&) = delete;

    ~DirLock() {
        if (fd_ >= 0) {
            ::close(fd_);
            ::unlink(path_.c_str());
        }
    }

private:
    fs::path path_;
    int fd_ = -1;
};

void execute_stage(const ResolvedRun& run, const std::string& stage, llm::Gateway* gateway) {
    if (stage == "report") {
        stage_report(run);
        return;
    }
    if (gateway == nullptr) {
        throw Error("stage '" + stage + "' needs a model gateway");
    }
    if (stage == "ingest") {
        stage_ingest(run, *gateway);
    } else if (stage == "anonymize") {
        stage_anonymize(run, *gateway);
    } else if (stage == "index") {
        stage_index(run, *gateway);
    } else if (stage == "prompts") {
        stage_prompts(run, *gateway);
    } else if (stage == "generate") {
        stage_generate(run, *gateway);
    } else if (stage == "evaluate") {
        stage_evaluate(run, *gateway);
    } else if (stage == "calibrate") {
        stage_calibrate(run, *gateway);
    } else {
        throw ConfigError("unknown stage '" + stage + "'");
    }
}

std::map<std::string, StageStatus> load_manifest_entries(const ResolvedRun& run) {
    std::map<std::string, StageStatus> entries;
    const fs::path path = run.run_dir / paths::kManifest;
    if (!fs::exists(path)) {
        return entries;
    }
    try {
        const nlohmann::json manifest = read_json_file(path);
        for (const auto& item : manifest.at("stages")) {
            StageStatus status;
            status.name = item.at("name").get<std::string>();
            status.status = item.at("status").get<std::string>();
            status.duration_ms = item.at("duration_ms").get<std::int64_t>();
            status.error = item.value("error", "");
            entries[status.name] = std::move(status);
        }
    } catch (const std::exception&) {
        entries.clear(); // a corrupt manifest is rebuilt from scratch
    }
    return entries;
}

RunManifest drive(const ResolvedRun& run, const std::vector<std::string>& stages) {
    fs::create_directories(run.run_dir);
    DirLock lock(run.run_dir / paths::kLock);

    const bool needs_gateway =
        std::any_of(stages.begin(), stages.end(),
                    [](const std::string& stage) { return stage != "report"; });
    std::unique_ptr<llm::Gateway> gateway;
    if (needs_gateway) {
        if (run.config.mode == "record" && run.cassette.has_parent_path()) {
            fs::create_directories(run.cassette.parent_path());
        }
        gateway = make_gateway(run);
    }

    std::map<std::string, StageStatus> entries = load_manifest_entries(run);
    RunManifest manifest;
    manifest.run_id = run.run_id;
    manifest.config_digest = run.config_digest;

    const auto persist = [&]() {
        manifest.stages.clear();
        for (const std::string& name : stage_order()) {
            auto it = entries.find(name);
            if (it != entries.end()) {
                manifest.stages.push_back(it->second);
            }
        }
        manifest.warnings = collect_warnings(run);
        write_json_file(run.run_dir / paths::kManifest, manifest_to_json(manifest));
    };

    for (const std::string& stage : stages) {
        const auto started = std::chrono::steady_clock::now();
        const auto elapsed_ms = [&]() {
            return std::chrono::duration_cast<std::chrono::milliseconds>(
                       std::chrono::steady_clock::now() - started)
                .count();
        };
        try {
            execute_stage(run, stage, gateway.get());
        } catch (const GatewayError& e) {
            entries[stage] = {stage, "failed", elapsed_ms(), e.what()};
            persist();
            throw; // keeps the concrete type for exit-code mapping
        } catch (const StageError& e) {
            entries[stage] = {stage, "failed", elapsed_ms(), e.what()};
            persist();
            throw;
        } catch (const std::exception& e) {
            entries[stage] = {stage, "failed", elapsed_ms(), e.what()};
            persist();
            throw StageError(stage, e.what());
        }
        entries[stage] = {stage, "ok", elapsed_ms(), ""};
    }
    persist();
    return manifest;
}

} // namespace

RunManifest run_all(const ResolvedRun& run) {
    return drive(run, {"ingest", "anonymize", "index", "prompts", "generate", "evaluate",
                       "report"});
}

RunManifest run_stage(const ResolvedRun& run, const std::string& stage_name) {
    if (std::find(stage_order().begin(), stage_order().end(), stage_name) ==
        stage_order().end()) {
        throw ConfigError("unknown stage '" + stage_name + "'");
    }
    if (stage_name == "calibrate" && run.config.calibration_dir.empty()) {
        throw ConfigError("the calibrate stage requires calibration_dir (or --examples)");
    }
    return drive(run, {stage_name});
}

} // namespace uagent::pipe
