#pragma once

// End-to-end orchestration: one configuration file drives the stage
// chain ingest -> anonymize -> index -> prompts -> generate ->
// evaluate -> report, each stage reading its prerequisites from the
// run directory and persisting its outputs there. A full run equals
// the sequential composition of the stage subcommands.

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "json.hpp"
#include "uagent/evaluator.hpp"
#include "uagent/gateway.hpp"
#include "uagent/prompts.hpp"

namespace uagent::pipe {

// ===== Configuration =====

struct RunConfig {
    std::string repo;                    // local directory or archive URL
    std::vector<std::string> task_paths; // task definition files
    std::string mode = "mock";           // live | mock | record | replay
    std::string chat_model = "mock-chat";
    std::string embed_model = "mock-embed";
    std::string endpoint_base;           // live/record provider base URL
    std::string api_key_env = "UAGENT_API_KEY";
    std::size_t chunk_size = 1200;
    std::size_t overlap = 200;
    std::size_t api_k = 5;               // prompt API retrieval depth
    std::size_t example_k = 3;           // prompt example retrieval depth
    std::size_t context_k = 5;           // generation context retrieval depth
    std::string rubric_path;             // empty selects the built-in rubric
    std::string calibration_dir;         // examples for the calibrate stage
    std::string output_dir = "runs";
    std::uint64_t mock_seed = 0;
    std::size_t parallelism = 4;
    bool allow_unanonymized = false;     // disables the leak gates
    std::string cassette_path;           // empty resolves inside the run directory
    std::string base_dir;                // resolution root for relative paths
};

// Rejects unknown keys and mistyped values with ConfigError.
RunConfig config_from_json(const nlohmann::json& encoded);
nlohmann::json config_to_json(const RunConfig& config);

// Reads the file and roots relative paths at its parent directory.
RunConfig load_config(const std::filesystem::path& path);

// ===== Resolved run =====

struct ResolvedRun {
    RunConfig config;                 // paths made absolute
    std::vector<sim::TaskSpec> tasks; // loaded and validated, ids unique
    eval::EvaluatorInstructions instructions;
    std::string config_digest;        // covers every output-affecting field
    std::string run_id;               // "run-" + digest prefix
    std::filesystem::path run_dir;    // output_dir / run_id
    std::filesystem::path cassette;
};

// Loads tasks and the rubric, computes the digest, and checks run
// invariants: overlap < chunk_size, replay needs an existing cassette
// (ConfigError), live/record need the API key env var set (AuthError).
ResolvedRun resolve(const RunConfig& config);

std::unique_ptr<llm::Gateway> make_gateway(const ResolvedRun& run);

// ===== Stages =====

// Canonical stage order; manifests list stages in this order.
const std::vector<std::string>& stage_order();

// Every stage persists its outputs under run.run_dir and merges its
// warnings into warnings.json. Missing prerequisites raise an error
// naming the missing file and the stage that produces it.
void stage_ingest(const ResolvedRun& run, llm::Gateway& gateway);
void stage_anonymize(const ResolvedRun& run, llm::Gateway& gateway);
void stage_index(const ResolvedRun& run, llm::Gateway& gateway);
void stage_prompts(const ResolvedRun& run, llm::Gateway& gateway);
void stage_generate(const ResolvedRun& run, llm::Gateway& gateway);
void stage_evaluate(const ResolvedRun& run, llm::Gateway& gateway);
void stage_report(const ResolvedRun& run);
void stage_calibrate(const ResolvedRun& run, llm::Gateway& gateway);

// ===== Manifest =====

struct StageStatus {
    std::string name;
    std::string status; // "ok" or "failed"
    std::int64_t duration_ms = 0;
    std::string error; // empty unless failed
};

struct RunManifest {
    std::string run_id;
    std::string config_digest;
    std::vector<StageStatus> stages; // pipeline order
    std::vector<std::string> warnings;
};

nlohmann::json manifest_to_json(const RunManifest& manifest);

// ===== Drivers =====
// Both acquire the run directory lock, time each stage, persist
// run_manifest.json (also on failure), and release the lock. Gateway
// errors propagate unchanged; other stage failures are wrapped as
// StageError naming the stage.

RunManifest run_all(const ResolvedRun& run);
RunManifest run_stage(const ResolvedRun& run, const std::string& stage_name);

} // namespace uagent::pipe
