#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "loopback_server.hpp"
#include "uagent/errors.hpp"
#include "uagent/jsonio.hpp"
#include "uagent/pipeline.hpp"

using namespace uagent;
namespace fs = std::filesystem;

namespace {

// ===== Helpers =====

fs::path make_temp_dir(const std::string& tag) {
    static int counter = 0;
    fs::path dir = fs::temp_directory_path() /
                   ("uagent_pipe_" + std::to_string(::getpid()) + "_" + tag + "_" +
                    std::to_string(counter++));
    fs::create_directories(dir);
    return dir;
}

pipe::RunConfig fixture_config(const fs::path& out_dir) {
    pipe::RunConfig config;
    config.repo = std::string(UAGENT_FIXTURE_DIR) + "/repo";
    config.task_paths = {std::string(UAGENT_FIXTURE_DIR) + "/tasks/pagerank.json",
                         std::string(UAGENT_FIXTURE_DIR) + "/tasks/sssp.json"};
    config.mode = "mock";
    config.chunk_size = 600;
    config.overlap = 100;
    config.output_dir = out_dir.string();
    return config;
}

int scored_cells(const nlohmann::json& scores) {
    int count = 0;
    for (const auto& [task, row] : scores.items()) {
        for (const auto& [level, cell] : row.items()) {
            if (cell.contains("scorecard")) {
                ++count;
            }
        }
    }
    return count;
}

} // namespace

// ===== Configuration parsing =====

TEST_CASE("config parsing applies defaults and rejects unknown keys") {
    pipe::RunConfig config = pipe::config_from_json(nlohmann::json{
        {"repo", "some/dir"},
        {"tasks", nlohmann::json::array({"a.json"})},
    });
    CHECK(config.mode == "mock");
    CHECK(config.chunk_size == 1200);
    CHECK(config.overlap == 200);
    CHECK(config.api_k == 5);
    CHECK(config.example_k == 3);
    CHECK(config.context_k == 5);
    CHECK(config.output_dir == "runs");
    CHECK(config.api_key_env == "UAGENT_API_KEY");
    CHECK(config.parallelism == 4);
    CHECK_FALSE(config.allow_unanonymized);

    CHECK_THROWS_AS(pipe::config_from_json(nlohmann::json{{"rep0", "typo"}}), ConfigError);
    CHECK_THROWS_AS(pipe::config_from_json(nlohmann::json{{"chunk_size", "big"}}), ConfigError);
    CHECK_THROWS_AS(pipe::config_from_json(nlohmann::json{{"chunk_size", -5}}), ConfigError);
    CHECK_THROWS_AS(pipe::config_from_json(nlohmann::json{{"tasks", "not-a-list"}}),
                    ConfigError);
    CHECK_THROWS_AS(pipe::config_from_json(nlohmann::json::array()), ConfigError);
}

TEST_CASE("config round-trips through json") {
    pipe::RunConfig config;
    config.repo = "r";
    config.task_paths = {"t1.json", "t2.json"};
    config.mode = "record";
    config.endpoint_base = "http://example.invalid/v1";
    config.mock_seed = 7;
    pipe::RunConfig back = pipe::config_from_json(pipe::config_to_json(config));
    CHECK(back.repo == config.repo);
    CHECK(back.task_paths == config.task_paths);
    CHECK(back.mode == "record");
    CHECK(back.endpoint_base == config.endpoint_base);
    CHECK(back.mock_seed == 7);
}

TEST_CASE("load_config roots relative paths at the file's directory") {
    fs::path dir = make_temp_dir("cfg");
    write_file(dir / "run.json", canonical_dump(nlohmann::json{
                                     {"repo", "repo"},
                                     {"tasks", nlohmann::json::array({"tasks/a.json"})},
                                 }) + "\n");
    pipe::RunConfig config = pipe::load_config(dir / "run.json");
    CHECK(config.base_dir == fs::absolute(dir).string());
    CHECK_THROWS_AS(pipe::load_config(dir / "absent.json"), ConfigError);
    write_file(dir / "broken.json", "{not json");
    CHECK_THROWS_AS(pipe::load_config(dir / "broken.json"), ConfigError);
    fs::remove_all(dir);
}

// ===== Resolution =====

TEST_CASE("resolve enforces the run invariants") {
    fs::path out = make_temp_dir("resolve");

    pipe::RunConfig bad_mode = fixture_config(out);
    bad_mode.mode = "dry-run";
    CHECK_THROWS_AS(pipe::resolve(bad_mode), ConfigError);

    pipe::RunConfig bad_overlap = fixture_config(out);
    bad_overlap.overlap = bad_overlap.chunk_size;
    CHECK_THROWS_AS(pipe::resolve(bad_overlap), ConfigError);

    pipe::RunConfig no_tasks = fixture_config(out);
    no_tasks.task_paths.clear();
    CHECK_THROWS_AS(pipe::resolve(no_tasks), ConfigError);

    pipe::RunConfig missing_task = fixture_config(out);
    missing_task.task_paths.push_back((out / "absent.json").string());
    CHECK_THROWS_AS(pipe::resolve(missing_task), ConfigError);

    pipe::RunConfig duplicate = fixture_config(out);
    duplicate.task_paths.push_back(duplicate.task_paths.front());
    CHECK_THROWS_AS(pipe::resolve(duplicate), ConfigError);

    pipe::RunConfig zero_k = fixture_config(out);
    zero_k.api_k = 0;
    CHECK_THROWS_AS(pipe::resolve(zero_k), ConfigError);

    pipe::RunConfig replay = fixture_config(out);
    replay.mode = "replay"; // no cassette anywhere yet
    CHECK_THROWS_AS(pipe::resolve(replay), ConfigError);

    pipe::RunConfig record = fixture_config(out);
    record.mode = "record"; // endpoint missing
    CHECK_THROWS_AS(pipe::resolve(record), ConfigError);

    record.endpoint_base = "http://127.0.0.1:1/v1";
    record.api_key_env = "UAGENT_TEST_ABSENT_KEY";
    ::unsetenv("UAGENT_TEST_ABSENT_KEY");
    CHECK_THROWS_AS(pipe::resolve(record), AuthError);

    fs::remove_all(out);
}

TEST_CASE("the config digest tracks output-affecting fields only") {
    fs::path out = make_temp_dir("digest");
    pipe::ResolvedRun base = pipe::resolve(fixture_config(out));
    CHECK(base.run_id == "run-" + base.config_digest.substr(0, 12));
    CHECK(base.run_dir == out / base.run_id);
    CHECK(base.cassette == base.run_dir / "cassette.jsonl");

    CHECK(pipe::resolve(fixture_config(out)).config_digest == base.config_digest);

    pipe::RunConfig changed = fixture_config(out);
    changed.chunk_size = 700;
    CHECK(pipe::resolve(changed).config_digest != base.config_digest);

    pipe::RunConfig seeded = fixture_config(out);
    seeded.mock_seed = 99;
    CHECK(pipe::resolve(seeded).config_digest != base.config_digest);

    pipe::RunConfig moved = fixture_config(make_temp_dir("digest2"));
    CHECK(pipe::resolve(moved).config_digest == base.config_digest);

    pipe::RunConfig parallel = fixture_config(out);
    parallel.parallelism = 1;
    CHECK(pipe::resolve(parallel).config_digest == base.config_digest);

    fs::remove_all(out);
}

// ===== Full mock run =====

TEST_CASE("a full mock run persists every stage output deterministically") {
    fs::path out = make_temp_dir("full");
    pipe::ResolvedRun run = pipe::resolve(fixture_config(out));

    pipe::RunManifest manifest = pipe::run_all(run);
    REQUIRE(manifest.stages.size() == 7);
    const std::vector<std::string> expected = {"ingest",   "anonymize", "index",  "prompts",
                                               "generate", "evaluate",  "report"};
    for (std::size_t i = 0; i < expected.size(); ++i) {
        CHECK(manifest.stages[i].name == expected[i]);
        CHECK(manifest.stages[i].status == "ok");
    }
    CHECK(manifest.run_id == run.run_id);

    for (const char* name : {"snapshot.json", "classification.json", "documents.json",
                             "rules.json", "anonymized/documents.json",
                             "anonymized/references.json", "index.json", "scores.json",
                             "warnings.json", "run_manifest.json", "report.json", "report.md",
                             "report.html"}) {
        CAPTURE(name);
        CHECK(fs::exists(run.run_dir / name));
    }
    CHECK_FALSE(fs::exists(run.run_dir / ".lock")); // released

    // 2 tasks x 4 levels, all generated and all scored.
    int artifacts = 0;
    for (const auto& entry : fs::directory_iterator(run.run_dir / "artifacts")) {
        if (entry.path().string().ends_with(".artifact.json")) {
            ++artifacts;
        }
    }
    CHECK(artifacts == 8);
    CHECK(scored_cells(read_json_file(run.run_dir / "scores.json")) == 8);

    const std::string first = read_file(run.run_dir / "report.json");
    const nlohmann::json report = nlohmann::json::parse(first);
    CHECK(report.at("schema_version") == 1);
    CHECK(report.at("run_id") == run.run_id);
    CHECK(report.at("config_digest") == run.config_digest);
    CHECK(report.at("platform").at("original") == "GraphFlow");
    CHECK(report.at("per_task").size() == 2);

    pipe::run_all(run);
    CHECK(read_file(run.run_dir / "report.json") == first);

    fs::remove_all(out);
}

TEST_CASE("stage subcommands compose to the same report as a full run") {
    fs::path out_full = make_temp_dir("comp_full");
    fs::path out_steps = make_temp_dir("comp_steps");

    pipe::ResolvedRun full = pipe::resolve(fixture_config(out_full));
    pipe::run_all(full);

    pipe::ResolvedRun steps = pipe::resolve(fixture_config(out_steps));
    for (const char* stage :
         {"ingest", "anonymize", "index", "prompts", "generate", "evaluate", "report"}) {
        pipe::RunManifest manifest = pipe::run_stage(steps, stage);
        CHECK(manifest.stages.back().status == "ok");
    }

    CHECK(read_file(steps.run_dir / "report.json") == read_file(full.run_dir / "report.json"));
    CHECK(read_file(steps.run_dir / "report.md") == read_file(full.run_dir / "report.md"));

    // The staged manifest accumulated all seven entries in order.
    const nlohmann::json manifest = read_json_file(steps.run_dir / "run_manifest.json");
    REQUIRE(manifest.at("stages").size() == 7);
    CHECK(manifest.at("stages").at(0).at("name") == "ingest");
    CHECK(manifest.at("stages").at(6).at("name") == "report");

    fs::remove_all(out_full);
    fs::remove_all(out_steps);
}

TEST_CASE("a stage without its prerequisites names the missing file") {
    fs::path out = make_temp_dir("prereq");
    pipe::ResolvedRun run = pipe::resolve(fixture_config(out));

    try {
        pipe::run_stage(run, "prompts");
        FAIL("expected a StageError");
    } catch (const StageError& e) {
        CHECK(e.stage() == "prompts");
        CHECK(std::string(e.what()).find("index.json") != std::string::npos);
        CHECK(std::string(e.what()).find("'index' stage") != std::string::npos);
    }

    // The failure is recorded in the manifest; partial outputs remain.
    const nlohmann::json manifest = read_json_file(run.run_dir / "run_manifest.json");
    CHECK(manifest.at("stages").at(0).at("name") == "prompts");
    CHECK(manifest.at("stages").at(0).at("status") == "failed");

    CHECK_THROWS_AS(pipe::run_stage(run, "polish"), ConfigError);
    fs::remove_all(out);
}

TEST_CASE("the run directory lock rejects a second owner") {
    fs::path out = make_temp_dir("lock");
    pipe::ResolvedRun run = pipe::resolve(fixture_config(out));
    fs::create_directories(run.run_dir);
    write_file(run.run_dir / ".lock", "12345\n");

    CHECK_THROWS_WITH_AS(pipe::run_all(run),
                         doctest::Contains("locked"), Error);

    fs::remove(run.run_dir / ".lock");
    CHECK_NOTHROW(pipe::run_stage(run, "ingest"));
    fs::remove_all(out);
}

// ===== Record and replay =====

TEST_CASE("record then replay reproduces the report byte for byte") {
    fs::path out = make_temp_dir("record");
    ::setenv("UAGENT_API_KEY", "test-key", 1);

    std::string recorded_report;
    std::string cassette_path;
    {
        testutil::MockProviderServer server(0);
        pipe::RunConfig config = fixture_config(out);
        config.mode = "record";
        config.endpoint_base = server.base_url();
        pipe::ResolvedRun run = pipe::resolve(config);
        pipe::run_all(run);
        recorded_report = read_file(run.run_dir / "report.json");
        cassette_path = run.cassette.string();
        CHECK(server.chat_calls() > 0);
        CHECK(server.embed_calls() > 0);
        CHECK(fs::exists(run.cassette));
    } // server gone: no network from here on

    pipe::RunConfig replay_config = fixture_config(out);
    replay_config.mode = "replay";
    pipe::ResolvedRun replay_run = pipe::resolve(replay_config);
    pipe::run_all(replay_run);
    CHECK(read_file(replay_run.run_dir / "report.json") == recorded_report);

    // Replaying twice is also stable.
    pipe::run_all(replay_run);
    CHECK(read_file(replay_run.run_dir / "report.json") == recorded_report);

    // Deleting one cassette line breaks replay with the named digest.
    std::vector<std::string> lines;
    {
        std::ifstream in(cassette_path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty()) {
                lines.push_back(line);
            }
        }
    }
    REQUIRE(lines.size() > 3);
    const std::string dropped = lines[2];
    const std::string dropped_digest =
        nlohmann::json::parse(dropped).at("request_fingerprint").get<std::string>();
    std::string rewritten;
    for (std::size_t i = 0; i < lines.size(); ++i) {
        if (i != 2) {
            rewritten += lines[i] + "\n";
        }
    }
    write_file(cassette_path, rewritten);

    try {
        pipe::run_all(replay_run);
        FAIL("expected a FingerprintMissError");
    } catch (const FingerprintMissError& e) {
        CHECK(e.digest() == dropped_digest);
        CHECK(std::string(e.what()).find(dropped_digest) != std::string::npos);
    }

    fs::remove_all(out);
}

// ===== Calibration stage =====

TEST_CASE("the calibrate stage writes a versioned rubric and transcript") {
    fs::path out = make_temp_dir("calib");
    pipe::RunConfig config = fixture_config(out);
    config.calibration_dir = std::string(UAGENT_FIXTURE_DIR) + "/calibration";
    pipe::ResolvedRun run = pipe::resolve(config);

    pipe::RunManifest manifest = pipe::run_stage(run, "calibrate");
    REQUIRE(manifest.stages.size() == 1);
    CHECK(manifest.stages[0].name == "calibrate");
    CHECK(manifest.stages[0].status == "ok");

    CHECK(fs::exists(run.run_dir / "rubric/v1.txt"));
    const nlohmann::json transcript = read_json_file(run.run_dir / "rubric/transcript.json");
    CHECK(transcript.at("converged") == true);
    CHECK(transcript.at("version") == 1);
    CHECK(transcript.at("iterations").size() == 2);

    pipe::RunConfig no_dir = fixture_config(out);
    CHECK_THROWS_AS(pipe::run_stage(pipe::resolve(no_dir), "calibrate"), ConfigError);
    fs::remove_all(out);
}
