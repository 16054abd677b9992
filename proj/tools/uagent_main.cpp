// Command-line front end for the usability evaluation pipeline.
// Exit codes: 0 success, 1 configuration error, 2 stage failure,
// 3 gateway or credential failure.

#include <cstdio>
#include <exception>
#include <filesystem>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "uagent/errors.hpp"
#include "uagent/pipeline.hpp"

namespace {

struct CliOptions {
    std::string subcommand;
    std::string config_path;
    std::string mode;
    std::string out_dir;
    std::string examples_dir;
};

int dispatch(const CliOptions& cli) {
    uagent::pipe::RunConfig config = uagent::pipe::load_config(cli.config_path);
    if (!cli.mode.empty()) {
        config.mode = cli.mode; // flags win over the file
    }
    if (!cli.out_dir.empty()) {
        config.output_dir = std::filesystem::absolute(cli.out_dir).string();
    }
    if (!cli.examples_dir.empty()) {
        config.calibration_dir = std::filesystem::absolute(cli.examples_dir).string();
    }

    uagent::pipe::ResolvedRun run = uagent::pipe::resolve(config);
    std::printf("%s -> %s\n", run.run_id.c_str(), run.run_dir.string().c_str());

    uagent::pipe::RunManifest manifest =
        cli.subcommand == "run" ? uagent::pipe::run_all(run)
                                : uagent::pipe::run_stage(run, cli.subcommand);
    for (const uagent::pipe::StageStatus& stage : manifest.stages) {
        std::printf("stage %-9s %s (%lld ms)\n", stage.name.c_str(), stage.status.c_str(),
                    static_cast<long long>(stage.duration_ms));
    }
    for (const std::string& warning : manifest.warnings) {
        std::printf("warning: %s\n", warning.c_str());
    }
    const std::filesystem::path report = run.run_dir / "report.json";
    if (std::filesystem::exists(report)) {
        std::printf("report: %s\n", report.string().c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Automated usability evaluation of code platforms via simulated developers"};
    app.require_subcommand(1);

    CliOptions cli;
    const std::vector<std::pair<std::string, std::string>> subcommands = {
        {"run", "Execute the full pipeline"},
        {"ingest", "Fetch the repository and classify its files"},
        {"anonymize", "Derive and apply the identifier anonymization rules"},
        {"index", "Chunk the documents and build the vector index"},
        {"prompts", "Assemble the per-level prompts for every task"},
        {"generate", "Generate one implementation per task and level"},
        {"evaluate", "Score every generated implementation"},
        {"report", "Aggregate scores into the usability report"},
        {"calibrate", "Tune the evaluation rubric against labeled examples"},
    };
    for (const auto& [name, description] : subcommands) {
        CLI::App* sub = app.add_subcommand(name, description);
        sub->add_option("--config", cli.config_path, "Run configuration file")->required();
        sub->add_option("--mode", cli.mode, "Gateway mode override")
            ->check(CLI::IsMember({"live", "mock", "record", "replay"}));
        sub->add_option("--out", cli.out_dir, "Output directory override");
        if (name == "calibrate") {
            sub->add_option("--examples", cli.examples_dir, "Calibration examples directory");
        }
        sub->callback([&cli, name = name]() { cli.subcommand = name; });
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        return dispatch(cli);
    } catch (const uagent::ConfigError& e) {
        std::fprintf(stderr, "config error: %s\n", e.what());
        return 1;
    } catch (const uagent::GatewayError& e) {
        std::fprintf(stderr, "gateway error: %s\n", e.what());
        return 3;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
