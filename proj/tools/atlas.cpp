// atlas: runs the school-mapping pipeline stages from a TOML config.

#include <csignal>
#include <filesystem>
#include <iostream>

#include "CLI11.hpp"
#include "atlas/config.hpp"
#include "atlas/pipeline.hpp"

extern char** environ;

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop.store(true); }

}  // namespace

int main(int argc, char** argv) {
    using namespace atlas;

    CLI::App app{"Pipeline for locating unmapped schools"};
    std::string stage_name;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    app.add_option("stage", stage_name,
                   "ingest, clean, negatives, features, train, gapmap, candidates, serve, export or all")
        ->required();
    app.add_option("--config,-c", config_path, "TOML configuration file")->required();
    app.add_option("--seed", seed, "Global seed (overrides [run].seed)");
    app.add_option("--out", out, "Output directory (overrides [run].out)");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    }

    const auto stage = pipeline::parse_stage(stage_name);
    if (!stage) {
        std::cerr << "atlas: unknown stage '" << stage_name << "'\n";
        return 1;
    }

    config::PipelineConfig cfg;
    try {
        auto env = config::environment_overrides(environ);
        if (seed) env["ATLAS_RUN_SEED"] = std::to_string(*seed);
        if (out) env["ATLAS_RUN_OUT"] = std::filesystem::absolute(*out).string();
        cfg = config::load(config_path, env);
    } catch (const config::ConfigError& e) {
        std::cerr << "atlas: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*stage == pipeline::Stage::serve) {
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            pipeline::serve(cfg, g_stop, [&](int port) {
                std::cout << "listening on http://" << cfg.service.host << ":" << port << std::endl;
            });
        } else {
            pipeline::run(*stage, cfg);
        }
    } catch (const std::exception& e) {
        std::cerr << "atlas " << stage_name << ": " << e.what() << "\n";
        return 2;
    }
    std::cout << stage_name << ": ok (" << (cfg.out_dir / pipeline::to_string(*stage) / "report.json").string() << ")\n";
    return 0;
}
