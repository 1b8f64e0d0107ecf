#pragma once

#include <atomic>
#include <cstdint>
#include <functional>
#include <filesystem>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "atlas/config.hpp"
#include "atlas/features.hpp"
#include "atlas/scorer.hpp"
#include "atlas/service.hpp"
#include "json.hpp"

namespace atlas::pipeline {

enum class Stage { ingest, clean, negatives, features, train, gapmap, candidates, serve, export_, all };

const char* to_string(Stage s);
std::optional<Stage> parse_stage(const std::string& s);

/// The stages "all" runs, in order.
const std::vector<Stage>& chained_stages();

/// A stage could not run or failed part-way. Missing inputs from an earlier
/// stage are reported as "run <stage> first".
struct PipelineError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Seed handed to a stage, derived from the global seed and the stage name.
std::uint64_t stage_seed(std::uint64_t seed, Stage stage);

/// Runs one batch stage (or "all") and writes its artifacts under out_dir.
/// Every stage writes <stage>/report.json, also when it fails; the error is
/// then rethrown.
void run(Stage stage, const config::PipelineConfig& cfg);

features::RasterStack load_raster_stack(const config::PipelineConfig& cfg);

std::shared_ptr<const scorer::Scorer> make_scorer(const config::PipelineConfig& cfg,
                                                  std::shared_ptr<const geo::FootprintIndex> buildings);

/// Service over the artifacts in out_dir: ingest buildings, clean known
/// schools as ground truth, and candidates when they exist.
std::unique_ptr<service::Service> make_service(const config::PipelineConfig& cfg);

/// Serves until `stop` becomes true. Writes serve/report.json on exit.
void serve(const config::PipelineConfig& cfg, const std::atomic<bool>& stop,
           const std::function<void(int port)>& on_listening = nullptr);

}  // namespace atlas::pipeline
