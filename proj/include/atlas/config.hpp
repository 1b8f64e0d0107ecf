#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "atlas/cleanse.hpp"
#include "atlas/forest.hpp"
#include "atlas/geo.hpp"
#include "atlas/ingest.hpp"
#include "atlas/negatives.hpp"
#include "atlas/scorer.hpp"

namespace atlas::config {

/// Every problem found in a configuration, one line each.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(std::vector<std::string> errors);
    const std::vector<std::string>& errors() const { return errors_; }

private:
    std::vector<std::string> errors_;
};

enum class ScorerKind { builtin, fixture, remote };

struct ScorerConfig {
    ScorerKind kind = ScorerKind::builtin;
    std::string builtin = "built_fraction";  // built_fraction | brightness | constant
    double constant = 0.5;
    std::filesystem::path fixture;
    std::optional<double> fixture_default;
    std::string endpoint;
    int timeout_ms = 10000;
    int retries = 2;
};

struct ServiceConfig {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string upstream = "rendered";  // "rendered", URL template or path template
    std::size_t tile_cache_capacity = 4096;
    std::int64_t tile_ttl_s = 24 * 3600;
    std::size_t prediction_cache_capacity = 8192;
    std::int64_t prediction_ttl_s = 3600;
    std::filesystem::path feedback_log;  // defaults to <out>/feedback/feedback.jsonl
};

struct InputPaths {
    std::filesystem::path schools;
    std::filesystem::path pois;
    std::string overpass;  // endpoint URL or fixture path; replaces pois when set
    std::string overpass_query;
    std::filesystem::path buildings_osm;
    std::filesystem::path buildings_microsoft;
    std::filesystem::path buildings_google;
    std::filesystem::path admin_zones;
    std::filesystem::path lexicon;
    std::filesystem::path geocoder;  // fixture file; optional
};

struct RasterPaths {
    std::filesystem::path climate;
    std::filesystem::path landcover;
    std::filesystem::path terrain;
    std::filesystem::path population;
    std::filesystem::path degurba;
    std::filesystem::path nightlights;
    std::filesystem::path builtup;
};

struct TrainConfig {
    double test_frac = 0.2;
    bool search = true;
    int search_iter = 20;
    double search_subset = 0.2;
    int search_folds = 3;
    forest::SearchSpace space;
    forest::Hyperparams params;  // used when search is off
};

struct PipelineConfig {
    std::filesystem::path source;
    std::filesystem::path out_dir;
    std::uint64_t seed = 42;

    InputPaths paths;
    RasterPaths rasters;

    ingest::MergeOptions merge;
    ingest::CsvColumns csv;

    cleanse::DedupOptions dedup;
    cleanse::GeoFilterOptions school_filter;
    std::size_t thin_target = 10000;
    double thin_spacing_m = 10000.0;

    std::size_t poi_negatives = 8000;
    negatives::RemoteOptions remote;
    std::optional<geo::BBox> aoi;  // remote negatives and gap map; defaults to the land-cover extent

    TrainConfig train;
    forest::GapOptions gap;

    scorer::CandidateOptions candidates;
    std::string candidate_tiles = "rendered";
    int tile_size = 256;

    ScorerConfig scorer;
    ServiceConfig service;
};

/// ATLAS_* variables from a null-terminated environment block.
std::map<std::string, std::string> environment_overrides(char** envp);

/// Parses TOML text. Relative paths resolve against base_dir. Variables named
/// ATLAS_<SECTION>_<KEY> override [section].key. Throws ConfigError listing
/// every problem, including missing input files.
PipelineConfig parse(std::string_view toml_text, const std::filesystem::path& base_dir,
                     const std::map<std::string, std::string>& env = {});

PipelineConfig load(const std::filesystem::path& file, const std::map<std::string, std::string>& env = {});

}  // namespace atlas::config
