#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "atlas/ingest.hpp"
#include "atlas/raster.hpp"
#include "atlas/sampling.hpp"
#include "atlas/spatial_index.hpp"
#include "atlas/text.hpp"
#include "json.hpp"

namespace atlas::cleanse {

using ingest::SchoolRecord;

struct MergeLink {
    std::string a;  // a < b
    std::string b;
    double distance_m = 0.0;
    double similarity = 0.0;
};

struct MergeCluster {
    std::string canonical_id;
    std::vector<std::string> member_ids;  // ascending, includes the canonical id
    geo::GeoPoint merged_point;
};

struct MergeLog {
    std::vector<MergeCluster> clusters;  // multi-member clusters only
    std::vector<MergeLink> links;

    nlohmann::json to_json() const;
};

struct DedupOptions {
    double radius_m = 25.0;
    double sim_min = 0.85;
};

/// Links records within radius_m whose normalized names are at least
/// sim_min similar, merges connected components, and returns one record per
/// component in input order of the canonical (smallest id) member. Throws
/// std::invalid_argument if a record has no point.
std::pair<std::vector<SchoolRecord>, MergeLog> dedup_schools(const std::vector<SchoolRecord>& records,
                                                             const DedupOptions& options = {});

enum class RemovalReason { water, far_from_building, zone_mismatch, no_coordinates };
const char* to_string(RemovalReason r);

struct FilterReport {
    std::vector<std::string> kept;
    std::vector<std::pair<std::string, RemovalReason>> removed;
    std::vector<std::string> no_landcover;  // kept, but unverified against water

    nlohmann::json to_json() const;
};

struct GeoFilterOptions {
    int water_class = 80;
    double max_dist_m = 150.0;
};

/// Removes schools in water cells or farther than max_dist_m from every
/// footprint. Records without a point are removed as no_coordinates.
FilterReport geographic_filter(const std::vector<SchoolRecord>& records, const geo::RasterGrid& landcover,
                               const geo::FootprintIndex& buildings, const GeoFilterOptions& options = {});

struct ThinOptions {
    std::size_t target_total = 10000;
    double min_spacing_m = 10000.0;
    std::uint64_t seed = 0;
};

struct ThinResult {
    std::vector<SchoolRecord> selected;
    sampling::StratifiedResult sampling;
};

/// DEGURBA-stratified subset with a global minimum spacing.
ThinResult stratified_thin(const std::vector<SchoolRecord>& records, const geo::RasterGrid& degurba,
                           const ThinOptions& options);

}  // namespace atlas::cleanse
