#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "atlas/ingest.hpp"
#include "atlas/raster.hpp"
#include "atlas/sampling.hpp"
#include "atlas/spatial_index.hpp"
#include "json.hpp"

namespace atlas::negatives {

using ingest::PoiRecord;
using ingest::Reject;

class ExclusionLexicon {
public:
    ExclusionLexicon() = default;
    /// Terms are normalized on construction; empty and duplicate terms are dropped.
    explicit ExclusionLexicon(const std::vector<std::string>& terms);

    /// One term per line; '#' starts a comment.
    static ExclusionLexicon parse(std::istream& in);
    static ExclusionLexicon load(const std::filesystem::path& path);

    const std::vector<std::string>& terms() const { return terms_; }
    bool empty() const { return terms_.empty(); }

    /// First term contained in the (already normalized) name.
    std::optional<std::string> match(const std::string& normalized_name) const;

private:
    std::vector<std::string> terms_;
};

/// amenity/building values that mark an OSM object as an education facility.
bool has_school_tag(const ingest::Properties& tags);

struct PoiFilterResult {
    std::vector<PoiRecord> kept;
    std::vector<Reject> rejects;  // row = input position

    nlohmann::json rejects_json() const { return ingest::rejects_to_json(rejects); }
};

PoiFilterResult filter_poi_candidates(const std::vector<PoiRecord>& pois, const ExclusionLexicon& lexicon);

/// Keeps POIs on non-water cells that lie inside at least one footprint.
/// POIs off the land-cover extent are not treated as water.
PoiFilterResult geographic_filter_neg(const std::vector<PoiRecord>& pois, const geo::RasterGrid& landcover,
                                      const geo::FootprintIndex& buildings, int water_class = 80);

enum class Origin { poi, remote };
const char* to_string(Origin o);

struct NegativeSample {
    std::string id;
    geo::GeoPoint point;
    Origin origin = Origin::poi;
    sampling::StratumKey stratum;  // DEGURBA for poi, WorldCover for remote

    friend bool operator==(const NegativeSample&, const NegativeSample&) = default;
};

struct NegativeSamples {
    std::vector<NegativeSample> samples;
    sampling::StratifiedResult sampling;
};

NegativeSamples sample_poi_negatives(const std::vector<PoiRecord>& kept, const geo::RasterGrid& degurba,
                                     std::size_t n, std::uint64_t seed);

struct RemoteOptions {
    std::size_t n = 2000;
    double min_dist_m = 1000.0;
    double builtup_threshold = 0.0;  // a cell is built when its value exceeds this
    int water_class = 80;
    std::size_t pool_factor = 3;
    std::size_t max_draws = 1000000;
};

struct RemoteNegatives : NegativeSamples {
    std::size_t draws = 0;
    std::size_t pool = 0;
    bool starved = false;  // max_draws reached before the pool held n points
};

/// Rejection-samples uniform lat/lon points in aoi, keeping those on
/// non-water land more than min_dist_m from every built cell centre, then
/// stratifies the accepted pool by land-cover class down to n.
RemoteNegatives sample_remote_negatives(const geo::RasterGrid& builtup, const geo::RasterGrid& landcover,
                                        const geo::BBox& aoi, const RemoteOptions& options, std::uint64_t seed);

/// Centres of cells whose value exceeds threshold.
std::vector<geo::GeoPoint> built_cell_centers(const geo::RasterGrid& builtup, double threshold);

nlohmann::json negatives_to_geojson(const std::vector<NegativeSample>& samples);
std::vector<NegativeSample> negatives_from_geojson(const nlohmann::json& doc);

}  // namespace atlas::negatives
