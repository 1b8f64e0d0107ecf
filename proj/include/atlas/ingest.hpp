#pragma once

#include <chrono>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "atlas/geo.hpp"
#include "json.hpp"

namespace atlas::ingest {

using geo::GeoPoint;
using geo::PolygonRing;
using Properties = std::map<std::string, std::string>;

enum class SchoolSource { official, osm };
enum class BuildingSource { osm, microsoft, google };

const char* to_string(SchoolSource s);
const char* to_string(BuildingSource s);

struct SchoolRecord {
    std::string id;
    std::string name;
    std::optional<GeoPoint> point;
    std::optional<std::string> admin_zone;
    std::optional<std::string> address;
    SchoolSource source = SchoolSource::official;
    Properties meta;

    friend bool operator==(const SchoolRecord&, const SchoolRecord&) = default;
};

struct PoiRecord {
    std::string id;
    std::optional<std::string> name;
    Properties tags;
    GeoPoint point;

    friend bool operator==(const PoiRecord&, const PoiRecord&) = default;
};

struct BuildingFootprint {
    std::string id;
    PolygonRing ring;
    BuildingSource source = BuildingSource::osm;
    std::optional<double> confidence;
};

struct AdminZone {
    std::string code;
    PolygonRing ring;
};

/// One input row that could not become a record.
struct Reject {
    std::size_t row = 0;
    std::string id;
    std::string reason;
};

template <class T>
struct ReadResult {
    std::vector<T> records;
    std::vector<Reject> rejects;
};

nlohmann::json rejects_to_json(const std::vector<Reject>& rejects);

class IngestError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Column names for school CSV files. Unmapped columns go to meta.
struct CsvColumns {
    std::string id = "id";
    std::string name = "name";
    std::string lat = "lat";
    std::string lon = "lon";
    std::string admin_zone = "admin_zone";
    std::string address = "address";
    std::string source = "source";
};

/// GeoJSON FeatureCollection, or CSV when the extension is .csv.
ReadResult<SchoolRecord> read_schools(const std::filesystem::path& path, const CsvColumns& columns = {});
ReadResult<SchoolRecord> parse_schools_geojson(const nlohmann::json& doc);
ReadResult<SchoolRecord> parse_schools_csv(std::istream& in, const CsvColumns& columns = {});

ReadResult<PoiRecord> read_pois(const std::filesystem::path& path);
ReadResult<PoiRecord> parse_pois_geojson(const nlohmann::json& doc);

/// Features without a "source" property are assigned to `layer`.
ReadResult<BuildingFootprint> read_buildings(const std::filesystem::path& path, BuildingSource layer);
ReadResult<BuildingFootprint> parse_buildings_geojson(const nlohmann::json& doc, BuildingSource layer);

ReadResult<AdminZone> read_admin_zones(const std::filesystem::path& path);
ReadResult<AdminZone> parse_admin_zones_geojson(const nlohmann::json& doc);

nlohmann::json schools_to_geojson(const std::vector<SchoolRecord>& schools);
nlohmann::json pois_to_geojson(const std::vector<PoiRecord>& pois);
nlohmann::json buildings_to_geojson(const std::vector<BuildingFootprint>& buildings);

struct MergeOptions {
    double confidence_min = 0.7;
    double exclusion_radius_m = 25.0;
};

/// Keeps every OSM footprint and adds a Microsoft/Google footprint only when
/// it is confident enough and its centroid is farther than the exclusion
/// radius from every OSM centroid. Output ids are "<source>:<id>".
std::vector<BuildingFootprint> merge_building_layers(const std::vector<BuildingFootprint>& osm,
                                                     const std::vector<BuildingFootprint>& microsoft,
                                                     const std::vector<BuildingFootprint>& google,
                                                     const MergeOptions& options = {});

// -- Overpass ---------------------------------------------------------------

class OverpassError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RateLimitError : public OverpassError {
public:
    using OverpassError::OverpassError;
};

struct OverpassOptions {
    int attempts = 3;
    std::chrono::milliseconds backoff{1000};  // doubled after each failed attempt
    std::chrono::seconds timeout{180};
};

/// Parses the Overpass JSON element list. Ways/relations without a
/// "center" are rejected.
ReadResult<PoiRecord> parse_overpass(const nlohmann::json& doc);

/// `endpoint` is an http(s) interpreter URL (the query is POSTed as the
/// "data" form field) or a path to a fixture file holding the same JSON.
ReadResult<PoiRecord> overpass_fetch(const std::string& query, const std::string& endpoint,
                                     const OverpassOptions& options = {});

// -- Geocoding --------------------------------------------------------------

class GeocoderError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class GeocoderClient {
public:
    virtual ~GeocoderClient() = default;
    /// Candidate points for a name/address query; throws GeocoderError when
    /// the service cannot answer.
    virtual std::vector<GeoPoint> lookup(const std::string& name, const std::string& address) = 0;
};

/// Lookup key used by fixture files: normalize_name(name + " " + address).
std::string geocoder_query_key(const std::string& name, const std::string& address);

/// Maps normalized query -> {"lat", "lon"} (or a list of them, or
/// {"error": "..."} to simulate a failing service).
class FixtureGeocoder final : public GeocoderClient {
public:
    explicit FixtureGeocoder(nlohmann::json table);
    static FixtureGeocoder from_file(const std::filesystem::path& path);
    std::vector<GeoPoint> lookup(const std::string& name, const std::string& address) override;

private:
    nlohmann::json table_;
};

/// GET <endpoint>?name=..&address=.. returning [{"lat":..,"lon":..}, ...].
class HttpGeocoder final : public GeocoderClient {
public:
    explicit HttpGeocoder(std::string endpoint, std::chrono::seconds timeout = std::chrono::seconds(10));
    std::vector<GeoPoint> lookup(const std::string& name, const std::string& address) override;

private:
    std::string endpoint_;
    std::chrono::seconds timeout_;
};

struct GeocodeOutcome {
    enum class Kind { attached, dropped, deferred };
    Kind kind = Kind::dropped;
    std::optional<GeoPoint> point;
    std::string reason;
};

/// Accepts the first candidate inside the record's stated admin zone.
GeocodeOutcome geocode(const SchoolRecord& record, GeocoderClient& client, const std::vector<AdminZone>& zones);

}  // namespace atlas::ingest
