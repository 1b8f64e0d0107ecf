#include "atlas/ingest.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <thread>

#include "atlas/csv.hpp"
#include "atlas/geojson.hpp"
#include "atlas/http_util.hpp"
#include "atlas/spatial_index.hpp"
#include "atlas/text.hpp"
#include "httplib.h"

namespace atlas::ingest {

using nlohmann::json;

const char* to_string(SchoolSource s) { return s == SchoolSource::osm ? "osm" : "official"; }

const char* to_string(BuildingSource s) {
    switch (s) {
        case BuildingSource::osm: return "osm";
        case BuildingSource::microsoft: return "microsoft";
        case BuildingSource::google: return "google";
    }
    return "osm";
}

json rejects_to_json(const std::vector<Reject>& rejects) {
    json out = json::array();
    for (const auto& r : rejects) out.push_back({{"row", r.row}, {"id", r.id}, {"reason", r.reason}});
    return out;
}

namespace {

struct RowError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::string scalar_text(const json& v) { return v.is_string() ? v.get<std::string>() : v.dump(); }

std::string id_of(const json& feature, const json& props) {
    if (props.contains("id") && !props["id"].is_null()) return scalar_text(props["id"]);
    if (feature.contains("id") && !feature["id"].is_null()) return scalar_text(feature["id"]);
    return {};
}

const json& features_of(const json& doc) {
    if (!doc.is_object() || doc.value("type", "") != "FeatureCollection" || !doc.contains("features") ||
        !doc["features"].is_array())
        throw IngestError("expected a GeoJSON FeatureCollection");
    return doc["features"];
}

json props_of(const json& feature) {
    if (!feature.is_object()) throw RowError("feature is not an object");
    auto it = feature.find("properties");
    if (it == feature.end() || it->is_null()) return json::object();
    if (!it->is_object()) throw RowError("properties is not an object");
    return *it;
}

std::optional<std::string> opt_text(const json& props, const char* key) {
    auto it = props.find(key);
    if (it == props.end() || it->is_null()) return std::nullopt;
    std::string s = scalar_text(*it);
    if (s.empty()) return std::nullopt;
    return s;
}

SchoolSource school_source(const std::optional<std::string>& s) {
    if (!s || *s == "official") return SchoolSource::official;
    if (*s == "osm") return SchoolSource::osm;
    throw RowError("unknown source '" + *s + "'");
}

BuildingSource building_source(const std::string& s) {
    if (s == "osm") return BuildingSource::osm;
    if (s == "microsoft") return BuildingSource::microsoft;
    if (s == "google") return BuildingSource::google;
    throw RowError("unknown building source '" + s + "'");
}

// Wraps per-row parsing so that any failure becomes a reject entry.
template <class T, class Fn>
ReadResult<T> parse_rows(const json& doc, Fn&& parse_one) {
    ReadResult<T> out;
    std::set<std::string> seen;
    const json& features = features_of(doc);
    for (std::size_t row = 0; row < features.size(); ++row) {
        std::string id;
        try {
            const json props = props_of(features[row]);
            id = id_of(features[row], props);
            if (id.empty()) throw RowError("missing id");
            if (seen.count(id)) throw RowError("duplicate id");
            out.records.push_back(parse_one(features[row], props, id));
            seen.insert(id);
        } catch (const std::exception& e) {
            out.rejects.push_back({row, id, e.what()});
        }
    }
    return out;
}

}  // namespace

ReadResult<SchoolRecord> parse_schools_geojson(const json& doc) {
    return parse_rows<SchoolRecord>(doc, [](const json& f, const json& props, const std::string& id) {
        SchoolRecord r;
        r.id = id;
        r.name = opt_text(props, "name").value_or("");
        if (r.name.empty()) throw RowError("missing name");
        if (auto g = f.find("geometry"); g != f.end() && !g->is_null()) r.point = geojson::parse_point(*g);
        r.admin_zone = opt_text(props, "admin_zone");
        r.address = opt_text(props, "address");
        r.source = school_source(opt_text(props, "source"));
        for (const auto& [k, v] : props.items()) {
            if (k == "id" || k == "name" || k == "admin_zone" || k == "address" || k == "source" || v.is_null())
                continue;
            r.meta[k] = scalar_text(v);
        }
        return r;
    });
}

namespace {

double parse_coord(const std::string& s, const char* what) {
    double v = 0.0;
    const char* first = s.data();
    if (!s.empty() && *first == '+') ++first;
    auto [ptr, ec] = std::from_chars(first, s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size()) throw RowError(std::string("invalid ") + what);
    return v;
}

}  // namespace

ReadResult<SchoolRecord> parse_schools_csv(std::istream& in, const CsvColumns& columns) {
    ReadResult<SchoolRecord> out;
    auto header = csv::read_record(in);
    if (!header) return out;
    auto col = [&](const std::string& name) -> std::optional<std::size_t> {
        auto it = std::find(header->begin(), header->end(), name);
        if (it == header->end()) return std::nullopt;
        return static_cast<std::size_t>(it - header->begin());
    };
    const auto c_id = col(columns.id), c_name = col(columns.name);
    if (!c_id || !c_name) throw IngestError("CSV header lacks id or name column");
    const auto c_lat = col(columns.lat), c_lon = col(columns.lon), c_zone = col(columns.admin_zone),
               c_addr = col(columns.address), c_src = col(columns.source);
    std::set<std::string> seen;
    std::size_t row = 0;
    while (auto rec = csv::read_record(in)) {
        if (rec->size() == 1 && rec->front().empty()) continue;  // blank line
        std::string id;
        try {
            if (rec->size() != header->size()) throw RowError("column count mismatch");
            auto field = [&](std::optional<std::size_t> c) -> std::string { return c ? (*rec)[*c] : std::string(); };
            SchoolRecord r;
            id = r.id = field(c_id);
            if (id.empty()) throw RowError("missing id");
            if (seen.count(id)) throw RowError("duplicate id");
            r.name = field(c_name);
            if (r.name.empty()) throw RowError("missing name");
            const std::string lat = field(c_lat), lon = field(c_lon);
            if (!lat.empty() || !lon.empty()) {
                if (lat.empty() || lon.empty()) throw RowError("incomplete coordinates");
                const double la = parse_coord(lat, "lat"), lo = parse_coord(lon, "lon");
                if (la < -90.0 || la > 90.0) throw RowError("lat out of range");
                if (lo < -180.0 || lo > 180.0) throw RowError("lon out of range");
                r.point = GeoPoint(la, lo);
            }
            if (auto z = field(c_zone); !z.empty()) r.admin_zone = z;
            if (auto a = field(c_addr); !a.empty()) r.address = a;
            auto s = field(c_src);
            r.source = school_source(s.empty() ? std::nullopt : std::optional<std::string>(s));
            for (std::size_t i = 0; i < header->size(); ++i) {
                if (i == c_id || i == c_name || i == c_lat || i == c_lon || i == c_zone || i == c_addr || i == c_src)
                    continue;
                if (!(*rec)[i].empty()) r.meta[(*header)[i]] = (*rec)[i];
            }
            seen.insert(id);
            out.records.push_back(std::move(r));
        } catch (const std::exception& e) {
            out.rejects.push_back({row, id, e.what()});
        }
        ++row;
    }
    return out;
}

ReadResult<SchoolRecord> read_schools(const std::filesystem::path& path, const CsvColumns& columns) {
    if (path.extension() == ".csv") {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IngestError("cannot open " + path.string());
        return parse_schools_csv(in, columns);
    }
    return parse_schools_geojson(geojson::read_json_file(path));
}

ReadResult<PoiRecord> parse_pois_geojson(const json& doc) {
    return parse_rows<PoiRecord>(doc, [](const json& f, const json& props, const std::string& id) {
        if (!f.contains("geometry") || f["geometry"].is_null()) throw RowError("missing geometry");
        PoiRecord r{id, opt_text(props, "name"), {}, geojson::parse_point(f["geometry"])};
        const json* tags = &props;
        if (auto t = props.find("tags"); t != props.end() && t->is_object()) tags = &*t;
        for (const auto& [k, v] : tags->items()) {
            if (k == "id" || k == "tags" || v.is_null()) continue;
            r.tags[k] = scalar_text(v);
        }
        if (!r.name)
            if (auto it = r.tags.find("name"); it != r.tags.end() && !it->second.empty()) r.name = it->second;
        return r;
    });
}

ReadResult<PoiRecord> read_pois(const std::filesystem::path& path) {
    return parse_pois_geojson(geojson::read_json_file(path));
}

ReadResult<BuildingFootprint> parse_buildings_geojson(const json& doc, BuildingSource layer) {
    return parse_rows<BuildingFootprint>(doc, [layer](const json& f, const json& props, const std::string& id) {
        if (!f.contains("geometry") || f["geometry"].is_null()) throw RowError("missing geometry");
        BuildingFootprint b;
        b.id = id;
        b.ring = geojson::parse_polygon(f["geometry"]);
        auto src = opt_text(props, "source");
        b.source = src ? building_source(*src) : layer;
        if (auto c = props.find("confidence"); c != props.end() && !c->is_null()) {
            if (!c->is_number()) throw RowError("confidence is not a number");
            const double v = c->get<double>();
            if (v < 0.0 || v > 1.0) throw RowError("confidence out of range");
            b.confidence = v;
        }
        if (b.source != BuildingSource::osm && !b.confidence) throw RowError("missing confidence");
        return b;
    });
}

ReadResult<BuildingFootprint> read_buildings(const std::filesystem::path& path, BuildingSource layer) {
    return parse_buildings_geojson(geojson::read_json_file(path), layer);
}

ReadResult<AdminZone> parse_admin_zones_geojson(const json& doc) {
    // Zones are keyed by "code"; use it as the row id when none is given.
    json keyed = doc;
    if (keyed.is_object() && keyed.contains("features") && keyed["features"].is_array())
        for (auto& f : keyed["features"])
            if (f.is_object() && !f.contains("id") && f.contains("properties") && f["properties"].is_object() &&
                f["properties"].contains("code"))
                f["id"] = f["properties"]["code"];
    return parse_rows<AdminZone>(keyed, [](const json& f, const json& props, const std::string&) {
        auto code = opt_text(props, "code");
        if (!code) throw RowError("missing code");
        if (!f.contains("geometry") || f["geometry"].is_null()) throw RowError("missing geometry");
        return AdminZone{*code, geojson::parse_polygon(f["geometry"])};
    });
}

ReadResult<AdminZone> read_admin_zones(const std::filesystem::path& path) {
    return parse_admin_zones_geojson(geojson::read_json_file(path));
}

json schools_to_geojson(const std::vector<SchoolRecord>& schools) {
    json features = json::array();
    for (const auto& s : schools) {
        json props = {{"id", s.id}, {"name", s.name}, {"source", to_string(s.source)}};
        if (s.admin_zone) props["admin_zone"] = *s.admin_zone;
        if (s.address) props["address"] = *s.address;
        for (const auto& [k, v] : s.meta) props.emplace(k, v);
        features.push_back(geojson::feature(s.point ? geojson::point_geometry(*s.point) : json(nullptr), props));
    }
    return geojson::feature_collection(std::move(features));
}

json pois_to_geojson(const std::vector<PoiRecord>& pois) {
    json features = json::array();
    for (const auto& p : pois) {
        json props = {{"id", p.id}, {"tags", p.tags}};
        if (p.name) props["name"] = *p.name;
        features.push_back(geojson::feature(geojson::point_geometry(p.point), props));
    }
    return geojson::feature_collection(std::move(features));
}

json buildings_to_geojson(const std::vector<BuildingFootprint>& buildings) {
    json features = json::array();
    for (const auto& b : buildings) {
        json props = {{"id", b.id}, {"source", to_string(b.source)}};
        if (b.confidence) props["confidence"] = *b.confidence;
        features.push_back(geojson::feature(geojson::polygon_geometry(b.ring), props));
    }
    return geojson::feature_collection(std::move(features));
}

std::vector<BuildingFootprint> merge_building_layers(const std::vector<BuildingFootprint>& osm,
                                                     const std::vector<BuildingFootprint>& microsoft,
                                                     const std::vector<BuildingFootprint>& google,
                                                     const MergeOptions& options) {
    std::vector<BuildingFootprint> out;
    geo::SpatialIndex osm_centroids(std::max(0.01, options.exclusion_radius_m / geo::kMetersPerDegree));
    for (const auto& b : osm) {
        osm_centroids.insert(out.size(), b.ring.centroid());
        BuildingFootprint copy = b;
        copy.id = "osm:" + b.id;
        copy.source = BuildingSource::osm;
        out.push_back(std::move(copy));
    }
    auto add_layer = [&](const std::vector<BuildingFootprint>& layer, BuildingSource source) {
        for (const auto& b : layer) {
            if (!b.confidence || *b.confidence < options.confidence_min) continue;
            if (!osm_centroids.query_radius(b.ring.centroid(), options.exclusion_radius_m).empty()) continue;
            BuildingFootprint copy = b;
            copy.id = std::string(to_string(source)) + ":" + b.id;
            copy.source = source;
            out.push_back(std::move(copy));
        }
    };
    add_layer(microsoft, BuildingSource::microsoft);
    add_layer(google, BuildingSource::google);
    return out;
}

ReadResult<PoiRecord> parse_overpass(const json& doc) {
    if (!doc.is_object() || !doc.contains("elements") || !doc["elements"].is_array())
        throw OverpassError("overpass response lacks an elements array");
    ReadResult<PoiRecord> out;
    std::set<std::string> seen;
    const json& elements = doc["elements"];
    for (std::size_t row = 0; row < elements.size(); ++row) {
        const json& e = elements[row];
        std::string id;
        try {
            if (!e.is_object()) throw RowError("element is not an object");
            const std::string type = e.value("type", "");
            if (type.empty() || !e.contains("id")) throw RowError("element lacks type or id");
            id = type + "/" + scalar_text(e["id"]);
            if (seen.count(id)) throw RowError("duplicate id");
            const json* loc = &e;
            if (type != "node") {
                if (!e.contains("center")) throw RowError(type + " without center");
                loc = &e["center"];
            }
            if (!loc->contains("lat") || !loc->contains("lon") || !(*loc)["lat"].is_number() ||
                !(*loc)["lon"].is_number())
                throw RowError("missing coordinates");
            const double lat = (*loc)["lat"].get<double>(), lon = (*loc)["lon"].get<double>();
            if (lat < -90.0 || lat > 90.0) throw RowError("lat out of range");
            if (lon < -180.0 || lon > 180.0) throw RowError("lon out of range");
            PoiRecord r{id, std::nullopt, {}, GeoPoint(lat, lon)};
            if (auto t = e.find("tags"); t != e.end() && t->is_object())
                for (const auto& [k, v] : t->items()) r.tags[k] = scalar_text(v);
            if (auto n = r.tags.find("name"); n != r.tags.end() && !n->second.empty()) r.name = n->second;
            seen.insert(id);
            out.records.push_back(std::move(r));
        } catch (const RowError& err) {
            out.rejects.push_back({row, id, err.what()});
        }
    }
    return out;
}

ReadResult<PoiRecord> overpass_fetch(const std::string& query, const std::string& endpoint,
                                     const OverpassOptions& options) {
    if (!http::is_http_url(endpoint)) {
        std::ifstream in(endpoint, std::ios::binary);
        if (!in) throw OverpassError("cannot open overpass fixture " + endpoint);
        try {
            return parse_overpass(json::parse(in));
        } catch (const json::parse_error& e) {
            throw OverpassError(std::string("malformed overpass JSON: ") + e.what());
        }
    }

    const auto url = http::parse_url(endpoint);
    httplib::Client client(url.origin());
    client.set_connection_timeout(options.timeout);
    client.set_read_timeout(options.timeout);
    auto delay = options.backoff;
    std::string last_error = "no attempt made";
    bool rate_limited = false;
    for (int attempt = 1; attempt <= std::max(1, options.attempts); ++attempt) {
        auto res = client.Post(url.path, httplib::Params{{"data", query}});
        if (res && res->status == 200) {
            try {
                return parse_overpass(json::parse(res->body));
            } catch (const json::parse_error& e) {
                throw OverpassError(std::string("malformed overpass JSON: ") + e.what());
            }
        }
        if (res) {
            rate_limited = res->status == 429;
            last_error = "HTTP " + std::to_string(res->status);
        } else {
            rate_limited = false;
            last_error = httplib::to_string(res.error());
        }
        if (attempt < options.attempts) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
    }
    const std::string msg = "overpass request failed after " + std::to_string(options.attempts) +
                            " attempts: " + last_error;
    if (rate_limited) throw RateLimitError(msg + " (rate limited)");
    throw OverpassError(msg);
}

std::string geocoder_query_key(const std::string& name, const std::string& address) {
    return cleanse::normalize_name(address.empty() ? name : name + " " + address);
}

FixtureGeocoder::FixtureGeocoder(json table) : table_(std::move(table)) {
    if (!table_.is_object()) throw IngestError("geocoder fixture must be a JSON object");
}

FixtureGeocoder FixtureGeocoder::from_file(const std::filesystem::path& path) {
    return FixtureGeocoder(geojson::read_json_file(path));
}

namespace {

GeoPoint point_from_json(const json& v) {
    if (!v.is_object() || !v.contains("lat") || !v.contains("lon")) throw GeocoderError("malformed geocoder entry");
    try {
        return GeoPoint(v["lat"].get<double>(), v["lon"].get<double>());
    } catch (const std::exception& e) {
        throw GeocoderError(std::string("invalid geocoder point: ") + e.what());
    }
}

std::vector<GeoPoint> points_from_json(const json& v) {
    std::vector<GeoPoint> out;
    if (v.is_array())
        for (const auto& item : v) out.push_back(point_from_json(item));
    else
        out.push_back(point_from_json(v));
    return out;
}

}  // namespace

std::vector<GeoPoint> FixtureGeocoder::lookup(const std::string& name, const std::string& address) {
    auto it = table_.find(geocoder_query_key(name, address));
    if (it == table_.end()) return {};
    if (it->is_object() && it->contains("error")) throw GeocoderError((*it)["error"].get<std::string>());
    return points_from_json(*it);
}

HttpGeocoder::HttpGeocoder(std::string endpoint, std::chrono::seconds timeout)
    : endpoint_(std::move(endpoint)), timeout_(timeout) {}

std::vector<GeoPoint> HttpGeocoder::lookup(const std::string& name, const std::string& address) {
    const auto url = http::parse_url(endpoint_);
    httplib::Client client(url.origin());
    client.set_connection_timeout(timeout_);
    client.set_read_timeout(timeout_);
    const char sep = url.path.find('?') == std::string::npos ? '?' : '&';
    const std::string path = url.path + sep + "name=" + http::percent_encode(name) +
                             "&address=" + http::percent_encode(address);
    auto res = client.Get(path);
    if (!res) throw GeocoderError("geocoder transport error: " + httplib::to_string(res.error()));
    if (res->status != 200) throw GeocoderError("geocoder HTTP " + std::to_string(res->status));
    try {
        return points_from_json(json::parse(res->body));
    } catch (const json::exception& e) {
        throw GeocoderError(std::string("malformed geocoder response: ") + e.what());
    }
}

GeocodeOutcome geocode(const SchoolRecord& record, GeocoderClient& client, const std::vector<AdminZone>& zones) {
    using Kind = GeocodeOutcome::Kind;
    std::vector<GeoPoint> candidates;
    try {
        candidates = client.lookup(record.name, record.address.value_or(""));
    } catch (const GeocoderError& e) {
        return {Kind::deferred, std::nullopt, std::string("geocoder failure: ") + e.what()};
    }
    if (candidates.empty()) return {Kind::dropped, std::nullopt, "not found"};
    const AdminZone* zone = nullptr;
    if (record.admin_zone)
        for (const auto& z : zones)
            if (z.code == *record.admin_zone) zone = &z;
    if (!zone) return {Kind::dropped, std::nullopt, "unknown zone"};
    for (const auto& p : candidates)
        if (geo::point_in_polygon(p, zone->ring)) return {Kind::attached, p, {}};
    return {Kind::dropped, std::nullopt, "zone mismatch"};
}

}  // namespace atlas::ingest
