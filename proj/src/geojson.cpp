#include "atlas/geojson.hpp"

#include <fstream>
#include <stdexcept>

namespace atlas::geojson {

json point_geometry(const geo::GeoPoint& p) {
    return {{"type", "Point"}, {"coordinates", {p.lon(), p.lat()}}};
}

json polygon_geometry(const geo::PolygonRing& ring) {
    json coords = json::array();
    for (const auto& v : ring.vertices()) coords.push_back({v.lon(), v.lat()});
    return {{"type", "Polygon"}, {"coordinates", json::array({coords})}};
}

json bbox_polygon_geometry(const geo::BBox& b) {
    json ring = json::array({{b.min_lon, b.min_lat},
                             {b.max_lon, b.min_lat},
                             {b.max_lon, b.max_lat},
                             {b.min_lon, b.max_lat},
                             {b.min_lon, b.min_lat}});
    return {{"type", "Polygon"}, {"coordinates", json::array({ring})}};
}

json feature(json geometry, json properties) {
    return {{"type", "Feature"}, {"geometry", std::move(geometry)}, {"properties", std::move(properties)}};
}

json feature_collection(json features) {
    return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

namespace {

geo::GeoPoint position(const json& c) {
    if (!c.is_array() || c.size() < 2 || !c[0].is_number() || !c[1].is_number())
        throw std::invalid_argument("invalid position");
    const double lon = c[0].get<double>(), lat = c[1].get<double>();
    if (lat < -90.0 || lat > 90.0) throw std::invalid_argument("lat out of range");
    if (lon < -180.0 || lon > 180.0) throw std::invalid_argument("lon out of range");
    return {lat, lon};
}

}  // namespace

geo::GeoPoint parse_point(const json& g) {
    if (!g.is_object() || g.value("type", "") != "Point") throw std::invalid_argument("geometry is not a Point");
    return position(g.at("coordinates"));
}

geo::PolygonRing parse_polygon(const json& g) {
    if (!g.is_object() || g.value("type", "") != "Polygon") throw std::invalid_argument("geometry is not a Polygon");
    const json& rings = g.at("coordinates");
    if (!rings.is_array() || rings.empty()) throw std::invalid_argument("polygon has no rings");
    std::vector<geo::GeoPoint> pts;
    for (const auto& c : rings[0]) pts.push_back(position(c));
    return geo::PolygonRing(std::move(pts));
}

json read_json_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json_file(const std::filesystem::path& path, const json& doc) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << doc.dump(1) << "\n";
}

}  // namespace atlas::geojson
