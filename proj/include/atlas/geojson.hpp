#pragma once

#include <filesystem>
#include <optional>

#include "atlas/geo.hpp"
#include "json.hpp"

namespace atlas::geojson {

using nlohmann::json;

json point_geometry(const geo::GeoPoint& p);
json polygon_geometry(const geo::PolygonRing& ring);
json bbox_polygon_geometry(const geo::BBox& box);
json feature(json geometry, json properties);
json feature_collection(json features = json::array());

/// Point from a GeoJSON Point geometry ([lon, lat]); throws std::invalid_argument.
geo::GeoPoint parse_point(const json& geometry);
/// Outer ring of a Polygon geometry; throws std::invalid_argument / GeoError.
geo::PolygonRing parse_polygon(const json& geometry);

json read_json_file(const std::filesystem::path& path);
/// Writes pretty-printed JSON with a trailing newline.
void write_json_file(const std::filesystem::path& path, const json& doc);

}  // namespace atlas::geojson
