#include "atlas/geo.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace atlas::geo {

double normalize_lon(double lon) {
    if (!std::isfinite(lon)) throw GeoError("longitude is not finite");
    if (lon >= -180.0 && lon < 180.0) return lon;
    double wrapped = std::fmod(lon + 180.0, 360.0);
    if (wrapped < 0.0) wrapped += 360.0;
    double out = wrapped - 180.0;
    return out >= 180.0 ? -180.0 : out;
}

GeoPoint::GeoPoint(double lat, double lon) {
    if (!std::isfinite(lat)) throw GeoError("latitude is not finite");
    if (lat < -90.0 || lat > 90.0) throw GeoError("lat out of range");
    lat_ = lat;
    lon_ = normalize_lon(lon);
}

BBox::BBox(double min_lat_, double min_lon_, double max_lat_, double max_lon_)
    : min_lat(min_lat_), min_lon(min_lon_), max_lat(max_lat_), max_lon(max_lon_) {
    if (!(min_lat <= max_lat) || !(min_lon <= max_lon)) throw GeoError("bbox min exceeds max");
}

PolygonRing::PolygonRing(std::vector<GeoPoint> vertices) : vertices_(std::move(vertices)) {
    if (vertices_.size() < 4) throw GeoError("degenerate ring: fewer than 4 vertices");
    if (!(vertices_.front() == vertices_.back())) throw GeoError("ring is not closed");
    double min_lat = 90, max_lat = -90, min_lon = 180, max_lon = -180;
    for (const auto& v : vertices_) {
        min_lat = std::min(min_lat, v.lat());
        max_lat = std::max(max_lat, v.lat());
        min_lon = std::min(min_lon, v.lon());
        max_lon = std::max(max_lon, v.lon());
    }
    bounds_ = BBox(min_lat, min_lon, max_lat, max_lon);
}

GeoPoint PolygonRing::centroid() const {
    double area2 = 0.0, cx = 0.0, cy = 0.0;
    // Shift to the first vertex for numerical stability.
    const double ox = vertices_.front().lon(), oy = vertices_.front().lat();
    for (std::size_t i = 0; i + 1 < vertices_.size(); ++i) {
        double x0 = vertices_[i].lon() - ox, y0 = vertices_[i].lat() - oy;
        double x1 = vertices_[i + 1].lon() - ox, y1 = vertices_[i + 1].lat() - oy;
        double cross = x0 * y1 - x1 * y0;
        area2 += cross;
        cx += (x0 + x1) * cross;
        cy += (y0 + y1) * cross;
    }
    if (std::abs(area2) < 1e-18) {
        double sx = 0.0, sy = 0.0;
        const std::size_t n = vertices_.size() - 1;
        for (std::size_t i = 0; i < n; ++i) {
            sx += vertices_[i].lon();
            sy += vertices_[i].lat();
        }
        return {sy / n, sx / n};
    }
    return {oy + cy / (3.0 * area2), ox + cx / (3.0 * area2)};
}

TileIndex::TileIndex(int z_, std::int64_t x_, std::int64_t y_) : z(z_), x(x_), y(y_) {
    if (z < 0 || z > kMaxZoom) throw GeoError("zoom out of range: " + std::to_string(z));
    const std::int64_t n = std::int64_t{1} << z;
    if (x < 0 || x >= n || y < 0 || y >= n) throw GeoError("tile coordinate out of range");
}

double haversine_distance(const GeoPoint& a, const GeoPoint& b) {
    const double dlat = deg2rad(b.lat() - a.lat());
    const double dlon = deg2rad(b.lon() - a.lon());
    const double s1 = std::sin(dlat / 2.0), s2 = std::sin(dlon / 2.0);
    double h = s1 * s1 + std::cos(deg2rad(a.lat())) * std::cos(deg2rad(b.lat())) * s2 * s2;
    h = std::clamp(h, 0.0, 1.0);
    return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

namespace {

struct Vec2 {
    double x, y;
};

double segment_distance(Vec2 p, Vec2 a, Vec2 b) {
    const double dx = b.x - a.x, dy = b.y - a.y;
    const double len2 = dx * dx + dy * dy;
    double t = len2 > 0.0 ? ((p.x - a.x) * dx + (p.y - a.y) * dy) / len2 : 0.0;
    t = std::clamp(t, 0.0, 1.0);
    const double ex = a.x + t * dx - p.x, ey = a.y + t * dy - p.y;
    return std::sqrt(ex * ex + ey * ey);
}

// Local equirectangular projection in meters around origin.
Vec2 project(const GeoPoint& v, const GeoPoint& origin) {
    double dlon = v.lon() - origin.lon();
    if (dlon >= 180.0) dlon -= 360.0;
    if (dlon < -180.0) dlon += 360.0;
    return {dlon * kMetersPerDegree * std::cos(deg2rad(origin.lat())),
            (v.lat() - origin.lat()) * kMetersPerDegree};
}

bool on_boundary(const GeoPoint& p, const PolygonRing& ring) {
    const Vec2 q{p.lon(), p.lat()};
    const auto& vs = ring.vertices();
    for (std::size_t i = 0; i + 1 < vs.size(); ++i) {
        if (segment_distance(q, {vs[i].lon(), vs[i].lat()}, {vs[i + 1].lon(), vs[i + 1].lat()}) <= 1e-12)
            return true;
    }
    return false;
}

}  // namespace

bool point_in_polygon(const GeoPoint& p, const PolygonRing& ring) {
    if (ring.vertices().size() < 4) throw GeoError("degenerate ring");
    if (on_boundary(p, ring)) return true;
    const auto& vs = ring.vertices();
    bool inside = false;
    const double x = p.lon(), y = p.lat();
    for (std::size_t i = 0, j = vs.size() - 2; i + 1 < vs.size(); j = i++) {
        const double xi = vs[i].lon(), yi = vs[i].lat();
        const double xj = vs[j].lon(), yj = vs[j].lat();
        if ((yi > y) != (yj > y) && x < (xj - xi) * (y - yi) / (yj - yi) + xi) inside = !inside;
    }
    return inside;
}

double point_to_polygon_distance(const GeoPoint& p, const PolygonRing& ring) {
    if (point_in_polygon(p, ring)) return 0.0;
    const auto& vs = ring.vertices();
    double best = std::numeric_limits<double>::infinity();
    const Vec2 origin{0.0, 0.0};
    for (std::size_t i = 0; i + 1 < vs.size(); ++i)
        best = std::min(best, segment_distance(origin, project(vs[i], p), project(vs[i + 1], p)));
    return best;
}

namespace {

double tile_lat(std::int64_t y, int z) {
    const double n = std::ldexp(1.0, z);
    return rad2deg(std::atan(std::sinh(kPi * (1.0 - 2.0 * static_cast<double>(y) / n))));
}

double tile_lon(std::int64_t x, int z) {
    return static_cast<double>(x) / std::ldexp(1.0, z) * 360.0 - 180.0;
}

}  // namespace

TileIndex latlon_to_tile(const GeoPoint& p, int z) {
    if (z < 0 || z > kMaxZoom) throw GeoError("zoom out of range: " + std::to_string(z));
    if (std::abs(p.lat()) > kMaxMercatorLat) throw GeoError("latitude outside Mercator range");
    const std::int64_t n = std::int64_t{1} << z;
    const double scale = std::ldexp(1.0, z);
    auto x = static_cast<std::int64_t>(std::floor((p.lon() + 180.0) / 360.0 * scale));
    const double lat = deg2rad(p.lat());
    auto y = static_cast<std::int64_t>(std::floor((1.0 - std::asinh(std::tan(lat)) / kPi) / 2.0 * scale));
    x = std::clamp<std::int64_t>(x, 0, n - 1);
    y = std::clamp<std::int64_t>(y, 0, n - 1);
    // Snap against the inverse so forward and inverse agree bit-for-bit at edges.
    while (x > 0 && p.lon() < tile_lon(x, z)) --x;
    while (x < n - 1 && p.lon() >= tile_lon(x + 1, z)) ++x;
    while (y > 0 && p.lat() > tile_lat(y, z)) --y;
    while (y < n - 1 && p.lat() <= tile_lat(y + 1, z)) ++y;
    return {z, x, y};
}

BBox tile_bounds(const TileIndex& t) {
    return BBox(tile_lat(t.y + 1, t.z), tile_lon(t.x, t.z), tile_lat(t.y, t.z), tile_lon(t.x + 1, t.z));
}

std::vector<TileIndex> tiles_covering(const BBox& box, int z) {
    const double lat_hi = std::min(box.max_lat, kMaxMercatorLat);
    const double lat_lo = std::max(box.min_lat, -kMaxMercatorLat);
    if (lat_lo > lat_hi) return {};
    const auto nw = latlon_to_tile(GeoPoint(lat_hi, box.min_lon), z);
    const double east = box.max_lon >= 180.0 ? std::nextafter(180.0, 0.0) : box.max_lon;
    const auto se = latlon_to_tile(GeoPoint(lat_lo, east), z);
    std::vector<TileIndex> out;
    for (auto y = nw.y; y <= se.y; ++y)
        for (auto x = nw.x; x <= se.x; ++x) out.emplace_back(z, x, y);
    return out;
}

}  // namespace atlas::geo
