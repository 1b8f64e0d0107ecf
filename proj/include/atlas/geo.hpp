#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

namespace atlas::geo {

/// Mean Earth radius (IUGG), meters.
inline constexpr double kEarthRadiusM = 6371008.8;
inline constexpr double kPi = 3.14159265358979323846;
inline constexpr double kMaxMercatorLat = 85.0511287798066;
inline constexpr int kMaxZoom = 22;

inline constexpr double deg2rad(double d) { return d * kPi / 180.0; }
inline constexpr double rad2deg(double r) { return r * 180.0 / kPi; }

/// Meters spanned by one degree of latitude (and of longitude at the equator).
inline constexpr double kMetersPerDegree = 2.0 * kPi * kEarthRadiusM / 360.0;

class GeoError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Wraps any finite longitude into [-180, 180).
double normalize_lon(double lon);

/// WGS84 point in degrees. Latitude is validated, longitude normalized.
class GeoPoint {
public:
    GeoPoint() = default;
    GeoPoint(double lat, double lon);

    double lat() const { return lat_; }
    double lon() const { return lon_; }

    friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

private:
    double lat_ = 0.0;
    double lon_ = 0.0;
};

struct BBox {
    double min_lat = 0.0;
    double min_lon = 0.0;
    double max_lat = 0.0;
    double max_lon = 0.0;

    BBox() = default;
    BBox(double min_lat, double min_lon, double max_lat, double max_lon);

    bool contains(const GeoPoint& p) const {
        return p.lat() >= min_lat && p.lat() <= max_lat && p.lon() >= min_lon && p.lon() <= max_lon;
    }
    bool intersects(const BBox& o) const {
        return !(o.min_lat > max_lat || o.max_lat < min_lat || o.min_lon > max_lon || o.max_lon < min_lon);
    }
    GeoPoint center() const { return {(min_lat + max_lat) / 2.0, (min_lon + max_lon) / 2.0}; }

    friend bool operator==(const BBox&, const BBox&) = default;
};

/// Closed polygon ring; first vertex repeated as last.
class PolygonRing {
public:
    PolygonRing() = default;
    /// Throws GeoError for fewer than 4 vertices or an unclosed ring.
    explicit PolygonRing(std::vector<GeoPoint> vertices);

    const std::vector<GeoPoint>& vertices() const { return vertices_; }
    const BBox& bounds() const { return bounds_; }
    /// Planar area centroid in degree space; vertex mean for zero-area rings.
    GeoPoint centroid() const;

private:
    std::vector<GeoPoint> vertices_;
    BBox bounds_;
};

struct TileIndex {
    int z = 0;
    std::int64_t x = 0;
    std::int64_t y = 0;

    TileIndex() = default;
    /// Throws GeoError unless 0 <= z <= 22 and x, y in [0, 2^z).
    TileIndex(int z, std::int64_t x, std::int64_t y);

    friend bool operator==(const TileIndex&, const TileIndex&) = default;
    friend auto operator<=>(const TileIndex&, const TileIndex&) = default;
};

/// Great-circle distance in meters.
double haversine_distance(const GeoPoint& a, const GeoPoint& b);

/// Ray casting; points on the boundary count as inside.
bool point_in_polygon(const GeoPoint& p, const PolygonRing& ring);

/// 0 when inside or on the boundary, else the nearest-edge distance measured
/// in a local equirectangular plane centred at p.
double point_to_polygon_distance(const GeoPoint& p, const PolygonRing& ring);

/// Web-Mercator XYZ tile containing p. Throws GeoError when |lat| exceeds the
/// Mercator limit or z is out of range.
TileIndex latlon_to_tile(const GeoPoint& p, int z);

BBox tile_bounds(const TileIndex& t);

/// All tiles at zoom z whose bounds intersect box, row-major from north-west.
std::vector<TileIndex> tiles_covering(const BBox& box, int z);

}  // namespace atlas::geo
