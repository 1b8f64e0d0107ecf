#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <unordered_map>
#include <vector>

#include "atlas/geo.hpp"

namespace atlas::geo {

/// Uniform lat/lon bucket grid over the globe. Ids are caller-chosen.
/// Query results are exact: buckets only prune, haversine decides.
class SpatialIndex {
public:
    explicit SpatialIndex(double bucket_deg = 0.1);

    void insert(std::size_t id, const GeoPoint& p);
    std::size_t size() const { return points_.size(); }

    /// Ids with haversine distance to p <= radius_m, ascending.
    std::vector<std::size_t> query_radius(const GeoPoint& p, double radius_m) const;

    /// True when any entry lies strictly closer than radius_m.
    bool any_closer_than(const GeoPoint& p, double radius_m) const;
    /// True when any entry lies within radius_m (inclusive).
    bool any_within(const GeoPoint& p, double radius_m) const;

private:
    template <class Fn>
    void visit_candidates(const GeoPoint& p, double radius_m, Fn&& fn) const;

    std::int64_t row_of(double lat) const;
    std::int64_t col_of(double lon) const;

    double bucket_;
    std::int64_t ncols_;
    std::vector<std::pair<std::size_t, GeoPoint>> points_;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets_;  // slots into points_
};

SpatialIndex index_build(std::span<const GeoPoint> points, double bucket_deg = 0.1);
std::vector<std::size_t> index_query_radius(const SpatialIndex& idx, const GeoPoint& p, double radius_m);

/// Bucketed polygon index for containment and nearest-footprint queries.
class FootprintIndex {
public:
    explicit FootprintIndex(std::vector<PolygonRing> rings, double bucket_deg = 0.01);

    std::size_t size() const { return rings_.size(); }
    const PolygonRing& ring(std::size_t id) const { return rings_[id]; }
    const std::vector<PolygonRing>& rings() const { return rings_; }

    /// Lowest id whose ring contains p (boundary inclusive).
    std::optional<std::size_t> containing(const GeoPoint& p) const;

    struct Hit {
        std::size_t id;
        double distance_m;
    };
    /// Nearest footprint within max_m (ties to the lower id), or nothing.
    std::optional<Hit> nearest(const GeoPoint& p, double max_m) const;

    /// Ids whose bounding box intersects box, ascending.
    std::vector<std::size_t> intersecting(const BBox& box) const;

private:
    std::vector<std::size_t> candidates(const BBox& box) const;

    double bucket_;
    std::vector<PolygonRing> rings_;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> buckets_;
};

}  // namespace atlas::geo
