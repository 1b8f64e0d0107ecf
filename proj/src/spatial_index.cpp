#include "atlas/spatial_index.hpp"

#include <algorithm>
#include <cmath>

namespace atlas::geo {

namespace {

constexpr std::int64_t kRowStride = 1 << 22;

std::int64_t key_of(std::int64_t row, std::int64_t col) { return row * kRowStride + col; }

struct Window {
    double lat_lo, lat_hi;
    double dlon;  // half-width; >= 180 means every longitude
};

// Conservative lat/lon window around a spherical cap of radius r.
Window cap_window(const GeoPoint& p, double radius_m) {
    const double ang = radius_m / kEarthRadiusM;
    const double dlat = rad2deg(ang) * 1.000001 + 1e-9;
    Window w{std::max(-90.0, p.lat() - dlat), std::min(90.0, p.lat() + dlat), 360.0};
    if (ang >= kPi / 2.0 || w.lat_hi >= 90.0 || w.lat_lo <= -90.0) return w;
    const double s = std::sin(ang) / std::cos(deg2rad(p.lat()));
    if (s < 1.0) w.dlon = rad2deg(std::asin(s)) * 1.000001 + 1e-9;
    return w;
}

}  // namespace

SpatialIndex::SpatialIndex(double bucket_deg)
    : bucket_(bucket_deg), ncols_(static_cast<std::int64_t>(std::ceil(360.0 / bucket_deg))) {
    if (!(bucket_deg > 0.0) || bucket_deg > 360.0) throw GeoError("bucket size must be in (0, 360]");
}

std::int64_t SpatialIndex::row_of(double lat) const {
    return static_cast<std::int64_t>(std::floor((lat + 90.0) / bucket_));
}

std::int64_t SpatialIndex::col_of(double lon) const {
    auto c = static_cast<std::int64_t>(std::floor((lon + 180.0) / bucket_));
    return std::clamp<std::int64_t>(c, 0, ncols_ - 1);
}

void SpatialIndex::insert(std::size_t id, const GeoPoint& p) {
    buckets_[key_of(row_of(p.lat()), col_of(p.lon()))].push_back(points_.size());
    points_.emplace_back(id, p);
}

template <class Fn>
void SpatialIndex::visit_candidates(const GeoPoint& p, double radius_m, Fn&& fn) const {
    if (points_.empty()) return;
    const Window w = cap_window(p, radius_m);
    const std::int64_t r0 = row_of(w.lat_lo), r1 = row_of(w.lat_hi);
    std::int64_t c0, c1;
    if (w.dlon >= 180.0 || (2 * static_cast<std::int64_t>(std::ceil(w.dlon / bucket_)) + 3) >= ncols_) {
        c0 = 0;
        c1 = ncols_ - 1;
    } else {
        c0 = static_cast<std::int64_t>(std::floor((p.lon() - w.dlon + 180.0) / bucket_));
        c1 = static_cast<std::int64_t>(std::floor((p.lon() + w.dlon + 180.0) / bucket_));
    }
    for (std::int64_t r = r0; r <= r1; ++r) {
        for (std::int64_t c = c0; c <= c1; ++c) {
            const std::int64_t wc = ((c % ncols_) + ncols_) % ncols_;
            auto it = buckets_.find(key_of(r, wc));
            if (it == buckets_.end()) continue;
            for (std::size_t slot : it->second)
                if (!fn(points_[slot])) return;
        }
    }
}

std::vector<std::size_t> SpatialIndex::query_radius(const GeoPoint& p, double radius_m) const {
    std::vector<std::size_t> out;
    visit_candidates(p, radius_m, [&](const auto& entry) {
        if (haversine_distance(p, entry.second) <= radius_m) out.push_back(entry.first);
        return true;
    });
    std::sort(out.begin(), out.end());
    return out;
}

bool SpatialIndex::any_closer_than(const GeoPoint& p, double radius_m) const {
    bool found = false;
    visit_candidates(p, radius_m, [&](const auto& entry) {
        found = haversine_distance(p, entry.second) < radius_m;
        return !found;
    });
    return found;
}

bool SpatialIndex::any_within(const GeoPoint& p, double radius_m) const {
    bool found = false;
    visit_candidates(p, radius_m, [&](const auto& entry) {
        found = haversine_distance(p, entry.second) <= radius_m;
        return !found;
    });
    return found;
}

SpatialIndex index_build(std::span<const GeoPoint> points, double bucket_deg) {
    SpatialIndex idx(bucket_deg);
    for (std::size_t i = 0; i < points.size(); ++i) idx.insert(i, points[i]);
    return idx;
}

std::vector<std::size_t> index_query_radius(const SpatialIndex& idx, const GeoPoint& p, double radius_m) {
    return idx.query_radius(p, radius_m);
}

namespace {

std::int64_t brow(double lat, double b) { return static_cast<std::int64_t>(std::floor((lat + 90.0) / b)); }
std::int64_t bcol(double lon, double b) { return static_cast<std::int64_t>(std::floor((lon + 180.0) / b)); }

}  // namespace

FootprintIndex::FootprintIndex(std::vector<PolygonRing> rings, double bucket_deg)
    : bucket_(bucket_deg), rings_(std::move(rings)) {
    if (!(bucket_deg > 0.0)) throw GeoError("bucket size must be positive");
    for (std::size_t id = 0; id < rings_.size(); ++id) {
        const BBox& b = rings_[id].bounds();
        for (auto r = brow(b.min_lat, bucket_); r <= brow(b.max_lat, bucket_); ++r)
            for (auto c = bcol(b.min_lon, bucket_); c <= bcol(b.max_lon, bucket_); ++c)
                buckets_[key_of(r, c)].push_back(id);
    }
}

std::vector<std::size_t> FootprintIndex::candidates(const BBox& box) const {
    std::vector<std::size_t> out;
    if (rings_.empty()) return out;
    const auto r0 = brow(box.min_lat, bucket_), r1 = brow(box.max_lat, bucket_);
    const auto c0 = bcol(box.min_lon, bucket_), c1 = bcol(box.max_lon, bucket_);
    const auto cells = (r1 - r0 + 1) * (c1 - c0 + 1);
    if (cells > static_cast<std::int64_t>(buckets_.size())) {
        for (const auto& [key, ids] : buckets_) {
            // Stored keys always have non-negative row and column.
            const std::int64_t r = key / kRowStride, c = key % kRowStride;
            if (r >= r0 && r <= r1 && c >= c0 && c <= c1) out.insert(out.end(), ids.begin(), ids.end());
        }
    } else {
        for (auto r = r0; r <= r1; ++r)
            for (auto c = c0; c <= c1; ++c)
                if (auto it = buckets_.find(key_of(r, c)); it != buckets_.end())
                    out.insert(out.end(), it->second.begin(), it->second.end());
    }
    std::sort(out.begin(), out.end());
    out.erase(std::unique(out.begin(), out.end()), out.end());
    return out;
}

std::optional<std::size_t> FootprintIndex::containing(const GeoPoint& p) const {
    for (std::size_t id : candidates(BBox(p.lat(), p.lon(), p.lat(), p.lon())))
        if (rings_[id].bounds().contains(p) && point_in_polygon(p, rings_[id])) return id;
    return std::nullopt;
}

std::optional<FootprintIndex::Hit> FootprintIndex::nearest(const GeoPoint& p, double max_m) const {
    const double dlat = max_m / kMetersPerDegree * 1.01 + 1e-9;
    const double coslat = std::max(std::cos(deg2rad(std::min(89.0, std::abs(p.lat()) + dlat))), 1e-6);
    const double dlon = std::min(180.0, dlat / coslat);
    const BBox window(std::max(-90.0, p.lat() - dlat), p.lon() - dlon, std::min(90.0, p.lat() + dlat),
                      p.lon() + dlon);
    std::optional<Hit> best;
    for (std::size_t id : candidates(window)) {
        const double d = point_to_polygon_distance(p, rings_[id]);
        if (d <= max_m && (!best || d < best->distance_m)) best = Hit{id, d};
    }
    return best;
}

std::vector<std::size_t> FootprintIndex::intersecting(const BBox& box) const {
    std::vector<std::size_t> out;
    for (std::size_t id : candidates(box))
        if (rings_[id].bounds().intersects(box)) out.push_back(id);
    return out;
}

}  // namespace atlas::geo
