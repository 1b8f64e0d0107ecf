#include "atlas/cleanse.hpp"

#include <algorithm>
#include <map>
#include <numeric>
#include <stdexcept>

namespace atlas::cleanse {

using nlohmann::json;

json MergeLog::to_json() const {
    json cs = json::array();
    for (const auto& c : clusters)
        cs.push_back({{"canonical_id", c.canonical_id},
                      {"member_ids", c.member_ids},
                      {"merged_point", {c.merged_point.lat(), c.merged_point.lon()}}});
    json ls = json::array();
    for (const auto& l : links)
        ls.push_back({{"a", l.a}, {"b", l.b}, {"distance_m", l.distance_m}, {"similarity", l.similarity}});
    return {{"clusters", cs}, {"links", ls}};
}

namespace {

class UnionFind {
public:
    explicit UnionFind(std::size_t n) : parent_(n) { std::iota(parent_.begin(), parent_.end(), std::size_t{0}); }
    std::size_t find(std::size_t x) {
        while (parent_[x] != x) x = parent_[x] = parent_[parent_[x]];
        return x;
    }
    void unite(std::size_t a, std::size_t b) {
        a = find(a);
        b = find(b);
        if (a != b) parent_[std::max(a, b)] = std::min(a, b);
    }

private:
    std::vector<std::size_t> parent_;
};

}  // namespace

std::pair<std::vector<SchoolRecord>, MergeLog> dedup_schools(const std::vector<SchoolRecord>& records,
                                                             const DedupOptions& options) {
    const std::size_t n = records.size();
    std::vector<std::string> names(n);
    geo::SpatialIndex index(std::max(0.01, options.radius_m / geo::kMetersPerDegree));
    for (std::size_t i = 0; i < n; ++i) {
        if (!records[i].point) throw std::invalid_argument("dedup requires points: " + records[i].id);
        names[i] = normalize_name(records[i].name);
        index.insert(i, *records[i].point);
    }

    MergeLog log;
    UnionFind uf(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j : index.query_radius(*records[i].point, options.radius_m)) {
            if (j <= i) continue;
            const double sim = name_similarity(names[i], names[j]);
            if (sim < options.sim_min) continue;
            uf.unite(i, j);
            const double d = geo::haversine_distance(*records[i].point, *records[j].point);
            const bool ordered = records[i].id < records[j].id;
            log.links.push_back({ordered ? records[i].id : records[j].id, ordered ? records[j].id : records[i].id, d, sim});
        }
    }
    std::sort(log.links.begin(), log.links.end(),
              [](const MergeLink& x, const MergeLink& y) { return std::tie(x.a, x.b) < std::tie(y.a, y.b); });

    std::map<std::size_t, std::vector<std::size_t>> components;
    for (std::size_t i = 0; i < n; ++i) components[uf.find(i)].push_back(i);

    // One output record per component, placed at its canonical member's position.
    std::vector<std::pair<std::size_t, SchoolRecord>> merged;
    for (auto& [root, members] : components) {
        std::sort(members.begin(), members.end(),
                  [&](std::size_t a, std::size_t b) { return records[a].id < records[b].id; });
        const std::size_t canon = members.front();
        SchoolRecord out = records[canon];
        if (members.size() > 1) {
            const double lon0 = records[canon].point->lon();
            double sum_lat = 0.0, sum_dlon = 0.0;
            MergeCluster cluster;
            cluster.canonical_id = out.id;
            for (std::size_t m : members) {
                const auto& r = records[m];
                sum_lat += r.point->lat();
                double dlon = r.point->lon() - lon0;
                if (dlon >= 180.0) dlon -= 360.0;
                if (dlon < -180.0) dlon += 360.0;
                sum_dlon += dlon;
                cluster.member_ids.push_back(r.id);
                if (m == canon) continue;
                for (const auto& [k, v] : r.meta) out.meta.emplace(k, v);
                if (!out.admin_zone) out.admin_zone = r.admin_zone;
                if (!out.address) out.address = r.address;
            }
            const double k = static_cast<double>(members.size());
            out.point = geo::GeoPoint(sum_lat / k, lon0 + sum_dlon / k);
            cluster.merged_point = *out.point;
            log.clusters.push_back(std::move(cluster));
        }
        merged.emplace_back(canon, std::move(out));
    }
    std::sort(merged.begin(), merged.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
    std::sort(log.clusters.begin(), log.clusters.end(),
              [](const MergeCluster& a, const MergeCluster& b) { return a.canonical_id < b.canonical_id; });

    std::vector<SchoolRecord> out;
    out.reserve(merged.size());
    for (auto& [pos, rec] : merged) out.push_back(std::move(rec));
    return {std::move(out), std::move(log)};
}

const char* to_string(RemovalReason r) {
    switch (r) {
        case RemovalReason::water: return "water";
        case RemovalReason::far_from_building: return "far_from_building";
        case RemovalReason::zone_mismatch: return "zone_mismatch";
        case RemovalReason::no_coordinates: return "no_coordinates";
    }
    return "unknown";
}

json FilterReport::to_json() const {
    json rm = json::array();
    for (const auto& [id, reason] : removed) rm.push_back({{"id", id}, {"reason", to_string(reason)}});
    return {{"kept", kept}, {"removed", rm}, {"no_landcover", no_landcover}};
}

FilterReport geographic_filter(const std::vector<SchoolRecord>& records, const geo::RasterGrid& landcover,
                               const geo::FootprintIndex& buildings, const GeoFilterOptions& options) {
    FilterReport report;
    for (const auto& r : records) {
        if (!r.point) {
            report.removed.emplace_back(r.id, RemovalReason::no_coordinates);
            continue;
        }
        const auto lc = landcover.sample(*r.point);
        if (!lc) {
            report.no_landcover.push_back(r.id);
        } else if (sampling::stratum_of(lc) == options.water_class) {
            report.removed.emplace_back(r.id, RemovalReason::water);
            continue;
        }
        if (!buildings.nearest(*r.point, options.max_dist_m)) {
            report.removed.emplace_back(r.id, RemovalReason::far_from_building);
            continue;
        }
        report.kept.push_back(r.id);
    }
    return report;
}

ThinResult stratified_thin(const std::vector<SchoolRecord>& records, const geo::RasterGrid& degurba,
                           const ThinOptions& options) {
    std::vector<geo::GeoPoint> points;
    std::vector<sampling::StratumKey> strata;
    for (const auto& r : records) {
        if (!r.point) throw std::invalid_argument("stratified_thin requires points: " + r.id);
        points.push_back(*r.point);
        strata.push_back(sampling::stratum_of(degurba.sample(*r.point)));
    }
    ThinResult out;
    out.sampling = sampling::stratified_sample(points, strata, options.target_total, options.seed, options.min_spacing_m);
    for (std::size_t idx : out.sampling.selected) out.selected.push_back(records[idx]);
    return out;
}

}  // namespace atlas::cleanse
