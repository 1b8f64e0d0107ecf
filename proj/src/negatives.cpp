#include "atlas/negatives.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <stdexcept>

#include "atlas/geojson.hpp"
#include "atlas/random.hpp"
#include "atlas/text.hpp"

namespace atlas::negatives {

using nlohmann::json;

ExclusionLexicon::ExclusionLexicon(const std::vector<std::string>& terms) {
    std::set<std::string> seen;
    for (const auto& t : terms) {
        std::string norm = cleanse::normalize_name(t);
        if (!norm.empty() && seen.insert(norm).second) terms_.push_back(std::move(norm));
    }
}

ExclusionLexicon ExclusionLexicon::parse(std::istream& in) {
    std::vector<std::string> terms;
    std::string line;
    while (std::getline(in, line)) {
        if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
        terms.push_back(line);
    }
    return ExclusionLexicon(terms);
}

ExclusionLexicon ExclusionLexicon::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open lexicon: " + path.string());
    return parse(in);
}

std::optional<std::string> ExclusionLexicon::match(const std::string& normalized_name) const {
    for (const auto& t : terms_)
        if (normalized_name.find(t) != std::string::npos) return t;
    return std::nullopt;
}

bool has_school_tag(const ingest::Properties& tags) {
    static const std::set<std::string> kValues{"school", "kindergarten", "college", "university"};
    for (const char* key : {"amenity", "building"}) {
        auto it = tags.find(key);
        if (it != tags.end() && kValues.count(it->second)) return true;
    }
    return false;
}

PoiFilterResult filter_poi_candidates(const std::vector<PoiRecord>& pois, const ExclusionLexicon& lexicon) {
    PoiFilterResult out;
    for (std::size_t i = 0; i < pois.size(); ++i) {
        const auto& poi = pois[i];
        if (has_school_tag(poi.tags)) {
            out.rejects.push_back({i, poi.id, "school tag"});
            continue;
        }
        const std::string name = poi.name ? cleanse::normalize_name(*poi.name) : std::string();
        if (name.empty()) {
            out.rejects.push_back({i, poi.id, "unnamed"});
            continue;
        }
        if (auto term = lexicon.match(name)) {
            out.rejects.push_back({i, poi.id, "lexicon term: " + *term});
            continue;
        }
        out.kept.push_back(poi);
    }
    return out;
}

PoiFilterResult geographic_filter_neg(const std::vector<PoiRecord>& pois, const geo::RasterGrid& landcover,
                                      const geo::FootprintIndex& buildings, int water_class) {
    PoiFilterResult out;
    for (std::size_t i = 0; i < pois.size(); ++i) {
        const auto& poi = pois[i];
        if (sampling::stratum_of(landcover.sample(poi.point)) == water_class) {
            out.rejects.push_back({i, poi.id, "water"});
        } else if (!buildings.containing(poi.point)) {
            out.rejects.push_back({i, poi.id, "outside footprints"});
        } else {
            out.kept.push_back(poi);
        }
    }
    return out;
}

const char* to_string(Origin o) { return o == Origin::poi ? "poi" : "remote"; }

NegativeSamples sample_poi_negatives(const std::vector<PoiRecord>& kept, const geo::RasterGrid& degurba,
                                     std::size_t n, std::uint64_t seed) {
    std::vector<geo::GeoPoint> points;
    std::vector<sampling::StratumKey> strata;
    for (const auto& p : kept) {
        points.push_back(p.point);
        strata.push_back(sampling::stratum_of(degurba.sample(p.point)));
    }
    NegativeSamples out;
    out.sampling = sampling::stratified_sample(points, strata, n, seed);
    for (std::size_t idx : out.sampling.selected)
        out.samples.push_back({kept[idx].id, kept[idx].point, Origin::poi, strata[idx]});
    return out;
}

std::vector<geo::GeoPoint> built_cell_centers(const geo::RasterGrid& builtup, double threshold) {
    std::vector<geo::GeoPoint> out;
    for (int r = 0; r < builtup.nrows(); ++r)
        for (int c = 0; c < builtup.ncols(); ++c) {
            const double v = builtup.at(r, c);
            if (v != builtup.nodata() && v > threshold) out.push_back(builtup.cell_center(r, c));
        }
    return out;
}

RemoteNegatives sample_remote_negatives(const geo::RasterGrid& builtup, const geo::RasterGrid& landcover,
                                        const geo::BBox& aoi, const RemoteOptions& options, std::uint64_t seed) {
    const auto built = built_cell_centers(builtup, options.builtup_threshold);
    const auto index = geo::index_build(built, std::max(0.01, options.min_dist_m / geo::kMetersPerDegree));

    Rng rng(seed);
    RemoteNegatives out;
    std::vector<geo::GeoPoint> pool;
    std::vector<sampling::StratumKey> strata;
    const std::size_t pool_target = options.n * std::max<std::size_t>(1, options.pool_factor);
    while (pool.size() < pool_target && out.draws < options.max_draws) {
        ++out.draws;
        const double lat = rng.uniform(aoi.min_lat, aoi.max_lat);
        const double lon = rng.uniform(aoi.min_lon, aoi.max_lon);
        const geo::GeoPoint p(lat, lon);
        const auto lc = sampling::stratum_of(landcover.sample(p));
        if (!lc || *lc == options.water_class) continue;
        if (index.any_within(p, options.min_dist_m)) continue;
        pool.push_back(p);
        strata.push_back(lc);
    }
    out.pool = pool.size();
    out.starved = pool.size() < options.n;

    out.sampling = sampling::stratified_sample(pool, strata, options.n, rng.next());
    for (std::size_t idx : out.sampling.selected)
        out.samples.push_back({"remote/" + std::to_string(idx), pool[idx], Origin::remote, strata[idx]});
    return out;
}

json negatives_to_geojson(const std::vector<NegativeSample>& samples) {
    json features = json::array();
    for (const auto& s : samples) {
        json props = {{"id", s.id}, {"origin", to_string(s.origin)}};
        props["stratum"] = s.stratum ? json(*s.stratum) : json(nullptr);
        features.push_back(geojson::feature(geojson::point_geometry(s.point), props));
    }
    return geojson::feature_collection(std::move(features));
}

std::vector<NegativeSample> negatives_from_geojson(const json& doc) {
    std::vector<NegativeSample> out;
    for (const auto& f : doc.at("features")) {
        const auto& props = f.at("properties");
        NegativeSample s{props.at("id").get<std::string>(), geojson::parse_point(f.at("geometry")), Origin::poi,
                         std::nullopt};
        const auto origin = props.at("origin").get<std::string>();
        if (origin == "remote") {
            s.origin = Origin::remote;
        } else if (origin != "poi") {
            throw std::invalid_argument("unknown origin: " + origin);
        }
        if (props.contains("stratum") && !props["stratum"].is_null()) s.stratum = props["stratum"].get<int>();
        out.push_back(std::move(s));
    }
    return out;
}

}  // namespace atlas::negatives
