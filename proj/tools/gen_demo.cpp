// gen_demo: writes the synthetic mini-country used by the demo config.
//
//   gen_demo <out-dir> [--seed N]

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "atlas/csv.hpp"
#include "atlas/format.hpp"
#include "atlas/geo.hpp"
#include "atlas/geojson.hpp"
#include "atlas/ingest.hpp"
#include "atlas/random.hpp"
#include "atlas/raster.hpp"

namespace fs = std::filesystem;
using namespace atlas;
using geo::GeoPoint;
using nlohmann::json;

namespace {

constexpr double kMinLon = 30.0, kMinLat = -2.0, kSpan = 2.0, kCell = 0.01;
constexpr int kGrid = 200;

struct Settlement {
    std::string name;
    GeoPoint center;
    double radius_deg;
    double peak;  // people per km2 at the centre
    bool town;
    bool served = true;
};

struct Lake {
    GeoPoint center{-1.55, 31.55};
    double radius_deg = 0.18;
    bool contains(const GeoPoint& p) const {
        const double dl = p.lat() - center.lat(), dn = p.lon() - center.lon();
        return dl * dl + dn * dn <= radius_deg * radius_deg;
    }
};

GeoPoint offset(const GeoPoint& p, double north_m, double east_m) {
    const double dlat = north_m / geo::kMetersPerDegree;
    const double dlon = east_m / (geo::kMetersPerDegree * std::cos(geo::deg2rad(p.lat())));
    return {p.lat() + dlat, p.lon() + dlon};
}

geo::PolygonRing rect(const GeoPoint& c, double w_m, double h_m) {
    const auto sw = offset(c, -h_m / 2, -w_m / 2), ne = offset(c, h_m / 2, w_m / 2);
    return geo::PolygonRing({{sw.lat(), sw.lon()},
                             {sw.lat(), ne.lon()},
                             {ne.lat(), ne.lon()},
                             {ne.lat(), sw.lon()},
                             {sw.lat(), sw.lon()}});
}

class World {
public:
    explicit World(std::uint64_t seed) : rng_(seed) {
        const char* town_names[] = {"Kalima", "Bunda",  "Moroto", "Nyanza", "Rukiga",
                                    "Tamba",  "Lwanda", "Sigiri", "Ombeni", "Karago"};
        for (const char* name : town_names) {
            GeoPoint c;
            do c = random_point(0.15);
            while (near_lake(c, 0.1));
            settlements_.push_back({name, c, rng_.uniform(0.02, 0.05), rng_.uniform(2500.0, 6000.0), true});
        }
        const char* roots[] = {"Ki", "Ma", "Nya", "Bu", "Ru", "Ka", "Lu", "Mbo", "Shi", "Tu", "Ga", "Ndi"};
        const char* ends[] = {"sasi", "tende", "gomba", "lolo", "wanda", "bira", "seke", "mero", "kuni", "tobo"};
        for (int i = 0; i < 70; ++i) {
            GeoPoint c;
            do c = random_point(0.05);
            while (near_lake(c, 0.03));
            std::string name = std::string(roots[rng_.below(std::size(roots))]) + ends[rng_.below(std::size(ends))];
            name += " " + std::to_string(i + 1);
            settlements_.push_back({name, c, rng_.uniform(0.006, 0.012), rng_.uniform(600.0, 1400.0), false, i < 45});
        }
    }

    GeoPoint random_point(double margin) {
        return {kMinLat + margin + rng_.uniform() * (kSpan - 2 * margin),
                kMinLon + margin + rng_.uniform() * (kSpan - 2 * margin)};
    }
    bool near_lake(const GeoPoint& p, double pad) const {
        const double dl = p.lat() - lake_.center.lat(), dn = p.lon() - lake_.center.lon();
        return std::sqrt(dl * dl + dn * dn) < lake_.radius_deg + pad;
    }
    GeoPoint around(const Settlement& s, double spread = 1.0) {
        for (;;) {
            const double r = s.radius_deg * spread * std::sqrt(rng_.uniform());
            const double a = rng_.uniform(0.0, 2 * geo::kPi);
            GeoPoint p(s.center.lat() + r * std::sin(a), s.center.lon() + r * std::cos(a));
            if (!lake_.contains(p) && p.lon() > kMinLon && p.lon() < kMinLon + kSpan && p.lat() > kMinLat &&
                p.lat() < kMinLat + kSpan)
                return p;
        }
    }

    double population(const GeoPoint& p) const {
        if (lake_.contains(p)) return 0.0;
        double v = 8.0 + 6.0 * (1.0 + std::sin(p.lon() * 7.0) * std::cos(p.lat() * 5.0));
        for (const auto& s : settlements_) {
            const double dl = p.lat() - s.center.lat(), dn = p.lon() - s.center.lon();
            v += s.peak * std::exp(-(dl * dl + dn * dn) / (2 * s.radius_deg * s.radius_deg));
        }
        return v;
    }
    double elevation(const GeoPoint& p) const {
        return 1100.0 + 400.0 * std::sin(p.lat() * 3.1 + 0.4) * std::cos(p.lon() * 2.3) + 250.0 * (p.lon() - kMinLon);
    }

    Rng& rng() { return rng_; }
    std::vector<Settlement>& settlements() { return settlements_; }
    const Lake& lake() const { return lake_; }

private:
    Rng rng_;
    Lake lake_;
    std::vector<Settlement> settlements_;
};

geo::RasterGrid grid_of(const std::function<double(const GeoPoint&)>& fn) {
    std::vector<double> values;
    values.reserve(kGrid * kGrid);
    for (int r = 0; r < kGrid; ++r)
        for (int c = 0; c < kGrid; ++c) {
            const GeoPoint p(kMinLat + kSpan - (r + 0.5) * kCell, kMinLon + (c + 0.5) * kCell);
            values.push_back(fn(p));
        }
    return geo::RasterGrid(kGrid, kGrid, kMinLon, kMinLat, kCell, -9999.0, std::move(values));
}

double round_to(double v, double step) { return std::round(v / step) * step; }

void write_text(const fs::path& p, const std::string& text) {
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    out << text;
}

std::string zone_of(const GeoPoint& p) {
    const bool north = p.lat() >= kMinLat + kSpan / 2, east = p.lon() >= kMinLon + kSpan / 2;
    return std::string(north ? "N" : "S") + (east ? "E" : "W");
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Synthetic demo data generator"};
    std::string out_dir;
    std::uint64_t seed = 7;
    app.add_option("out", out_dir, "Output directory")->required();
    app.add_option("--seed", seed, "Generator seed");
    CLI11_PARSE(app, argc, argv);

    const fs::path out(out_dir);
    World world(seed);
    auto& rng = world.rng();

    // ---- rasters --------------------------------------------------------------
    auto pop = grid_of([&](const GeoPoint& p) { return round_to(world.population(p), 0.1); });
    auto built = grid_of([&](const GeoPoint& p) {
        return round_to(std::clamp((world.population(p) - 900.0) / 3000.0, 0.0, 1.0), 0.001);
    });
    auto landcover = grid_of([&](const GeoPoint& p) {
        if (world.lake().contains(p)) return 80.0;
        if (world.population(p) > 900.0) return 50.0;
        const double h = std::sin(p.lat() * 41.0) + std::cos(p.lon() * 37.0) + 0.5 * std::sin((p.lat() + p.lon()) * 90.0);
        if (h > 1.0) return 10.0;
        if (h > 0.2) return 40.0;
        if (h > -0.8) return 30.0;
        return 20.0;
    });
    auto degurba = grid_of([&](const GeoPoint& p) {
        if (world.lake().contains(p)) return 10.0;
        const double v = world.population(p);
        if (v > 1500) return 30.0;
        if (v > 800) return 22.0;
        if (v > 300) return 21.0;
        if (v > 100) return 13.0;
        if (v > 40) return 12.0;
        return 11.0;
    });
    auto terrain = grid_of([&](const GeoPoint& p) {
        return std::clamp(std::floor((world.elevation(p) - 700.0) / 200.0), 1.0, 6.0);
    });
    auto climate = grid_of([&](const GeoPoint& p) {
        if (world.elevation(p) > 1500.0) return 14.0;  // Cfb
        if (p.lat() > -0.6) return 1.0;                // Af
        return p.lon() < 30.8 ? 2.0 : 3.0;             // Am, Aw
    });
    auto nightlights = grid_of([&](const GeoPoint& p) {
        const double v = world.population(p);
        return round_to(v > 200 ? 0.015 * v : 0.0, 0.01);
    });
    const std::pair<const char*, geo::RasterGrid*> rasters[] = {
        {"climate.asc", &climate},     {"landcover.asc", &landcover}, {"terrain.asc", &terrain},
        {"population.asc", &pop},      {"degurba.asc", &degurba},     {"nightlights.asc", &nightlights},
        {"builtup.asc", &built}};
    fs::create_directories(out / "rasters");
    for (const auto& [name, g] : rasters) geo::write_ascii_grid(out / "rasters" / name, *g);

    // ---- buildings and schools ------------------------------------------------
    json osm = json::array(), microsoft = json::array(), google = json::array();
    int building_seq = 0;
    auto add_building = [&](json& layer, const geo::PolygonRing& ring, std::optional<double> confidence) {
        json props = {{"id", "b" + std::to_string(++building_seq)}};
        if (confidence) props["confidence"] = round_to(*confidence, 0.01);
        layer.push_back(geojson::feature(geojson::polygon_geometry(ring), props));
    };
    auto compound = [&](json& layer, const GeoPoint& site, std::optional<double> confidence) {
        add_building(layer, rect(offset(site, 5, 0), 60, 30), confidence);
        const int blocks = 2 + static_cast<int>(rng.below(3));
        for (int b = 0; b < blocks; ++b)
            add_building(layer, rect(offset(site, rng.uniform(-45, -20), rng.uniform(-40, 40)), 18, 10), confidence);
    };

    const char* prefixes[] = {"St Mary", "St Joseph", "Hilltop", "Riverside", "Unity", "Victory", "Bright Star",
                              "Green Valley", "Holy Cross", "Lakeview", "Mount Zion", "Good Shepherd", "Sunrise",
                              "Kings", "Bethel", "Mwangaza", "Upendo", "Amani", "Tumaini", "Baraka"};
    const char* kinds[] = {"Primary School", "Secondary School", "Community School", "Junior School", "High School",
                           "Nursery and Primary School"};

    std::vector<std::vector<std::string>> rows;
    int school_seq = 0;
    auto school_name = [&](const Settlement& s) {
        return std::string(prefixes[rng.below(std::size(prefixes))]) + " " + s.name.substr(0, s.name.find(' ')) + " " +
               kinds[rng.below(std::size(kinds))];
    };
    auto add_school = [&](const std::string& name, std::optional<GeoPoint> p, const std::string& zone,
                          const std::string& address, const std::string& source, const std::string& level) {
        const std::string id = "S" + std::to_string(10000 + ++school_seq);
        rows.push_back({id, name, p ? format_double(round_to(p->lat(), 1e-6)) : "",
                        p ? format_double(round_to(p->lon(), 1e-6)) : "", zone, address, source, level});
        return id;
    };

    std::vector<std::pair<std::string, GeoPoint>> listed;  // located schools with a compound
    for (auto& s : world.settlements()) {
        if (!s.served) continue;
        const int n = s.town ? 24 + static_cast<int>(rng.below(12)) : 2 + static_cast<int>(rng.below(3));
        for (int i = 0; i < n; ++i) {
            const auto site = world.around(s, s.town ? 2.2 : 1.2);
            compound(osm, site, std::nullopt);
            const auto name = school_name(s);
            const auto p = offset(site, rng.uniform(-10, 10), rng.uniform(-10, 10));
            add_school(name, p, zone_of(p), "", "official", s.town ? "urban" : "rural");
            listed.emplace_back(name, p);
        }
    }
    for (int i = 0; i < 65; ++i) {  // rural schools away from settlements
        GeoPoint site;
        do site = world.random_point(0.05);
        while (world.lake().contains(site));
        compound(osm, site, std::nullopt);
        const std::string name = std::string(prefixes[rng.below(std::size(prefixes))]) + " Rural " + kinds[rng.below(3)];
        add_school(name + " " + std::to_string(i + 1), site, zone_of(site), "", "official", "rural");
    }
    // OSM copies of listed schools: a few metres away, same name up to punctuation and case.
    for (int i = 0; i < 25; ++i) {
        const auto& [name, p] = listed[rng.below(listed.size())];
        std::string variant = name;
        if (variant.rfind("St ", 0) == 0) variant.insert(2, ".");
        else for (auto& ch : variant) ch = static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
        const auto q = offset(p, rng.uniform(-8, 8), rng.uniform(-8, 8));
        add_school(variant, q, zone_of(q), "", "osm", "");
    }
    for (int i = 0; i < 6; ++i) {  // coordinates in the lake
        const double a = rng.uniform(0.0, 2 * geo::kPi), r = world.lake().radius_deg * 0.6 * std::sqrt(rng.uniform());
        const GeoPoint p(world.lake().center.lat() + r * std::sin(a), world.lake().center.lon() + r * std::cos(a));
        add_school("Island View School " + std::to_string(i + 1), p, zone_of(p), "", "official", "rural");
    }
    for (int i = 0; i < 10; ++i) {  // no building nearby
        GeoPoint p;
        do p = world.random_point(0.05);
        while (world.lake().contains(p));
        add_school("Bush Camp School " + std::to_string(i + 1), p, zone_of(p), "", "official", "rural");
    }

    // Schools without coordinates, resolved through the geocoder fixture.
    json geocoder = json::object();
    for (int i = 0; i < 15; ++i) {
        auto& s = world.settlements()[rng.below(10)];
        const auto site = world.around(s, 1.4);
        const std::string name = "Kilimo " + s.name + " School " + std::to_string(i + 1);
        const std::string address = "Plot " + std::to_string(100 + i) + " " + s.name + " Road";
        std::string zone = zone_of(site);
        const std::string key = ingest::geocoder_query_key(name, address);
        if (i < 10) {
            compound(osm, site, std::nullopt);
            geocoder[key] = {{"lat", round_to(site.lat(), 1e-6)}, {"lon", round_to(site.lon(), 1e-6)}};
        } else if (i < 13) {
            zone = zone == "NE" ? "SW" : "NE";
            geocoder[key] = {{"lat", round_to(site.lat(), 1e-6)}, {"lon", round_to(site.lon(), 1e-6)}};
        } else {
            geocoder[key] = {{"error", "timeout"}};
        }
        add_school(name, std::nullopt, zone, address, "official", "");
    }

    // Unlisted compounds in unserved villages, known only to the Microsoft layer.
    for (auto& s : world.settlements()) {
        if (s.served) continue;
        compound(microsoft, world.around(s, 0.8), 0.95);
    }

    // Houses.
    std::vector<geo::PolygonRing> osm_houses;
    for (auto& s : world.settlements()) {
        const int n = s.town ? 60 : 12;
        for (int i = 0; i < n; ++i) {
            const auto ring = rect(world.around(s, s.town ? 2.0 : 1.5), rng.uniform(8, 14), rng.uniform(8, 12));
            add_building(osm, ring, std::nullopt);
            osm_houses.push_back(ring);
        }
    }
    for (std::size_t i = 0; i < osm_houses.size(); i += 3) {  // re-detections of mapped houses
        const auto c = osm_houses[i].centroid();
        add_building(microsoft, rect(offset(c, 2, 2), 10, 10), rng.uniform(0.75, 0.99));
    }
    for (int i = 0; i < 250; ++i) {
        auto& s = world.settlements()[10 + rng.below(world.settlements().size() - 10)];
        add_building(i % 2 ? google : microsoft, rect(world.around(s, 2.0), 10, 9), rng.uniform(0.4, 1.0));
    }

    // Malformed rows the reader has to reject.
    rows.push_back({"S19998", "", "-1.1", "30.5", "SW", "", "official", ""});
    rows.push_back({"S19999", "Faraway School", "-95.0", "30.5", "SW", "", "official", ""});

    // ---- POIs -----------------------------------------------------------------
    json pois = json::array();
    int poi_seq = 0;
    const char* poi_kinds[][2] = {{"amenity", "clinic"},      {"amenity", "place_of_worship"}, {"shop", "supermarket"},
                                  {"amenity", "bank"},        {"amenity", "restaurant"},       {"amenity", "marketplace"},
                                  {"amenity", "fuel"},        {"shop", "hardware"},            {"amenity", "police"},
                                  {"amenity", "post_office"}, {"shop", "tailor"},              {"amenity", "pharmacy"}};
    const char* poi_words[] = {"Market", "Clinic", "Church", "Bank", "Hotel", "Stores", "Petrol Station", "Hardware",
                               "Police Post", "Post Office", "Tailors", "Pharmacy"};
    auto add_poi = [&](const GeoPoint& p, std::optional<std::string> name, std::string k, std::string v, bool footprint) {
        if (footprint) add_building(osm, rect(p, 14, 12), std::nullopt);
        json tags = {{k, v}};
        if (name) tags["name"] = *name;
        pois.push_back(geojson::feature(geojson::point_geometry({round_to(p.lat(), 1e-6), round_to(p.lon(), 1e-6)}),
                                        {{"id", "node/" + std::to_string(500000 + ++poi_seq)}, {"tags", tags}}));
    };
    for (int i = 0; i < 400; ++i) {
        auto& s = world.settlements()[i < 340 ? rng.below(10) : 10 + rng.below(world.settlements().size() - 10)];
        const std::size_t k = rng.below(std::size(poi_kinds));
        const std::string base = s.name.substr(0, s.name.find(' ')) + " " + poi_words[k] + " " + std::to_string(i + 1);
        if (i % 20 == 0) {
            add_poi(world.around(s, s.town ? 0.7 : 1.0), std::nullopt, poi_kinds[k][0], poi_kinds[k][1], true);
        } else if (i % 20 == 1) {
            add_poi(world.around(s, s.town ? 0.7 : 1.0), s.name.substr(0, s.name.find(' ')) + " Bright Future Academy", "amenity",
                    "community_centre", true);
        } else if (i % 20 == 2) {
            add_poi(world.around(s, s.town ? 0.7 : 1.0), base, "amenity", "school", true);
        } else if (i % 20 == 3) {
            add_poi(world.around(s, s.town ? 0.7 : 1.0), base, poi_kinds[k][0], poi_kinds[k][1], false);
        } else {
            add_poi(world.around(s, s.town ? 0.7 : 1.0), base, poi_kinds[k][0], poi_kinds[k][1], true);
        }
    }
    for (int i = 0; i < 8; ++i) {  // on the lake
        const GeoPoint p(world.lake().center.lat() + 0.01 * i, world.lake().center.lon() - 0.01 * i);
        add_poi(p, "Ferry Landing " + std::to_string(i + 1), "amenity", "ferry_terminal", true);
    }

    // ---- admin zones ----------------------------------------------------------
    json zones = json::array();
    for (const char* code : {"NW", "NE", "SW", "SE"}) {
        const double lat0 = code[0] == 'N' ? kMinLat + kSpan / 2 : kMinLat;
        const double lon0 = code[1] == 'E' ? kMinLon + kSpan / 2 : kMinLon;
        const double h = kSpan / 2;
        geo::PolygonRing ring({{lat0, lon0}, {lat0, lon0 + h}, {lat0 + h, lon0 + h}, {lat0 + h, lon0}, {lat0, lon0}});
        zones.push_back(geojson::feature(geojson::polygon_geometry(ring), {{"code", code}, {"name", std::string("Region ") + code}}));
    }

    // ---- write ----------------------------------------------------------------
    std::string csv = "school_id,school_name,latitude,longitude,district,address,source,level\n";
    for (const auto& row : rows) {
        for (std::size_t i = 0; i < row.size(); ++i) csv += (i ? "," : "") + csv::escape(row[i]);
        csv += "\n";
    }
    write_text(out / "schools.csv", csv);
    geojson::write_json_file(out / "pois.geojson", geojson::feature_collection(pois));
    geojson::write_json_file(out / "buildings_osm.geojson", geojson::feature_collection(osm));
    geojson::write_json_file(out / "buildings_microsoft.geojson", geojson::feature_collection(microsoft));
    geojson::write_json_file(out / "buildings_google.geojson", geojson::feature_collection(google));
    geojson::write_json_file(out / "admin_zones.geojson", geojson::feature_collection(zones));
    geojson::write_json_file(out / "geocoder.json", geocoder);

    std::cout << "schools: " << rows.size() << " rows, pois: " << pois.size() << ", buildings: " << osm.size()
              << " osm / " << microsoft.size() << " microsoft / " << google.size() << " google\n";
    return 0;
}
