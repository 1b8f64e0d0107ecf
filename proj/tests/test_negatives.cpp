#include <set>
#include <sstream>

#include "atlas/negatives.hpp"
#include "atlas/random.hpp"
#include "atlas/text.hpp"
#include "doctest.h"

using namespace atlas;
using namespace atlas::negatives;
using geo::GeoPoint;

namespace {

constexpr double kM = 1.0 / geo::kMetersPerDegree;

PoiRecord poi(std::string id, std::optional<std::string> name, GeoPoint p, ingest::Properties tags = {}) {
    return {std::move(id), std::move(name), std::move(tags), p};
}

geo::PolygonRing square(double lat0, double lon0, double size) {
    return geo::PolygonRing({{lat0, lon0}, {lat0, lon0 + size}, {lat0 + size, lon0 + size}, {lat0 + size, lon0}, {lat0, lon0}});
}

geo::RasterGrid uniform_grid(int n, double xll, double yll, double cell, double value,
                             geo::RasterKind kind = geo::RasterKind::categorical) {
    return geo::RasterGrid(n, n, xll, yll, cell, -9999, std::vector<double>(static_cast<std::size_t>(n) * n, value), kind);
}

}  // namespace

TEST_CASE("exclusion lexicon") {
    std::istringstream in("# school synonyms\nSchool\nÉcole  # french\n\nshule\nschool\n");
    auto lex = ExclusionLexicon::parse(in);
    CHECK(lex.terms() == std::vector<std::string>{"school", "ecole", "shule"});
    CHECK(lex.match("st jude school annex") == std::optional<std::string>("school"));
    CHECK(lex.match("ecole primaire") == std::optional<std::string>("ecole"));
    CHECK_FALSE(lex.match("central market"));
}

TEST_CASE("poi candidate filter") {
    ExclusionLexicon lex({"school", "ecole", "academy"});
    std::vector<PoiRecord> in{
        poi("1", "Central Market", {0, 0}),
        poi("2", "St. Jude School Annex", {0, 0}),
        poi("3", std::nullopt, {0, 0}),
        poi("4", "  ", {0, 0}),
        poi("5", "Hilltop", {0, 0}, {{"amenity", "school"}}),
        poi("6", "ÉCOLE DU LAC", {0, 0}),
        poi("7", "Kigali Pharmacy", {0, 0}, {{"amenity", "pharmacy"}}),
    };
    auto res = filter_poi_candidates(in, lex);
    REQUIRE(res.kept.size() == 2);
    CHECK(res.kept[0].id == "1");
    CHECK(res.kept[1].id == "7");
    std::vector<std::string> reasons;
    for (const auto& r : res.rejects) reasons.push_back(r.reason);
    CHECK(reasons == std::vector<std::string>{"lexicon term: school", "unnamed", "unnamed", "school tag",
                                              "lexicon term: ecole"});
}

TEST_CASE("poi filter never keeps unnamed or lexicon-matching names") {
    const std::vector<std::string> terms{"school", "shule", "ecole", "college"};
    ExclusionLexicon lex(terms);
    const std::vector<std::string> words{"market", "School", "church", "SHULE", "bank", "École", "hotel",
                                         "collège", "shop", "clinic", "", "  "};
    Rng rng(4);
    std::vector<PoiRecord> in;
    for (int i = 0; i < 2000; ++i) {
        std::optional<std::string> name;
        if (rng.below(10) != 0) {
            name = words[rng.below(words.size())] + " " + words[rng.below(words.size())];
        }
        in.push_back(poi(std::to_string(i), name, {0, 0}));
    }
    auto res = filter_poi_candidates(in, lex);
    CHECK(res.kept.size() + res.rejects.size() == in.size());
    CHECK_FALSE(res.kept.empty());
    for (const auto& k : res.kept) {
        REQUIRE(k.name);
        const auto norm = cleanse::normalize_name(*k.name);
        CHECK_FALSE(norm.empty());
        for (const auto& t : terms) CHECK(norm.find(t) == std::string::npos);
    }
}

TEST_CASE("poi geographic filter requires containment") {
    geo::RasterGrid lc(2, 1, 0.0, 0.0, 0.01, -9999, {80, 50}, geo::RasterKind::categorical);
    geo::FootprintIndex buildings({square(0.004, 0.014, 0.001), square(0.004, 0.004, 0.001)});
    std::vector<PoiRecord> in{
        poi("inside", "a", {0.0045, 0.0145}),
        poi("outside10m", "b", {0.0045, 0.014 - 10 * kM}),
        poi("water", "c", {0.0045, 0.0045}),
    };
    auto res = geographic_filter_neg(in, lc, buildings);
    REQUIRE(res.kept.size() == 1);
    CHECK(res.kept[0].id == "inside");
    REQUIRE(res.rejects.size() == 2);
    CHECK(res.rejects[0].reason == "outside footprints");
    CHECK(res.rejects[1].reason == "water");
}

TEST_CASE("poi negative sampling") {
    // Column 0 is DEGURBA 30, column 1 is 11.
    geo::RasterGrid degurba(2, 1, 0.0, 0.0, 1.0, -9999, {30, 11}, geo::RasterKind::categorical);
    Rng rng(3);
    std::vector<PoiRecord> kept;
    for (int i = 0; i < 100; ++i)
        kept.push_back(poi("p" + std::to_string(i), "x", {rng.uniform(0.1, 0.9), i < 75 ? 0.5 : 1.5}));

    auto all = sample_poi_negatives(kept, degurba, 8000, 1);
    CHECK(all.samples.size() == 100);
    CHECK(all.sampling.shortfall == 7900);

    auto eight = sample_poi_negatives(kept, degurba, 8, 1);
    CHECK(eight.sampling.quotas.at(30) == 6);
    CHECK(eight.sampling.quotas.at(11) == 2);
    CHECK(eight.samples.size() == 8);
    for (const auto& s : eight.samples) CHECK(s.origin == Origin::poi);
    CHECK(sample_poi_negatives(kept, degurba, 8, 1).samples == eight.samples);

    std::vector<PoiRecord> single(kept.begin(), kept.begin() + 75);
    auto sub = sample_poi_negatives(single, degurba, 10, 9);
    std::set<std::string> ids;
    for (const auto& s : sub.samples) ids.insert(s.id);
    CHECK(ids.size() == 10);
}

TEST_CASE("remote negatives") {
    const geo::BBox aoi(0.0, 0.0, 0.2, 0.2);
    auto land = uniform_grid(20, 0.0, 0.0, 0.01, 10);

    SUBCASE("no built cells: every land draw is accepted") {
        auto none = uniform_grid(20, 0.0, 0.0, 0.01, 0, geo::RasterKind::continuous);
        RemoteOptions opt;
        opt.n = 50;
        auto res = sample_remote_negatives(none, land, aoi, opt, 5);
        CHECK(res.draws == 150);
        CHECK(res.pool == 150);
        CHECK(res.samples.size() == 50);
        CHECK_FALSE(res.starved);
    }

    SUBCASE("every sample is farther than the minimum distance from all built cells") {
        Rng rng(17);
        std::vector<double> values(400, 0.0);
        for (int k = 0; k < 12; ++k) values[rng.below(400)] = rng.uniform(1.0, 50.0);
        geo::RasterGrid built(20, 20, 0.0, 0.0, 0.01, -9999, values);
        // Water in one column.
        std::vector<double> lcv(400, 10.0);
        for (int r = 0; r < 20; ++r) lcv[static_cast<std::size_t>(r) * 20 + 3] = 80;
        for (int r = 0; r < 20; ++r) lcv[static_cast<std::size_t>(r) * 20 + 15] = 40;
        geo::RasterGrid lc(20, 20, 0.0, 0.0, 0.01, -9999, lcv, geo::RasterKind::categorical);

        RemoteOptions opt;
        opt.n = 300;
        auto a = sample_remote_negatives(built, lc, aoi, opt, 11);
        REQUIRE(a.samples.size() == 300);
        std::vector<GeoPoint> centres;
        for (int r = 0; r < 20; ++r)
            for (int c = 0; c < 20; ++c)
                if (built.at(r, c) > 0) centres.push_back(built.cell_center(r, c));
        REQUIRE_FALSE(centres.empty());
        double min_d = 1e18;
        for (const auto& s : a.samples) {
            for (const auto& c : centres) min_d = std::min(min_d, geo::haversine_distance(s.point, c));
            CHECK(lc.sample(s.point).value() != 80);
            CHECK(s.origin == Origin::remote);
        }
        CHECK(min_d > 1000.0);
        CHECK(sample_remote_negatives(built, lc, aoi, opt, 11).samples == a.samples);
    }

    SUBCASE("draws within 500 m of a built cell are rejected") {
        std::vector<double> values(400, 0.0);
        values[10 * 20 + 10] = 1.0;
        geo::RasterGrid built(20, 20, 0.0, 0.0, 0.01, -9999, values);
        const auto c = built.cell_center(10, 10);
        const geo::BBox tiny(c.lat() - 0.003, c.lon() - 0.003, c.lat() + 0.003, c.lon() + 0.003);  // < 500 m
        RemoteOptions opt;
        opt.n = 5;
        opt.max_draws = 1000;
        auto res = sample_remote_negatives(built, land, tiny, opt, 1);
        CHECK(res.draws == 1000);
        CHECK(res.samples.empty());
        CHECK(res.starved);
    }
}

TEST_CASE("negatives geojson round trip") {
    std::vector<NegativeSample> s{{"a", {1.5, 2.25}, Origin::poi, 30}, {"remote/3", {-1, 31}, Origin::remote, 10},
                                  {"b", {0, 0}, Origin::poi, std::nullopt}};
    CHECK(negatives_from_geojson(negatives_to_geojson(s)) == s);
}
