#include <cmath>
#include <cstring>
#include <set>
#include <sstream>

#include "atlas/features.hpp"
#include "atlas/random.hpp"
#include "doctest.h"

using namespace atlas;
using namespace atlas::features;
using geo::GeoPoint;

namespace {

geo::RasterGrid grid(double value, geo::RasterKind kind = geo::RasterKind::categorical) {
    return geo::RasterGrid(4, 4, 0.0, 0.0, 0.25, -9999, std::vector<double>(16, value), kind);
}

RasterStack full_stack() {
    return {grid(2), grid(10), grid(3), grid(120.5, geo::RasterKind::continuous), grid(30),
            grid(4.25, geo::RasterKind::continuous)};
}

}  // namespace

TEST_CASE("coordinate encoding") {
    auto a = encode_coordinates({0, 0});
    CHECK(a == std::array<double, 4>{0, 1, 0, 1});
    auto b = encode_coordinates({90, 0});
    CHECK(b[0] == 1.0);
    CHECK(b[1] == doctest::Approx(0.0));
    auto c = encode_coordinates({0, -180});  // 180 normalizes to -180
    CHECK(c[2] == doctest::Approx(0.0));
    CHECK(c[3] == -1.0);

    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
        auto e = encode_coordinates({rng.uniform(-90, 90), rng.uniform(-180, 180)});
        CHECK(std::abs(e[0] * e[0] + e[1] * e[1] - 1.0) <= 1e-12);
        CHECK(std::abs(e[2] * e[2] + e[3] * e[3] - 1.0) <= 1e-12);
    }
}

TEST_CASE("feature extraction") {
    auto stack = full_stack();
    auto ex = extract_features({0.5, 0.5}, stack);
    REQUIRE(ex.features);
    const auto& fv = *ex.features;
    CHECK(fv[4] == 2);
    CHECK(fv[5] == 10);
    CHECK(fv[6] == 3);
    CHECK(fv[7] == 120.5);
    CHECK(fv[8] == 30);
    CHECK(fv[9] == 4.25);

    stack.nightlights = grid(-9999, geo::RasterKind::continuous);
    ex = extract_features({0.5, 0.5}, stack);
    REQUIRE(ex.features);
    CHECK((*ex.features)[9] == 0.0);

    stack.degurba = grid(-9999);
    ex = extract_features({0.5, 0.5}, stack);
    CHECK_FALSE(ex.features);
    CHECK(ex.drop_reason == "missing categorical: degurba");
}

TEST_CASE("dataset construction") {
    auto stack = full_stack();
    std::vector<LabeledPoint> pos{{"s1", {0.1, 0.1}}, {"s2", {0.2, 0.2}}, {"s3", {0.3, 0.3}}};
    std::vector<LabeledPoint> neg{{"n1", {0.6, 0.6}}, {"n2", {0.7, 0.7}}};
    auto res = build_dataset(pos, neg, stack);
    CHECK(res.dataset.size() == 5);
    CHECK(res.dataset.labels == std::vector<int>{1, 1, 1, 0, 0});
    CHECK(res.dataset.ids == std::vector<std::string>{"s1", "s2", "s3", "n1", "n2"});
    CHECK(res.drops.empty());

    std::set<std::size_t> covered;
    std::size_t total = 0;
    for (const auto& g : res.dataset.groups) {
        total += g.columns.size();
        covered.insert(g.columns.begin(), g.columns.end());
    }
    CHECK(total == 10);
    CHECK(covered.size() == 10);
    CHECK(*covered.rbegin() == 9);

    pos.push_back({"s4", {5.0, 5.0}});  // outside every layer
    res = build_dataset(pos, neg, stack);
    CHECK(res.dataset.size() == 5);
    REQUIRE(res.drops.size() == 1);
    CHECK(res.drops[0].id == "s4");
    CHECK(res.drops[0].reason == "missing categorical: climate");

    CHECK_THROWS_AS(build_dataset({{"x", {5, 5}}}, neg, stack), DatasetError);
    CHECK_THROWS_AS(build_dataset(pos, {{"s1", {0.6, 0.6}}}, stack), DatasetError);
}

TEST_CASE("dataset csv round trip is bit exact") {
    auto ds = empty_dataset();
    Rng rng(6);
    for (int i = 0; i < 200; ++i) {
        FeatureVector fv;
        for (auto& v : fv) v = rng.uniform(-1e6, 1e6) * std::pow(10.0, rng.uniform(-20, 5));
        fv[0] = -0.0;
        ds.push_back("id," + std::to_string(i), i % 2, fv);
    }
    std::stringstream ss;
    write_dataset_csv(ss, ds);
    auto back = read_dataset_csv(ss);
    REQUIRE(back.size() == ds.size());
    CHECK(back.ids == ds.ids);
    CHECK(back.labels == ds.labels);
    CHECK(back.groups == default_groups());
    CHECK(std::memcmp(back.values.data(), ds.values.data(), ds.values.size() * sizeof(double)) == 0);

    std::istringstream bad("id,label,a\nx,2,1.0\n");
    CHECK_THROWS_AS(read_dataset_csv(bad), DatasetError);
    std::istringstream generic("id,label,a,b\nx,1,1.5,2\n");
    auto g = read_dataset_csv(generic);
    CHECK(g.groups.size() == 2);
    CHECK(g.row(0)[1] == 2.0);
}
