#include <algorithm>

#include "atlas/config.hpp"
#include "doctest.h"
#include "test_util.hpp"

using namespace atlas;
using namespace atlas::config;
using atlas::testing::TempDir;
using atlas::testing::write_file;

namespace {

const char* kInputs[] = {"schools.geojson", "pois.geojson", "osm.geojson", "zones.geojson", "lexicon.txt",
                         "climate.asc",     "landcover.asc", "terrain.asc", "population.asc", "degurba.asc",
                         "nightlights.asc", "builtup.asc"};

std::string base_config() {
    return R"([paths]
schools = "schools.geojson"
pois = "pois.geojson"
buildings_osm = "osm.geojson"
admin_zones = "zones.geojson"
lexicon = "lexicon.txt"

[rasters]
climate = "climate.asc"
landcover = "landcover.asc"
terrain = "terrain.asc"
population = "population.asc"
degurba = "degurba.asc"
nightlights = "nightlights.asc"
builtup = "builtup.asc"
)";
}

void touch_inputs(const TempDir& dir) {
    for (const char* f : kInputs) write_file(dir / f, "x");
}

std::vector<std::string> errors_of(const std::string& text, const std::filesystem::path& base,
                                   const std::map<std::string, std::string>& env = {}) {
    try {
        parse(text, base, env);
    } catch (const ConfigError& e) {
        return e.errors();
    }
    return {};
}

bool has_error(const std::vector<std::string>& errors, const std::string& needle) {
    return std::any_of(errors.begin(), errors.end(), [&](const std::string& e) { return e.find(needle) != std::string::npos; });
}

}  // namespace

TEST_CASE("config: minimal file gets defaults and resolved paths") {
    TempDir dir;
    touch_inputs(dir);
    auto cfg = parse(base_config(), dir.path());
    CHECK(cfg.seed == 42);
    CHECK(cfg.out_dir == (dir.path() / "out").lexically_normal());
    CHECK(cfg.paths.schools == (dir.path() / "schools.geojson").lexically_normal());
    CHECK(cfg.rasters.builtup == (dir.path() / "builtup.asc").lexically_normal());
    CHECK(cfg.service.feedback_log == cfg.out_dir / "feedback" / "feedback.jsonl");
    CHECK(cfg.train.test_frac == 0.2);
    CHECK(cfg.candidates.zoom == 17);
    CHECK(cfg.scorer.kind == ScorerKind::builtin);
    CHECK_FALSE(cfg.aoi.has_value());
}

TEST_CASE("config: typed values are read") {
    TempDir dir;
    touch_inputs(dir);
    write_file(dir / "fix.json", "{}");
    const std::string text = base_config() + R"(
[run]
seed = 7
out = "/tmp/elsewhere"
aoi = [30.0, -2.0, 32, 0.5]

[cleanse]
thin_target = 300
thin_spacing_m = 2500.5

[train]
search = false
n_trees = 40
max_features = "half"
space_max_features = ["sqrt", 3]
space_bootstrap = [true, false]

[candidates]
zoom = 16
tile_size = 64

[scorer]
kind = "fixture"
fixture = "fix.json"
fixture_default = 0.1

[service]
port = 9000
feedback_log = "fb/log.jsonl"
)";
    auto cfg = parse(text, dir.path());
    CHECK(cfg.seed == 7);
    CHECK(cfg.out_dir == "/tmp/elsewhere");
    REQUIRE(cfg.aoi.has_value());
    CHECK(cfg.aoi->min_lon == 30.0);
    CHECK(cfg.aoi->min_lat == -2.0);
    CHECK(cfg.aoi->max_lon == 32.0);
    CHECK(cfg.aoi->max_lat == 0.5);
    CHECK(cfg.thin_target == 300);
    CHECK(cfg.thin_spacing_m == 2500.5);
    CHECK_FALSE(cfg.train.search);
    CHECK(cfg.train.params.n_trees == 40);
    CHECK(cfg.train.params.max_features.kind == forest::MaxFeatures::Kind::half);
    REQUIRE(cfg.train.space.max_features.size() == 2);
    CHECK(cfg.train.space.max_features[1].kind == forest::MaxFeatures::Kind::count);
    CHECK(cfg.train.space.max_features[1].count == 3);
    CHECK(cfg.train.space.bootstrap == std::vector<bool>{true, false});
    CHECK(cfg.candidates.zoom == 16);
    CHECK(cfg.tile_size == 64);
    CHECK(cfg.scorer.kind == ScorerKind::fixture);
    CHECK(cfg.scorer.fixture_default == 0.1);
    CHECK(cfg.service.port == 9000);
    CHECK(cfg.service.feedback_log == (dir.path() / "fb/log.jsonl").lexically_normal());
}

TEST_CASE("config: every problem is reported at once") {
    TempDir dir;
    touch_inputs(dir);
    std::filesystem::remove(dir / "terrain.asc");
    const std::string text = base_config() + R"(
[train]
test_frac = 1.5
n_trees = "many"
space_n_trees = []

[candidates]
p_min = -0.1
tile_size = 8

[scorer]
kind = "oracle"

[bogus]
x = 1

[service]
colour = "red"
)";
    auto errors = errors_of(text, dir.path());
    CHECK(has_error(errors, "[rasters].terrain: file not found"));
    CHECK(has_error(errors, "[train].test_frac: must be in (0, 1)"));
    CHECK(has_error(errors, "[train].n_trees: expected an integer"));
    CHECK(has_error(errors, "[train].space_n_trees: must not be empty"));
    CHECK(has_error(errors, "[candidates].p_min: must be in [0, 1]"));
    CHECK(has_error(errors, "[candidates].tile_size: must be an integer in [16, 2048]"));
    CHECK(has_error(errors, "[scorer].kind"));
    CHECK(has_error(errors, "[bogus]: unknown section"));
    CHECK(has_error(errors, "[service].colour: unknown key"));
    CHECK(errors.size() == 9);
}

TEST_CASE("config: required inputs") {
    TempDir dir;
    auto errors = errors_of("", dir.path());
    for (const char* key : {"[paths].schools", "[paths].pois", "[paths].buildings_osm", "[paths].admin_zones",
                            "[paths].lexicon", "[rasters].climate", "[rasters].landcover", "[rasters].terrain",
                            "[rasters].population", "[rasters].degurba", "[rasters].nightlights", "[rasters].builtup"})
        CHECK_MESSAGE(has_error(errors, std::string(key) + ": is required"), key);
    CHECK(errors.size() == 12);
}

TEST_CASE("config: overpass replaces the POI file") {
    TempDir dir;
    touch_inputs(dir);
    std::string text = base_config();
    text.replace(text.find("pois = \"pois.geojson\"\n"), 22, "overpass = \"https://overpass.example/api\"\n");
    auto cfg = parse(text, dir.path());
    CHECK(cfg.paths.overpass == "https://overpass.example/api");
    CHECK(cfg.paths.pois.empty());

    std::string missing = base_config();
    missing.replace(missing.find("pois = \"pois.geojson\"\n"), 22, "overpass = \"nope.json\"\n");
    CHECK(has_error(errors_of(missing, dir.path()), "[paths].overpass: file not found"));
}

TEST_CASE("config: scorer kinds need their inputs") {
    TempDir dir;
    touch_inputs(dir);
    CHECK(has_error(errors_of(base_config() + "[scorer]\nkind = \"fixture\"\n", dir.path()), "[scorer].fixture: is required"));
    CHECK(has_error(errors_of(base_config() + "[scorer]\nkind = \"remote\"\n", dir.path()), "[scorer].endpoint"));
    auto cfg = parse(base_config() + "[scorer]\nkind = \"remote\"\nendpoint = \"http://127.0.0.1:1/score\"\n", dir.path());
    CHECK(cfg.scorer.kind == ScorerKind::remote);
}

TEST_CASE("config: aoi validation") {
    TempDir dir;
    touch_inputs(dir);
    CHECK(has_error(errors_of(base_config() + "[run]\naoi = [1, 2, 3]\n", dir.path()), "[run].aoi"));
    CHECK(has_error(errors_of(base_config() + "[run]\naoi = [5, 0, 1, 1]\n", dir.path()), "[run].aoi"));
    CHECK(has_error(errors_of(base_config() + "[run]\naoi = [0, 0, 181, 1]\n", dir.path()), "[run].aoi"));
}

TEST_CASE("config: syntax errors carry the line") {
    TempDir dir;
    auto errors = errors_of("[run]\nseed = 1\nout = \n", dir.path());
    REQUIRE(errors.size() == 1);
    CHECK(has_error(errors, "line 3"));
}

TEST_CASE("config: environment overrides") {
    TempDir dir;
    touch_inputs(dir);
    std::map<std::string, std::string> env = {{"ATLAS_RUN_SEED", "99"},
                                              {"ATLAS_SERVICE_HOST", "0.0.0.0"},
                                              {"ATLAS_TRAIN_SEARCH", "false"},
                                              {"ATLAS_CANDIDATES_P_MIN", "0.9"},
                                              {"ATLAS_SCORER_BUILTIN", "brightness"},
                                              {"ATLAS_TRAIN_SPACE_N_TREES", "[5, 6]"},
                                              {"HOME", "/root"}};
    auto cfg = parse(base_config() + "[run]\nseed = 1\n", dir.path(), env);
    CHECK(cfg.seed == 99);
    CHECK(cfg.service.host == "0.0.0.0");
    CHECK_FALSE(cfg.train.search);
    CHECK(cfg.candidates.p_min == 0.9);
    CHECK(cfg.scorer.builtin == "brightness");
    CHECK(cfg.train.space.n_trees == std::vector<int>{5, 6});

    CHECK(has_error(errors_of(base_config(), dir.path(), {{"ATLAS_RUN_SEED", "abc"}}), "[run].seed: expected an integer"));
    CHECK(has_error(errors_of(base_config(), dir.path(), {{"ATLAS_RUN_COLOUR", "1"}}), "ATLAS_RUN_COLOUR"));
}

TEST_CASE("config: environment block filter") {
    std::string a = "ATLAS_RUN_SEED=3", b = "PATH=/bin", c = "ATLAS_SERVICE_HOST=a=b";
    char* envp[] = {a.data(), b.data(), c.data(), nullptr};
    auto env = environment_overrides(envp);
    CHECK(env.size() == 2);
    CHECK(env["ATLAS_RUN_SEED"] == "3");
    CHECK(env["ATLAS_SERVICE_HOST"] == "a=b");
}

TEST_CASE("config: load reads the file relative to its directory") {
    TempDir dir;
    touch_inputs(dir);
    write_file(dir / "atlas.toml", base_config());
    auto cfg = load(dir / "atlas.toml");
    CHECK(cfg.source == (dir / "atlas.toml").lexically_normal());
    CHECK(cfg.paths.lexicon == (dir.path() / "lexicon.txt").lexically_normal());
    CHECK_THROWS_AS(load(dir / "missing.toml"), ConfigError);
}
