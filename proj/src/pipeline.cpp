#include "atlas/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <set>
#include <thread>
#include <unordered_set>

#include "atlas/cleanse.hpp"
#include "atlas/forest.hpp"
#include "atlas/geojson.hpp"
#include "atlas/http_util.hpp"
#include "atlas/ingest.hpp"
#include "atlas/negatives.hpp"
#include "atlas/raster.hpp"
#include "httplib.h"

namespace atlas::pipeline {

namespace fs = std::filesystem;
using config::PipelineConfig;
using nlohmann::json;

namespace {

constexpr const char* kDefaultOverpassQuery =
    "[out:json][timeout:180];(node[\"name\"];way[\"name\"];);out center;";

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::uint64_t derive(std::uint64_t seed, std::string_view label) { return splitmix64(seed ^ fnv1a(label)); }

class StageReport {
public:
    StageReport(Stage stage, const PipelineConfig& cfg)
        : stage_(stage), dir_(cfg.out_dir / to_string(stage)), seed_(stage_seed(cfg.seed, stage)) {}

    const fs::path& dir() const { return dir_; }
    fs::path file(const std::string& name) const { return dir_ / name; }
    std::uint64_t seed() const { return seed_; }

    json counts = json::object();
    json details = json::object();

    void mark(const std::string& step) {
        const auto now = Clock::now();
        timings_[step + "_s"] = seconds(last_, now);
        last_ = now;
    }

    void write(const std::string* error) {
        timings_["total_s"] = seconds(start_, Clock::now());
        json doc = {{"stage", to_string(stage_)},
                    {"status", error ? "error" : "ok"},
                    {"seed", seed_},
                    {"counts", counts},
                    {"timings", timings_}};
        if (!details.empty()) doc["details"] = details;
        if (error) doc["error"] = *error;
        geojson::write_json_file(file("report.json"), doc);
    }

private:
    using Clock = std::chrono::steady_clock;
    static double seconds(Clock::time_point a, Clock::time_point b) {
        return std::chrono::duration<double>(b - a).count();
    }

    Stage stage_;
    fs::path dir_;
    std::uint64_t seed_;
    Clock::time_point start_ = Clock::now();
    Clock::time_point last_ = start_;
    json timings_ = json::object();
};

template <class Fn>
void with_report(Stage stage, const PipelineConfig& cfg, Fn&& fn) {
    StageReport report(stage, cfg);
    try {
        fs::create_directories(report.dir());
        fn(report);
    } catch (const std::exception& e) {
        const std::string msg = e.what();
        try {
            report.write(&msg);
        } catch (...) {
        }
        throw;
    }
    report.write(nullptr);
}

fs::path need(const PipelineConfig& cfg, Stage producer, const std::string& name) {
    auto p = cfg.out_dir / to_string(producer) / name;
    if (!fs::is_regular_file(p))
        throw PipelineError(std::string("run ") + to_string(producer) + " first (missing " + p.string() + ")");
    return p;
}

geo::RasterGrid read_raster(const fs::path& p, geo::RasterKind kind) { return geo::read_ascii_grid(p, kind); }

struct Buildings {
    std::shared_ptr<const geo::FootprintIndex> index;
    std::vector<std::string> ids;
};

Buildings load_buildings(const PipelineConfig& cfg) {
    auto read = ingest::read_buildings(need(cfg, Stage::ingest, "buildings.geojson"), ingest::BuildingSource::osm);
    std::vector<geo::PolygonRing> rings;
    Buildings out;
    rings.reserve(read.records.size());
    for (auto& b : read.records) {
        out.ids.push_back(b.id);
        rings.push_back(std::move(b.ring));
    }
    out.index = std::make_shared<const geo::FootprintIndex>(std::move(rings));
    return out;
}

std::vector<ingest::SchoolRecord> read_school_artifact(const fs::path& p) {
    auto r = ingest::read_schools(p);
    if (!r.rejects.empty())
        throw PipelineError("malformed artifact " + p.string() + ": " + r.rejects.front().reason);
    return std::move(r.records);
}

geo::BBox area_of_interest(const PipelineConfig& cfg, const geo::RasterGrid& landcover) {
    return cfg.aoi ? *cfg.aoi : landcover.extent();
}

json reject_counts(const std::vector<ingest::Reject>& rejects) {
    std::map<std::string, std::size_t> by_reason;
    for (const auto& r : rejects) ++by_reason[r.reason];
    return by_reason;
}

// ---- stages ----------------------------------------------------------------

void stage_ingest(const PipelineConfig& cfg, StageReport& rep) {
    auto schools = ingest::read_schools(cfg.paths.schools, cfg.csv);
    auto zones = ingest::read_admin_zones(cfg.paths.admin_zones);
    rep.counts["schools_read"] = schools.records.size();
    rep.counts["schools_rejected"] = schools.rejects.size();
    rep.counts["admin_zones"] = zones.records.size();
    rep.details["school_rejects"] = ingest::rejects_to_json(schools.rejects);
    rep.details["admin_zone_rejects"] = ingest::rejects_to_json(zones.rejects);
    rep.mark("read_schools");

    std::size_t attached = 0, dropped = 0, deferred = 0;
    json geocode_log = json::array();
    std::unique_ptr<ingest::GeocoderClient> geocoder;
    if (!cfg.paths.geocoder.empty())
        geocoder = std::make_unique<ingest::FixtureGeocoder>(ingest::FixtureGeocoder::from_file(cfg.paths.geocoder));
    for (auto& s : schools.records) {
        if (s.point) continue;
        if (!geocoder) continue;
        const auto outcome = ingest::geocode(s, *geocoder, zones.records);
        switch (outcome.kind) {
            case ingest::GeocodeOutcome::Kind::attached:
                s.point = outcome.point;
                s.meta["geocode"] = "attached";
                ++attached;
                break;
            case ingest::GeocodeOutcome::Kind::dropped:
                s.meta["geocode"] = outcome.reason;
                ++dropped;
                break;
            case ingest::GeocodeOutcome::Kind::deferred:
                s.meta["geocode"] = "deferred";
                ++deferred;
                break;
        }
        if (outcome.kind != ingest::GeocodeOutcome::Kind::attached)
            geocode_log.push_back({{"id", s.id}, {"outcome", s.meta["geocode"]}, {"reason", outcome.reason}});
    }
    rep.counts["geocode_attached"] = attached;
    rep.counts["geocode_dropped"] = dropped;
    rep.counts["geocode_deferred"] = deferred;
    rep.counts["schools_unlocated"] =
        std::count_if(schools.records.begin(), schools.records.end(), [](const auto& s) { return !s.point; });
    rep.details["geocode"] = geocode_log;
    geojson::write_json_file(rep.file("schools.geojson"), ingest::schools_to_geojson(schools.records));
    rep.mark("geocode");

    ingest::ReadResult<ingest::PoiRecord> pois;
    if (!cfg.paths.overpass.empty()) {
        const std::string query = cfg.paths.overpass_query.empty() ? kDefaultOverpassQuery : cfg.paths.overpass_query;
        pois = ingest::overpass_fetch(query, cfg.paths.overpass);
        rep.details["poi_source"] = "overpass";
    } else {
        pois = ingest::read_pois(cfg.paths.pois);
        rep.details["poi_source"] = "file";
    }
    rep.counts["pois_read"] = pois.records.size();
    rep.counts["pois_rejected"] = pois.rejects.size();
    rep.details["poi_rejects"] = ingest::rejects_to_json(pois.rejects);
    geojson::write_json_file(rep.file("pois.geojson"), ingest::pois_to_geojson(pois.records));
    rep.mark("pois");

    auto osm = ingest::read_buildings(cfg.paths.buildings_osm, ingest::BuildingSource::osm);
    ingest::ReadResult<ingest::BuildingFootprint> microsoft, google;
    if (!cfg.paths.buildings_microsoft.empty())
        microsoft = ingest::read_buildings(cfg.paths.buildings_microsoft, ingest::BuildingSource::microsoft);
    if (!cfg.paths.buildings_google.empty())
        google = ingest::read_buildings(cfg.paths.buildings_google, ingest::BuildingSource::google);
    const auto merged = ingest::merge_building_layers(osm.records, microsoft.records, google.records, cfg.merge);
    rep.counts["buildings_osm"] = osm.records.size();
    rep.counts["buildings_microsoft"] = microsoft.records.size();
    rep.counts["buildings_google"] = google.records.size();
    rep.counts["buildings_rejected"] = osm.rejects.size() + microsoft.rejects.size() + google.rejects.size();
    rep.counts["buildings_merged"] = merged.size();
    rep.details["building_rejects"] = {{"osm", ingest::rejects_to_json(osm.rejects)},
                                       {"microsoft", ingest::rejects_to_json(microsoft.rejects)},
                                       {"google", ingest::rejects_to_json(google.rejects)}};
    geojson::write_json_file(rep.file("buildings.geojson"), ingest::buildings_to_geojson(merged));
    rep.mark("buildings");
}

void stage_clean(const PipelineConfig& cfg, StageReport& rep) {
    auto schools = read_school_artifact(need(cfg, Stage::ingest, "schools.geojson"));
    auto buildings = load_buildings(cfg);
    const auto landcover = read_raster(cfg.rasters.landcover, geo::RasterKind::categorical);
    const auto degurba = read_raster(cfg.rasters.degurba, geo::RasterKind::categorical);
    rep.counts["input"] = schools.size();
    rep.mark("read");

    std::vector<ingest::SchoolRecord> located, unlocated;
    for (auto& s : schools) (s.point ? located : unlocated).push_back(std::move(s));
    auto [deduped, merge_log] = cleanse::dedup_schools(located, cfg.dedup);
    rep.counts["unlocated"] = unlocated.size();
    rep.counts["after_dedup"] = deduped.size();
    rep.counts["merge_clusters"] = merge_log.clusters.size();
    geojson::write_json_file(rep.file("merge_log.json"), merge_log.to_json());
    rep.mark("dedup");

    std::vector<ingest::SchoolRecord> candidates = std::move(deduped);
    for (auto& s : unlocated) candidates.push_back(std::move(s));
    auto filter = cleanse::geographic_filter(candidates, landcover, *buildings.index, cfg.school_filter);
    std::unordered_map<std::string, const ingest::SchoolRecord*> by_id;
    for (const auto& s : candidates) by_id.emplace(s.id, &s);
    for (auto& [id, reason] : filter.removed) {
        if (reason != cleanse::RemovalReason::no_coordinates) continue;
        const auto& meta = by_id.at(id)->meta;
        if (auto it = meta.find("geocode"); it != meta.end() && it->second == "zone mismatch")
            reason = cleanse::RemovalReason::zone_mismatch;
    }
    std::map<std::string, std::size_t> removed_by_reason;
    for (const auto& [id, reason] : filter.removed) ++removed_by_reason[cleanse::to_string(reason)];
    rep.counts["kept"] = filter.kept.size();
    rep.counts["removed"] = removed_by_reason;
    rep.counts["no_landcover"] = filter.no_landcover.size();
    geojson::write_json_file(rep.file("filter_report.json"), filter.to_json());

    const std::unordered_set<std::string> kept(filter.kept.begin(), filter.kept.end());
    std::vector<ingest::SchoolRecord> known;
    for (const auto& s : candidates)
        if (kept.contains(s.id)) known.push_back(s);
    geojson::write_json_file(rep.file("known_schools.geojson"), ingest::schools_to_geojson(known));
    rep.mark("filter");

    auto thin = cleanse::stratified_thin(known, degurba, {cfg.thin_target, cfg.thin_spacing_m, rep.seed()});
    rep.counts["selected"] = thin.selected.size();
    rep.counts["shortfall"] = thin.sampling.shortfall;
    geojson::write_json_file(rep.file("thinning.json"), thin.sampling.to_json());
    geojson::write_json_file(rep.file("schools.geojson"), ingest::schools_to_geojson(thin.selected));
    rep.mark("thin");
}

void stage_negatives(const PipelineConfig& cfg, StageReport& rep) {
    auto pois = ingest::read_pois(need(cfg, Stage::ingest, "pois.geojson"));
    auto buildings = load_buildings(cfg);
    const auto lexicon = negatives::ExclusionLexicon::load(cfg.paths.lexicon);
    const auto landcover = read_raster(cfg.rasters.landcover, geo::RasterKind::categorical);
    const auto degurba = read_raster(cfg.rasters.degurba, geo::RasterKind::categorical);
    const auto builtup = read_raster(cfg.rasters.builtup, geo::RasterKind::continuous);
    rep.counts["pois"] = pois.records.size();
    rep.mark("read");

    const auto named = negatives::filter_poi_candidates(pois.records, lexicon);
    const auto placed = negatives::geographic_filter_neg(named.kept, landcover, *buildings.index, cfg.remote.water_class);
    rep.counts["pois_after_lexicon"] = named.kept.size();
    rep.counts["pois_after_geography"] = placed.kept.size();
    rep.counts["poi_rejects"] = {{"lexicon", reject_counts(named.rejects)}, {"geography", reject_counts(placed.rejects)}};
    geojson::write_json_file(rep.file("rejects.json"),
                             {{"lexicon", named.rejects_json()}, {"geography", placed.rejects_json()}});
    rep.mark("filter");

    auto poi = negatives::sample_poi_negatives(placed.kept, degurba, cfg.poi_negatives, derive(rep.seed(), "poi"));
    rep.counts["poi_negatives"] = poi.samples.size();
    rep.mark("poi_sample");

    const auto aoi = area_of_interest(cfg, landcover);
    auto remote = negatives::sample_remote_negatives(builtup, landcover, aoi, cfg.remote, derive(rep.seed(), "remote"));
    rep.counts["remote_negatives"] = remote.samples.size();
    rep.counts["remote_draws"] = remote.draws;
    rep.counts["remote_pool"] = remote.pool;
    rep.details["remote_starved"] = remote.starved;
    rep.mark("remote_sample");

    std::vector<negatives::NegativeSample> all = poi.samples;
    all.insert(all.end(), remote.samples.begin(), remote.samples.end());
    rep.counts["negatives"] = all.size();
    geojson::write_json_file(rep.file("negatives.geojson"), negatives::negatives_to_geojson(all));
    geojson::write_json_file(rep.file("sampling.json"),
                             {{"poi", poi.sampling.to_json()},
                              {"remote", remote.sampling.to_json()},
                              {"aoi", {aoi.min_lon, aoi.min_lat, aoi.max_lon, aoi.max_lat}}});
    rep.mark("write");
}

void stage_features(const PipelineConfig& cfg, StageReport& rep) {
    const auto schools = read_school_artifact(need(cfg, Stage::clean, "schools.geojson"));
    const auto negs = negatives::negatives_from_geojson(geojson::read_json_file(need(cfg, Stage::negatives, "negatives.geojson")));
    const auto stack = load_raster_stack(cfg);
    rep.mark("read");

    std::vector<features::LabeledPoint> pos, neg;
    for (const auto& s : schools) pos.push_back({s.id, *s.point});
    for (const auto& n : negs) neg.push_back({n.id, n.point});
    auto built = features::build_dataset(pos, neg, stack);
    std::size_t dropped_pos = 0;
    for (const auto& d : built.drops) dropped_pos += d.label == 1;
    rep.counts["positives"] = pos.size();
    rep.counts["negatives"] = neg.size();
    rep.counts["rows"] = built.dataset.size();
    rep.counts["dropped"] = {{"positive", dropped_pos}, {"negative", built.drops.size() - dropped_pos}};
    features::write_dataset_csv(rep.file("dataset.csv"), built.dataset);
    geojson::write_json_file(rep.file("drops.json"), built.drops_json());
    rep.mark("extract");
}

void stage_train(const PipelineConfig& cfg, StageReport& rep) {
    const auto ds = features::read_dataset_csv(need(cfg, Stage::features, "dataset.csv"));
    rep.counts["rows"] = ds.size();
    const auto split = forest::stratified_split(ds.labels, cfg.train.test_frac, derive(rep.seed(), "split"));
    const auto train = ds.subset(split.train);
    const auto test = ds.subset(split.test);
    rep.counts["train_rows"] = train.size();
    rep.counts["test_rows"] = test.size();
    rep.mark("split");

    forest::Hyperparams params = cfg.train.params;
    if (cfg.train.search) {
        const auto result = forest::random_search(train, cfg.train.space, cfg.train.search_iter, cfg.train.search_subset,
                                                  cfg.train.search_folds, derive(rep.seed(), "search"));
        params = result.best;
        json doc = result.to_json();
        doc["search"] = true;
        geojson::write_json_file(rep.file("search.json"), doc);
        rep.counts["search_trials"] = result.trials.size();
    } else {
        geojson::write_json_file(rep.file("search.json"), {{"search", false}, {"best", params.to_json()}});
    }
    rep.mark("search");

    const auto model = forest::train_forest(train, params, derive(rep.seed(), "forest"));
    model.save(rep.file("model.json"));
    rep.counts["trees"] = model.trees.size();
    rep.details["model_version"] = model.model_version;
    rep.details["params"] = params.to_json();
    rep.mark("fit");

    const auto metrics = forest::evaluate(model, test);
    geojson::write_json_file(rep.file("metrics.json"), metrics.to_json());
    const auto importance = forest::feature_importance(model);
    geojson::write_json_file(rep.file("importance.json"), importance.to_json(model.columns));
    rep.details["f1"] = metrics.class1.f1;
    rep.details["accuracy"] = metrics.accuracy;
    rep.mark("evaluate");
}

void stage_gapmap(const PipelineConfig& cfg, StageReport& rep) {
    const auto model = forest::ForestModel::load(need(cfg, Stage::train, "model.json"));
    const auto known = read_school_artifact(need(cfg, Stage::clean, "known_schools.geojson"));
    const auto stack = load_raster_stack(cfg);
    std::vector<geo::GeoPoint> points;
    for (const auto& s : known) points.push_back(*s.point);
    const auto index = geo::index_build(points);
    rep.counts["known_schools"] = points.size();
    rep.mark("read");

    const auto aoi = area_of_interest(cfg, stack.landcover);
    const auto gaps = forest::gap_map(model, aoi, stack, index, cfg.gap);
    std::size_t scored = 0;
    double max_gap = 0.0;
    for (const auto& c : gaps.cells) {
        if (!c.gap) continue;
        ++scored;
        max_gap = std::max(max_gap, *c.gap);
    }
    rep.counts["cells"] = gaps.cells.size();
    rep.counts["cells_scored"] = scored;
    rep.details["grid"] = {{"ncols", gaps.ncols}, {"nrows", gaps.nrows}, {"cellsize_deg", gaps.cellsize}};
    rep.details["max_gap"] = max_gap;
    rep.details["model_version"] = model.model_version;
    rep.mark("score");

    geo::write_ascii_grid(rep.file("gap.asc"), gaps.to_raster());
    geojson::write_json_file(rep.file("gap.geojson"), gaps.to_geojson());
    geojson::write_json_file(rep.file("gapmap.json"), gaps.to_json());
    rep.mark("write");
}

void stage_candidates(const PipelineConfig& cfg, StageReport& rep) {
    const auto gaps = forest::GapMap::from_json(geojson::read_json_file(need(cfg, Stage::gapmap, "gapmap.json")));
    auto buildings = load_buildings(cfg);
    auto scorer = make_scorer(cfg, buildings.index);
    std::unique_ptr<scorer::TileSource> tiles;
    std::shared_ptr<service::TileUpstream> upstream;
    if (cfg.candidate_tiles == "rendered") {
        tiles = std::make_unique<scorer::RenderedTileSource>(buildings.index, cfg.tile_size);
    } else {
        upstream = service::make_upstream(cfg.candidate_tiles, buildings.index);
        tiles = std::make_unique<scorer::PngTileSource>([upstream](const geo::TileIndex& t) {
            auto reply = upstream->fetch(t);
            if (reply.status != 200) throw service::UpstreamUnavailable("upstream status " + std::to_string(reply.status));
            return reply.body;
        });
    }
    rep.details["scorer"] = scorer->version();
    rep.mark("read");

    auto report =
        scorer::generate_candidates(gaps, *scorer, *tiles, *buildings.index, buildings.ids, cfg.candidates);
    rep.counts["cells_used"] = report.cells_used;
    rep.counts["tiles_scored"] = report.tiles_scored;
    rep.counts["tiles_qualifying"] = report.tiles_qualifying;
    rep.counts["suppressed"] = report.suppressed;
    rep.counts["tile_failures"] = report.failures.size();
    rep.counts["candidates"] = report.candidates.size();
    rep.mark("score");

    geojson::write_json_file(rep.file("candidates.geojson"), scorer::candidates_to_geojson(report.candidates));
    geojson::write_json_file(rep.file("candidates_report.json"), report.to_json());
    rep.mark("write");
}

void stage_export(const PipelineConfig& cfg, StageReport& rep) {
    auto candidates =
        scorer::candidates_from_geojson(geojson::read_json_file(need(cfg, Stage::candidates, "candidates.geojson")));
    std::vector<service::FeedbackRecord> records;
    if (fs::exists(cfg.service.feedback_log)) records = service::FeedbackLog(cfg.service.feedback_log).read_all();
    rep.counts["feedback_records"] = records.size();
    rep.mark("read");

    const service::ReviewBook book(std::move(candidates), records);
    std::map<std::string, std::size_t> by_status;
    for (const auto& s : {scorer::Status::pending, scorer::Status::confirmed, scorer::Status::rejected, scorer::Status::unsure})
        by_status[scorer::to_string(s)] = 0;
    for (const auto& c : book.candidates()) ++by_status[scorer::to_string(c.status)];
    rep.counts["candidates"] = book.candidates().size();
    rep.counts["by_status"] = by_status;
    rep.counts["orphan_feedback"] = book.orphans();
    const auto doc = book.export_geojson(scorer::Status::confirmed);
    rep.counts["validated"] = doc["features"].size();
    geojson::write_json_file(rep.file("validated_schools.geojson"), doc);
    rep.mark("write");
}

}  // namespace

const char* to_string(Stage s) {
    switch (s) {
        case Stage::ingest: return "ingest";
        case Stage::clean: return "clean";
        case Stage::negatives: return "negatives";
        case Stage::features: return "features";
        case Stage::train: return "train";
        case Stage::gapmap: return "gapmap";
        case Stage::candidates: return "candidates";
        case Stage::serve: return "serve";
        case Stage::export_: return "export";
        case Stage::all: return "all";
    }
    return "?";
}

std::optional<Stage> parse_stage(const std::string& s) {
    for (auto st : {Stage::ingest, Stage::clean, Stage::negatives, Stage::features, Stage::train, Stage::gapmap,
                    Stage::candidates, Stage::serve, Stage::export_, Stage::all})
        if (s == to_string(st)) return st;
    return std::nullopt;
}

const std::vector<Stage>& chained_stages() {
    static const std::vector<Stage> stages = {Stage::ingest, Stage::clean,  Stage::negatives, Stage::features,
                                              Stage::train,  Stage::gapmap, Stage::candidates};
    return stages;
}

std::uint64_t stage_seed(std::uint64_t seed, Stage stage) { return derive(seed, to_string(stage)); }

features::RasterStack load_raster_stack(const PipelineConfig& cfg) {
    using geo::RasterKind;
    return {read_raster(cfg.rasters.climate, RasterKind::categorical),
            read_raster(cfg.rasters.landcover, RasterKind::categorical),
            read_raster(cfg.rasters.terrain, RasterKind::categorical),
            read_raster(cfg.rasters.population, RasterKind::continuous),
            read_raster(cfg.rasters.degurba, RasterKind::categorical),
            read_raster(cfg.rasters.nightlights, RasterKind::continuous)};
}

std::shared_ptr<const scorer::Scorer> make_scorer(const PipelineConfig& cfg,
                                                  std::shared_ptr<const geo::FootprintIndex> buildings) {
    switch (cfg.scorer.kind) {
        case config::ScorerKind::fixture:
            return scorer::FixtureScorer::load(cfg.scorer.fixture, cfg.scorer.fixture_default);
        case config::ScorerKind::remote: {
            scorer::RemoteOptions opts;
            opts.timeout = std::chrono::milliseconds(cfg.scorer.timeout_ms);
            opts.retries = cfg.scorer.retries;
            return std::make_shared<scorer::RemoteScorer>(cfg.scorer.endpoint, opts);
        }
        case config::ScorerKind::builtin:
            break;
    }
    if (cfg.scorer.builtin == "brightness") return std::make_shared<scorer::BrightnessScorer>();
    if (cfg.scorer.builtin == "constant") return std::make_shared<scorer::ConstantScorer>(cfg.scorer.constant);
    return std::make_shared<scorer::BuiltFractionScorer>(std::move(buildings));
}

void run(Stage stage, const PipelineConfig& cfg) {
    switch (stage) {
        case Stage::ingest: return with_report(stage, cfg, [&](StageReport& r) { stage_ingest(cfg, r); });
        case Stage::clean: return with_report(stage, cfg, [&](StageReport& r) { stage_clean(cfg, r); });
        case Stage::negatives: return with_report(stage, cfg, [&](StageReport& r) { stage_negatives(cfg, r); });
        case Stage::features: return with_report(stage, cfg, [&](StageReport& r) { stage_features(cfg, r); });
        case Stage::train: return with_report(stage, cfg, [&](StageReport& r) { stage_train(cfg, r); });
        case Stage::gapmap: return with_report(stage, cfg, [&](StageReport& r) { stage_gapmap(cfg, r); });
        case Stage::candidates: return with_report(stage, cfg, [&](StageReport& r) { stage_candidates(cfg, r); });
        case Stage::export_: return with_report(stage, cfg, [&](StageReport& r) { stage_export(cfg, r); });
        case Stage::all:
            return with_report(stage, cfg, [&](StageReport& r) {
                json done = json::array();
                for (auto s : chained_stages()) {
                    r.details["completed"] = done;
                    run(s, cfg);
                    done.push_back(to_string(s));
                    r.mark(to_string(s));
                }
                r.details["completed"] = done;
            });
        case Stage::serve:
            throw PipelineError("serve is not a batch stage");
    }
}

std::unique_ptr<service::Service> make_service(const PipelineConfig& cfg) {
    auto buildings = load_buildings(cfg);
    auto truth = service::ground_truth_from_geojson(geojson::read_json_file(need(cfg, Stage::clean, "known_schools.geojson")));
    std::vector<scorer::Candidate> candidates;
    const auto cand_path = cfg.out_dir / to_string(Stage::candidates) / "candidates.geojson";
    if (fs::is_regular_file(cand_path)) candidates = scorer::candidates_from_geojson(geojson::read_json_file(cand_path));
    service::ServiceOptions opts;
    opts.tile_cache_capacity = cfg.service.tile_cache_capacity;
    opts.tile_fallback_ttl = std::chrono::seconds(cfg.service.tile_ttl_s);
    opts.prediction_cache_capacity = cfg.service.prediction_cache_capacity;
    opts.prediction_ttl = std::chrono::seconds(cfg.service.prediction_ttl_s);
    opts.saliency_size = cfg.tile_size;
    std::shared_ptr<service::TileUpstream> upstream = service::make_upstream(cfg.service.upstream, buildings.index);
    return std::make_unique<service::Service>(opts, make_scorer(cfg, buildings.index), std::move(upstream),
                                              std::move(truth), std::move(candidates), cfg.service.feedback_log);
}

void serve(const PipelineConfig& cfg, const std::atomic<bool>& stop, const std::function<void(int)>& on_listening) {
    with_report(Stage::serve, cfg, [&](StageReport& rep) {
        auto svc = make_service(cfg);
        httplib::Server server;
        service::mount(server, *svc);
        int port = cfg.service.port;
        if (port == 0) {
            port = server.bind_to_any_port(cfg.service.host);
            if (port < 0) throw PipelineError("cannot bind " + cfg.service.host);
        } else if (!server.bind_to_port(cfg.service.host, port)) {
            throw PipelineError("cannot bind " + cfg.service.host + ":" + std::to_string(port));
        }
        rep.details["host"] = cfg.service.host;
        rep.details["port"] = port;
        rep.counts["candidates"] = svc->current_candidates().size();
        std::thread listener([&] { server.listen_after_bind(); });
        server.wait_until_ready();
        if (on_listening) on_listening(port);
        rep.mark("startup");
        while (!stop.load()) std::this_thread::sleep_for(std::chrono::milliseconds(50));
        server.stop();
        listener.join();
        rep.counts["orphan_feedback"] = svc->orphan_feedback();
        rep.mark("serving");
    });
}

}  // namespace atlas::pipeline
