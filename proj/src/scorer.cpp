#include "atlas/scorer.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <thread>

#include "atlas/geojson.hpp"
#include "atlas/hash.hpp"
#include "atlas/http_util.hpp"
#include "httplib.h"

namespace atlas::scorer {

using nlohmann::json;

namespace {

void check_probability(double p, const char* what) {
    if (!std::isfinite(p) || p < 0.0 || p > 1.0)
        throw ScorerError(std::string(what) + ": probability out of range: " + std::to_string(p));
}

Saliency parse_saliency(const json& values, const json& size_field) {
    if (!values.is_array()) throw ScorerError("saliency must be an array");
    Saliency s;
    if (!size_field.is_null()) {
        if (!size_field.is_number_integer() || size_field.get<int>() < 1) throw ScorerError("bad saliency_size");
        s.size = size_field.get<int>();
    } else {
        s.size = static_cast<int>(std::lround(std::sqrt(static_cast<double>(values.size()))));
    }
    if (values.size() != static_cast<std::size_t>(s.size) * static_cast<std::size_t>(s.size))
        throw ScorerError("saliency length does not match saliency_size");
    for (const auto& v : values) {
        if (!v.is_number()) throw ScorerError("saliency values must be numbers");
        const double d = v.get<double>();
        if (!std::isfinite(d) || d < 0.0 || d > 1.0) throw ScorerError("saliency value out of range");
        s.values.push_back(d);
    }
    return s;
}

std::string tile_key(const geo::TileIndex& t) {
    return std::to_string(t.z) + "/" + std::to_string(t.x) + "/" + std::to_string(t.y);
}

}  // namespace

// ---- tiles -----------------------------------------------------------------

void TileImage::validate() const {
    if (size <= 0) throw ScorerError("tile size must be positive");
    if (rgb.size() != static_cast<std::size_t>(size) * static_cast<std::size_t>(size) * 3)
        throw ScorerError("tile pixel buffer does not match its size");
}

TileImage TileImage::from_png(std::string_view bytes, const geo::TileIndex& tile) {
    const auto img = png::decode(bytes);
    if (img.width != img.height) throw ScorerError("tile image is not square");
    TileImage out;
    out.size = img.width;
    out.tile = tile;
    out.bounds = geo::tile_bounds(tile);
    if (img.channels == 3) {
        out.rgb = img.pixels;
    } else {
        out.rgb.reserve(static_cast<std::size_t>(img.width) * img.height * 3);
        for (std::size_t i = 0; i < img.pixels.size(); i += 4)
            out.rgb.insert(out.rgb.end(), img.pixels.begin() + static_cast<std::ptrdiff_t>(i),
                           img.pixels.begin() + static_cast<std::ptrdiff_t>(i + 3));
    }
    return out;
}

// ---- dihedral --------------------------------------------------------------

std::pair<int, int> dihedral_map(int k, int n, int r, int c) {
    if (k >= 4) c = n - 1 - c;
    for (int i = 0; i < k % 4; ++i) {
        const int r2 = n - 1 - c;
        c = r;
        r = r2;
    }
    return {r, c};
}

TileImage transform_tile(const TileImage& img, int k) {
    TileImage out = img;
    out.rgb = apply_dihedral<std::uint8_t>(k, img.size, 3, img.rgb);
    return out;
}

ScoreResult tta_score(const Scorer& scorer, const TileImage& img) {
    img.validate();
    std::vector<ScoreResult> parts;
    parts.reserve(8);
    for (int k = 0; k < 8; ++k) {
        parts.push_back(scorer.score(k == 0 ? img : transform_tile(img, k)));
        check_probability(parts.back().probability, "scorer");
    }
    ScoreResult out;
    const double base = parts[0].probability;
    double delta = 0.0;
    for (const auto& p : parts) delta += p.probability - base;
    out.probability = std::clamp(base + delta / 8.0, 0.0, 1.0);
    out.model_version = scorer.version() + "+tta8";

    const bool all_saliency = std::all_of(parts.begin(), parts.end(), [&](const ScoreResult& p) {
        return p.saliency && p.saliency->size == parts[0].saliency->size;
    });
    if (all_saliency) {
        const int n = parts[0].saliency->size;
        const auto& first = parts[0].saliency->values;
        Saliency mean{n, std::vector<double>(first.size(), 0.0)};
        for (int k = 1; k < 8; ++k) {
            const auto back = invert_dihedral<double>(k, n, 1, parts[static_cast<std::size_t>(k)].saliency->values);
            for (std::size_t i = 0; i < back.size(); ++i) mean.values[i] += back[i] - first[i];
        }
        for (std::size_t i = 0; i < first.size(); ++i) mean.values[i] = first[i] + mean.values[i] / 8.0;
        out.saliency = std::move(mean);
    }
    return out;
}

// ---- scorers ---------------------------------------------------------------

ConstantScorer::ConstantScorer(double p) : p_(p) { check_probability(p, "constant scorer"); }

ScoreResult ConstantScorer::score(const TileImage&) const { return {p_, std::nullopt, version()}; }

std::string ConstantScorer::version() const { return "constant:" + json(p_).dump(); }

FixtureScorer::FixtureScorer(const json& table, std::optional<double> fallback, std::string version)
    : fallback_(fallback), version_(std::move(version)) {
    if (!table.is_object()) throw ScorerError("fixture table must be a JSON object");
    if (fallback_) check_probability(*fallback_, "fixture default");
    for (const auto& [key, value] : table.items()) {
        Entry e{0.0, std::nullopt};
        if (value.is_number()) {
            e.probability = value.get<double>();
        } else if (value.is_object() && value.contains("probability") && value["probability"].is_number()) {
            e.probability = value["probability"].get<double>();
            if (value.contains("saliency"))
                e.saliency = parse_saliency(value["saliency"], value.value("saliency_size", json()));
        } else {
            throw ScorerError("fixture entry " + key + " must be a number or an object with a probability");
        }
        check_probability(e.probability, ("fixture entry " + key).c_str());
        entries_.emplace(key, std::move(e));
    }
}

std::unique_ptr<FixtureScorer> FixtureScorer::load(const std::filesystem::path& path, std::optional<double> fallback) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ScorerError("cannot open fixture " + path.string());
    std::stringstream ss;
    ss << in.rdbuf();
    const std::string text = ss.str();
    json table;
    try {
        table = json::parse(text);
    } catch (const json::parse_error& e) {
        throw ScorerError("malformed fixture " + path.string() + ": " + e.what());
    }
    return std::make_unique<FixtureScorer>(table, fallback, "fixture:" + sha256_hex(text).substr(0, 8));
}

ScoreResult FixtureScorer::score(const TileImage& img) const {
    const auto key = tile_key(img.tile);
    auto it = entries_.find(key);
    if (it != entries_.end()) return {it->second.probability, it->second.saliency, version_};
    if (fallback_) return {*fallback_, std::nullopt, version_};
    throw ScorerError("no fixture entry for tile " + key);
}

ScoreResult BrightnessScorer::score(const TileImage& img) const {
    img.validate();
    constexpr int kBlocks = 16;
    const int n = img.size;
    std::vector<std::uint64_t> block_sum(kBlocks * kBlocks, 0), block_count(kBlocks * kBlocks, 0);
    std::uint64_t total = 0;
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const std::size_t i = (static_cast<std::size_t>(r) * n + c) * 3;
            const std::uint64_t luma = 299u * img.rgb[i] + 587u * img.rgb[i + 1] + 114u * img.rgb[i + 2];
            total += luma;
            const std::size_t b = static_cast<std::size_t>(r * kBlocks / n) * kBlocks + static_cast<std::size_t>(c * kBlocks / n);
            block_sum[b] += luma;
            ++block_count[b];
        }
    ScoreResult out;
    out.probability = static_cast<double>(total) / (255000.0 * static_cast<double>(n) * n);
    Saliency s{kBlocks, std::vector<double>(kBlocks * kBlocks, 0.0)};
    for (std::size_t b = 0; b < block_sum.size(); ++b)
        if (block_count[b]) s.values[b] = static_cast<double>(block_sum[b]) / (255000.0 * static_cast<double>(block_count[b]));
    out.saliency = std::move(s);
    out.model_version = version();
    return out;
}

BuiltFractionScorer::BuiltFractionScorer(std::shared_ptr<const geo::FootprintIndex> buildings)
    : buildings_(std::move(buildings)) {
    if (!buildings_) throw ScorerError("built-fraction scorer needs a footprint index");
}

ScoreResult BuiltFractionScorer::score(const TileImage& img) const {
    constexpr int kCells = 16;
    const auto& b = img.bounds;
    const double h = (b.max_lat - b.min_lat) / kCells, w = (b.max_lon - b.min_lon) / kCells;
    Saliency mask{kCells, std::vector<double>(kCells * kCells, 0.0)};
    int inside = 0;
    for (int i = 0; i < kCells; ++i)
        for (int j = 0; j < kCells; ++j) {
            const geo::GeoPoint p(b.max_lat - (i + 0.5) * h, b.min_lon + (j + 0.5) * w);
            if (buildings_->containing(p)) {
                ++inside;
                mask.values[static_cast<std::size_t>(i) * kCells + j] = 1.0;
            }
        }
    return {inside / static_cast<double>(kCells * kCells), std::move(mask), version()};
}

RemoteScorer::RemoteScorer(std::string endpoint, RemoteOptions options)
    : endpoint_(std::move(endpoint)), options_(std::move(options)) {
    http::parse_url(endpoint_);
    if (options_.version.empty()) options_.version = "remote:" + endpoint_;
    if (options_.retries < 0) throw ScorerError("retries must be >= 0");
}

ScoreResult parse_remote_reply(const std::string& body, const std::string& fallback_version) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw ScorerError(std::string("protocol error: reply is not JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("probability") || !j["probability"].is_number())
        throw ScorerError("protocol error: reply lacks a numeric probability");
    ScoreResult r;
    r.probability = j["probability"].get<double>();
    if (!std::isfinite(r.probability) || r.probability < 0.0 || r.probability > 1.0)
        throw ScorerError("protocol error: probability out of range: " + j["probability"].dump());
    if (j.contains("saliency") && !j["saliency"].is_null()) {
        try {
            r.saliency = parse_saliency(j["saliency"], j.value("saliency_size", json()));
        } catch (const ScorerError& e) {
            throw ScorerError(std::string("protocol error: ") + e.what());
        }
    }
    r.model_version = j.contains("model_version") && j["model_version"].is_string()
                          ? j["model_version"].get<std::string>()
                          : fallback_version;
    return r;
}

ScoreResult RemoteScorer::score(const TileImage& img) const {
    const std::string body = png::encode(img.to_image());
    const auto url = http::parse_url(endpoint_);
    httplib::Client client(url.origin());
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(options_.timeout);
    const auto usecs = std::chrono::duration_cast<std::chrono::microseconds>(options_.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());

    std::string last_error;
    auto delay = options_.backoff;
    for (int attempt = 0; attempt <= options_.retries; ++attempt) {
        if (attempt > 0) {
            std::this_thread::sleep_for(delay);
            delay *= 2;
        }
        auto res = client.Post(url.path, body, "image/png");
        if (!res) {
            last_error = httplib::to_string(res.error());
            continue;
        }
        if (res->status >= 500) {
            last_error = "HTTP " + std::to_string(res->status);
            continue;
        }
        if (res->status != 200) throw ScorerError("remote scorer rejected tile: HTTP " + std::to_string(res->status));
        return parse_remote_reply(res->body, options_.version);
    }
    throw ScorerError("transport error after " + std::to_string(options_.retries + 1) + " attempts: " + last_error);
}

// ---- tile sources ----------------------------------------------------------

RenderedTileSource::RenderedTileSource(std::shared_ptr<const geo::FootprintIndex> buildings, int size)
    : buildings_(std::move(buildings)), size_(size) {
    if (!buildings_ || size_ < 1) throw ScorerError("rendered tile source needs footprints and a positive size");
}

TileImage RenderedTileSource::fetch(const geo::TileIndex& tile) const {
    TileImage img;
    img.size = size_;
    img.tile = tile;
    img.bounds = geo::tile_bounds(tile);
    img.rgb.assign(static_cast<std::size_t>(size_) * size_ * 3, 0);
    const auto ids = buildings_->intersecting(img.bounds);
    const auto& b = img.bounds;
    const double h = (b.max_lat - b.min_lat) / size_, w = (b.max_lon - b.min_lon) / size_;
    for (int r = 0; r < size_; ++r)
        for (int c = 0; c < size_; ++c) {
            const geo::GeoPoint p(b.max_lat - (r + 0.5) * h, b.min_lon + (c + 0.5) * w);
            bool built = false;
            for (std::size_t id : ids)
                if (buildings_->ring(id).bounds().contains(p) && geo::point_in_polygon(p, buildings_->ring(id))) {
                    built = true;
                    break;
                }
            const std::size_t i = (static_cast<std::size_t>(r) * size_ + c) * 3;
            const std::uint8_t px[3] = {static_cast<std::uint8_t>(built ? 200 : 60),
                                        static_cast<std::uint8_t>(built ? 200 : 140),
                                        static_cast<std::uint8_t>(built ? 200 : 50)};
            std::copy(px, px + 3, img.rgb.begin() + static_cast<std::ptrdiff_t>(i));
        }
    return img;
}

// ---- candidates ------------------------------------------------------------

const char* to_string(Status s) {
    switch (s) {
        case Status::pending: return "pending";
        case Status::confirmed: return "confirmed";
        case Status::rejected: return "rejected";
        case Status::unsure: return "unsure";
    }
    return "pending";
}

std::optional<Status> parse_status(const std::string& s) {
    for (Status st : {Status::pending, Status::confirmed, Status::rejected, Status::unsure})
        if (s == to_string(st)) return st;
    return std::nullopt;
}

std::string candidate_id(const geo::TileIndex& t) {
    return "c" + std::to_string(t.z) + "-" + std::to_string(t.x) + "-" + std::to_string(t.y);
}

json CandidateReport::to_json() const {
    json fails = json::array();
    for (const auto& f : failures) fails.push_back({{"tile", tile_key(f.tile)}, {"error", f.error}});
    return {{"candidates", candidates.size()}, {"cells_used", cells_used},     {"tiles_scored", tiles_scored},
            {"tiles_qualifying", tiles_qualifying}, {"suppressed", suppressed}, {"failures", fails}};
}

std::pair<geo::GeoPoint, std::optional<std::size_t>> snap_to_building(const geo::TileIndex& tile,
                                                                      const geo::FootprintIndex& buildings) {
    const auto box = geo::tile_bounds(tile);
    const auto center = box.center();
    std::optional<std::size_t> best;
    double best_d = 0.0;
    geo::GeoPoint best_point = center;
    for (std::size_t id : buildings.intersecting(box)) {
        const auto c = buildings.ring(id).centroid();
        const double d = geo::haversine_distance(center, c);
        if (!best || d < best_d) {
            best = id;
            best_d = d;
            best_point = c;
        }
    }
    return {best_point, best};
}

std::vector<Candidate> dedupe_candidates(std::vector<Candidate> raw, double dedupe_m, std::size_t* suppressed) {
    std::sort(raw.begin(), raw.end(), [](const Candidate& a, const Candidate& b) {
        if (a.probability != b.probability) return a.probability > b.probability;
        return a.id < b.id;
    });
    geo::SpatialIndex kept_index(std::max(0.001, dedupe_m / geo::kMetersPerDegree));
    std::vector<Candidate> kept;
    std::size_t dropped = 0;
    for (auto& c : raw) {
        if (kept_index.any_within(c.point, dedupe_m)) {
            ++dropped;
            continue;
        }
        kept_index.insert(kept.size(), c.point);
        kept.push_back(std::move(c));
    }
    if (suppressed) *suppressed = dropped;
    return kept;
}

CandidateReport generate_candidates(const forest::GapMap& gaps, const Scorer& scorer, const TileSource& tiles,
                                    const geo::FootprintIndex& buildings, const std::vector<std::string>& building_ids,
                                    const CandidateOptions& options) {
    std::vector<const forest::GapCell*> cells;
    for (const auto& c : gaps.cells)
        if (c.gap && *c.gap >= options.gap_min) cells.push_back(&c);
    std::sort(cells.begin(), cells.end(), [](const forest::GapCell* a, const forest::GapCell* b) {
        if (*a->gap != *b->gap) return *a->gap > *b->gap;
        return std::tie(a->row, a->col) < std::tie(b->row, b->col);
    });
    if (cells.size() > options.max_cells) cells.resize(options.max_cells);

    CandidateReport report;
    report.cells_used = cells.size();
    std::set<geo::TileIndex> visited;
    std::vector<Candidate> raw;
    for (const auto* cell : cells) {
        for (const auto& t : geo::tiles_covering(gaps.cell_bounds(*cell), options.zoom)) {
            if (!visited.insert(t).second) continue;
            TileImage img;
            try {
                img = tiles.fetch(t);
                img.validate();
            } catch (const std::exception& e) {
                report.failures.push_back({t, e.what()});
                continue;
            }
            const auto result = tta_score(scorer, img);
            ++report.tiles_scored;
            if (result.probability < options.p_min) continue;
            ++report.tiles_qualifying;
            auto [point, building] = snap_to_building(t, buildings);
            Candidate c;
            c.id = candidate_id(t);
            c.point = point;
            c.tile = t;
            c.probability = result.probability;
            c.uncertainty = std::abs(result.probability - 0.5);
            if (building) c.snapped_building_id = *building < building_ids.size() ? building_ids[*building]
                                                                                   : std::to_string(*building);
            raw.push_back(std::move(c));
        }
    }
    report.candidates = dedupe_candidates(std::move(raw), options.dedupe_m, &report.suppressed);
    return report;
}

void review_order(std::vector<Candidate>& candidates) {
    std::stable_sort(candidates.begin(), candidates.end(), [](const Candidate& a, const Candidate& b) {
        const double ua = std::abs(a.probability - 0.5), ub = std::abs(b.probability - 0.5);
        if (ua != ub) return ua < ub;
        return a.id < b.id;
    });
}

std::vector<Candidate> rank_review_queue(const std::vector<Candidate>& candidates) {
    std::vector<Candidate> out;
    for (const auto& c : candidates)
        if (c.status == Status::pending) out.push_back(c);
    review_order(out);
    return out;
}

json candidates_to_geojson(const std::vector<Candidate>& candidates) {
    json features = json::array();
    for (const auto& c : candidates) {
        json props = {{"id", c.id},
                      {"probability", c.probability},
                      {"uncertainty", c.uncertainty},
                      {"status", to_string(c.status)},
                      {"tile", {{"z", c.tile.z}, {"x", c.tile.x}, {"y", c.tile.y}}}};
        if (c.snapped_building_id) props["snapped_building_id"] = *c.snapped_building_id;
        features.push_back(geojson::feature(geojson::point_geometry(c.point), props));
    }
    return geojson::feature_collection(std::move(features));
}

std::vector<Candidate> candidates_from_geojson(const json& doc) {
    std::vector<Candidate> out;
    for (const auto& f : doc.at("features")) {
        const auto& p = f.at("properties");
        Candidate c;
        c.id = p.at("id").get<std::string>();
        c.point = geojson::parse_point(f.at("geometry"));
        const auto& t = p.at("tile");
        c.tile = geo::TileIndex(t.at("z").get<int>(), t.at("x").get<std::int64_t>(), t.at("y").get<std::int64_t>());
        c.probability = p.at("probability").get<double>();
        check_probability(c.probability, ("candidate " + c.id).c_str());
        c.uncertainty = std::abs(c.probability - 0.5);
        const auto status = parse_status(p.value("status", "pending"));
        if (!status) throw ScorerError("candidate " + c.id + " has an unknown status");
        c.status = *status;
        if (p.contains("snapped_building_id") && p["snapped_building_id"].is_string())
            c.snapped_building_id = p["snapped_building_id"].get<std::string>();
        out.push_back(std::move(c));
    }
    return out;
}

}  // namespace atlas::scorer
