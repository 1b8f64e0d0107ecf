#include "atlas/service.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "atlas/format.hpp"
#include "atlas/geojson.hpp"
#include "atlas/http_util.hpp"
#include "httplib.h"

namespace atlas::service {

namespace {

std::string lower(std::string_view s) {
    std::string out(s);
    std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return out;
}

std::string_view trim(std::string_view s) {
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.front()))) s.remove_prefix(1);
    while (!s.empty() && std::isspace(static_cast<unsigned char>(s.back()))) s.remove_suffix(1);
    return s;
}

template <class T>
std::optional<T> parse_number(std::string_view s) {
    T v{};
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::optional<geo::TileIndex> parse_tile(std::string_view z, std::string_view x, std::string_view y) {
    const auto zz = parse_number<int>(z);
    const auto xx = parse_number<std::int64_t>(x);
    const auto yy = parse_number<std::int64_t>(y);
    if (!zz || !xx || !yy) return std::nullopt;
    try {
        return geo::TileIndex(*zz, *xx, *yy);
    } catch (const geo::GeoError&) {
        return std::nullopt;
    }
}

std::string tile_path(const geo::TileIndex& t) {
    return std::to_string(t.z) + "/" + std::to_string(t.x) + "/" + std::to_string(t.y);
}

Response json_response(int status, const json& body) {
    Response r;
    r.status = status;
    r.body = body.dump();
    return r;
}

Response error_response(int status, const std::string& message) { return json_response(status, {{"error", message}}); }

struct TileFetchFailed : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Howard Hinnant's civil calendar conversions.
std::int64_t days_from_civil(std::int64_t y, unsigned m, unsigned d) {
    y -= m <= 2;
    const std::int64_t era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

void civil_from_days(std::int64_t z, std::int64_t& y, unsigned& m, unsigned& d) {
    z += 719468;
    const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
    const auto doe = static_cast<unsigned>(z - era * 146097);
    const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
    y = static_cast<std::int64_t>(yoe) + era * 400;
    const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
    const unsigned mp = (5 * doy + 2) / 153;
    d = doy - (153 * mp + 2) / 5 + 1;
    m = mp < 10 ? mp + 3 : mp - 9;
    y += m <= 2;
}

std::int64_t floor_div(std::int64_t a, std::int64_t b) { return a / b - ((a % b != 0) && ((a < 0) != (b < 0))); }

}  // namespace

// ---- upstream tiles --------------------------------------------------------

CacheControl parse_cache_control(std::string_view header) {
    CacheControl cc;
    std::size_t start = 0;
    while (start <= header.size()) {
        auto end = header.find(',', start);
        if (end == std::string_view::npos) end = header.size();
        const std::string part = lower(trim(header.substr(start, end - start)));
        if (part == "no-store" || part == "no-cache") {
            cc.no_store = true;
        } else if (part.starts_with("max-age=")) {
            std::string_view v = std::string_view(part).substr(8);
            if (v.size() >= 2 && v.front() == '"' && v.back() == '"') v = v.substr(1, v.size() - 2);
            if (auto n = parse_number<std::int64_t>(v); n && *n >= 0) cc.max_age = std::chrono::seconds(*n);
        }
        start = end + 1;
    }
    return cc;
}

std::string expand_template(std::string_view tmpl, const geo::TileIndex& tile) {
    const auto b = geo::tile_bounds(tile);
    const auto bbox = format_double(b.min_lon) + "," + format_double(b.min_lat) + "," + format_double(b.max_lon) +
                      "," + format_double(b.max_lat);
    constexpr double r = 6378137.0;
    auto mx = [&](double lon) { return r * geo::deg2rad(lon); };
    auto my = [&](double lat) { return r * std::log(std::tan(geo::kPi / 4.0 + geo::deg2rad(lat) / 2.0)); };
    const auto bbox3857 = format_double(mx(b.min_lon)) + "," + format_double(my(b.min_lat)) + "," +
                          format_double(mx(b.max_lon)) + "," + format_double(my(b.max_lat));
    const std::pair<std::string_view, std::string> subs[] = {{"{z}", std::to_string(tile.z)},
                                                             {"{x}", std::to_string(tile.x)},
                                                             {"{y}", std::to_string(tile.y)},
                                                             {"{bbox}", bbox},
                                                             {"{bbox3857}", bbox3857}};
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        bool matched = false;
        if (tmpl[i] == '{') {
            for (const auto& [token, value] : subs) {
                if (tmpl.substr(i, token.size()) == token) {
                    out += value;
                    i += token.size();
                    matched = true;
                    break;
                }
            }
        }
        if (!matched) out += tmpl[i++];
    }
    return out;
}

HttpUpstream::HttpUpstream(std::string url_template, std::chrono::milliseconds timeout)
    : template_(std::move(url_template)), timeout_(timeout) {
    if (!http::is_http_url(template_)) throw std::invalid_argument("upstream template is not an http(s) URL");
}

UpstreamReply HttpUpstream::do_fetch(const geo::TileIndex& tile) {
    const auto url = http::parse_url(expand_template(template_, tile));
    httplib::Client cli(url.origin());
    cli.set_connection_timeout(timeout_);
    cli.set_read_timeout(timeout_);
    cli.set_follow_location(true);
    auto res = cli.Get(url.path);
    if (!res) throw UpstreamUnavailable("upstream unreachable: " + httplib::to_string(res.error()));
    UpstreamReply reply;
    reply.status = res->status;
    reply.body = std::move(res->body);
    reply.cache = parse_cache_control(res->get_header_value("Cache-Control"));
    return reply;
}

FileUpstream::FileUpstream(std::string path_template) : template_(std::move(path_template)) {
    if (template_.starts_with("file://")) template_ = template_.substr(7);
}

std::string FileUpstream::key(const geo::TileIndex& tile) const { return "file://" + expand_template(template_, tile); }

UpstreamReply FileUpstream::do_fetch(const geo::TileIndex& tile) {
    std::ifstream in(expand_template(template_, tile), std::ios::binary);
    UpstreamReply reply;
    if (!in) {
        reply.status = 404;
        return reply;
    }
    std::ostringstream ss;
    ss << in.rdbuf();
    reply.body = std::move(ss).str();
    return reply;
}

RenderedUpstream::RenderedUpstream(std::shared_ptr<const geo::FootprintIndex> buildings, int size)
    : source_(std::move(buildings), size) {}

std::string RenderedUpstream::key(const geo::TileIndex& tile) const { return "rendered/" + tile_path(tile); }

UpstreamReply RenderedUpstream::do_fetch(const geo::TileIndex& tile) {
    UpstreamReply reply;
    reply.body = png::encode(source_.fetch(tile).to_image());
    return reply;
}

std::unique_ptr<TileUpstream> make_upstream(const std::string& tmpl,
                                            std::shared_ptr<const geo::FootprintIndex> buildings) {
    if (tmpl == "rendered") {
        if (!buildings) throw std::invalid_argument("rendered upstream needs building footprints");
        return std::make_unique<RenderedUpstream>(std::move(buildings));
    }
    if (http::is_http_url(tmpl)) return std::make_unique<HttpUpstream>(tmpl);
    return std::make_unique<FileUpstream>(tmpl);
}

// ---- saliency overlay ------------------------------------------------------

std::array<std::uint8_t, 3> warm_color(int index) {
    index = std::clamp(index, 0, 255);
    return {255, static_cast<std::uint8_t>(255 - index), 0};
}

png::Image render_saliency(const scorer::Saliency& saliency, int out_size) {
    const int n = saliency.size;
    if (n <= 0 || saliency.values.size() != static_cast<std::size_t>(n) * n)
        throw ServiceError("saliency grid has inconsistent size");
    if (out_size <= 0) throw ServiceError("overlay size must be positive");
    png::Image img{out_size, out_size, 4, std::vector<std::uint8_t>(static_cast<std::size_t>(out_size) * out_size * 4)};
    for (int r = 0; r < out_size; ++r) {
        const int sr = static_cast<int>(static_cast<std::int64_t>(r) * n / out_size);
        for (int c = 0; c < out_size; ++c) {
            const int sc = static_cast<int>(static_cast<std::int64_t>(c) * n / out_size);
            double v = saliency.at(sr, sc);
            v = std::isfinite(v) ? std::clamp(v, 0.0, 1.0) : 0.0;
            const auto color = warm_color(static_cast<int>(std::lround(255.0 * v)));
            auto* px = &img.pixels[(static_cast<std::size_t>(r) * out_size + c) * 4];
            px[0] = color[0];
            px[1] = color[1];
            px[2] = color[2];
            px[3] = static_cast<std::uint8_t>(std::lround(180.0 * v));
        }
    }
    return img;
}

// ---- feedback --------------------------------------------------------------

std::string format_timestamp(std::chrono::system_clock::time_point t) {
    const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count();
    const std::int64_t days = floor_div(ms, 86400000);
    const std::int64_t rem = ms - days * 86400000;
    std::int64_t y = 0;
    unsigned m = 0, d = 0;
    civil_from_days(days, y, m, d);
    char buf[40];
    std::snprintf(buf, sizeof buf, "%04lld-%02u-%02uT%02d:%02d:%02d.%03dZ", static_cast<long long>(y), m, d,
                  static_cast<int>(rem / 3600000), static_cast<int>(rem / 60000 % 60), static_cast<int>(rem / 1000 % 60),
                  static_cast<int>(rem % 1000));
    return buf;
}

std::optional<std::int64_t> parse_timestamp(std::string_view s) {
    auto field = [&](std::size_t pos, std::size_t len) -> std::optional<int> {
        if (pos + len > s.size()) return std::nullopt;
        int v = 0;
        for (std::size_t i = pos; i < pos + len; ++i) {
            if (s[i] < '0' || s[i] > '9') return std::nullopt;
            v = v * 10 + (s[i] - '0');
        }
        return v;
    };
    if (s.size() < 20 || s[4] != '-' || s[7] != '-' || s[10] != 'T' || s[13] != ':' || s[16] != ':') return std::nullopt;
    const auto y = field(0, 4), mo = field(5, 2), d = field(8, 2), h = field(11, 2), mi = field(14, 2),
               sec = field(17, 2);
    if (!y || !mo || !d || !h || !mi || !sec) return std::nullopt;
    if (*mo < 1 || *mo > 12 || *d < 1 || *d > 31 || *h > 23 || *mi > 59 || *sec > 59) return std::nullopt;
    std::size_t pos = 19;
    int millis = 0;
    if (s[pos] == '.') {
        ++pos;
        const std::size_t begin = pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') {
            if (pos - begin < 3) millis = millis * 10 + (s[pos] - '0');
            ++pos;
        }
        if (pos == begin) return std::nullopt;
        for (std::size_t k = pos - begin; k < 3; ++k) millis *= 10;
    }
    if (pos + 1 != s.size() || s[pos] != 'Z') return std::nullopt;
    const auto days = days_from_civil(*y, static_cast<unsigned>(*mo), static_cast<unsigned>(*d));
    std::int64_t cy = 0;
    unsigned cm = 0, cd = 0;
    civil_from_days(days, cy, cm, cd);
    if (cy != *y || static_cast<int>(cm) != *mo || static_cast<int>(cd) != *d) return std::nullopt;
    return days * 86400000 + ((static_cast<std::int64_t>(*h) * 60 + *mi) * 60 + *sec) * 1000 + millis;
}

json FeedbackRecord::to_json() const {
    return {{"candidate_id", candidate_id},
            {"verdict", scorer::to_string(verdict)},
            {"operator", operator_name},
            {"timestamp", timestamp},
            {"probability_at_review", probability_at_review}};
}

FeedbackRecord FeedbackRecord::from_json(const json& j) {
    if (!j.is_object()) throw ServiceError("feedback record is not an object");
    auto str = [&](const char* key) {
        auto it = j.find(key);
        if (it == j.end() || !it->is_string()) throw ServiceError(std::string("feedback record lacks string '") + key + "'");
        return it->get<std::string>();
    };
    FeedbackRecord r;
    r.candidate_id = str("candidate_id");
    const auto verdict = scorer::parse_status(str("verdict"));
    if (!verdict || *verdict == scorer::Status::pending) throw ServiceError("invalid verdict in feedback record");
    r.verdict = *verdict;
    r.operator_name = str("operator");
    r.timestamp = str("timestamp");
    if (!parse_timestamp(r.timestamp)) throw ServiceError("invalid timestamp '" + r.timestamp + "'");
    auto p = j.find("probability_at_review");
    if (p == j.end() || !p->is_number()) throw ServiceError("feedback record lacks probability_at_review");
    r.probability_at_review = p->get<double>();
    if (!(r.probability_at_review >= 0.0 && r.probability_at_review <= 1.0))
        throw ServiceError("probability_at_review out of range");
    return r;
}

void apply_feedback(ReviewState& state, const FeedbackRecord& record) {
    const auto ms = parse_timestamp(record.timestamp);
    if (!ms) throw ServiceError("invalid timestamp '" + record.timestamp + "'");
    if (state.reviews == 0 || *ms >= state.latest_ms) {
        state.status = record.verdict;
        state.latest_ms = *ms;
        state.last_reviewed = record.timestamp;
    }
    if (state.reviews == 0 || *ms < state.earliest_ms) {
        state.earliest_ms = *ms;
        state.first_reviewed = record.timestamp;
    }
    ++state.reviews;
    if (std::find(state.operators.begin(), state.operators.end(), record.operator_name) == state.operators.end())
        state.operators.push_back(record.operator_name);
}

ReviewBook::ReviewBook(std::vector<scorer::Candidate> candidates, const std::vector<FeedbackRecord>& records)
    : candidates_(std::move(candidates)), reviews_(candidates_.size()) {
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        if (!by_id_.emplace(candidates_[i].id, i).second)
            throw ServiceError("duplicate candidate id " + candidates_[i].id);
        reviews_[i].status = candidates_[i].status;
    }
    for (const auto& rec : records)
        if (!apply(rec)) ++orphans_;
}

std::optional<std::size_t> ReviewBook::index_of(const std::string& id) const {
    auto it = by_id_.find(id);
    if (it == by_id_.end()) return std::nullopt;
    return it->second;
}

bool ReviewBook::apply(const FeedbackRecord& record) {
    const auto i = index_of(record.candidate_id);
    if (!i) return false;
    apply_feedback(reviews_[*i], record);
    candidates_[*i].status = reviews_[*i].status;
    return true;
}

json ReviewBook::export_geojson(scorer::Status status) const {
    json features = json::array();
    for (std::size_t i = 0; i < candidates_.size(); ++i) {
        const auto& c = candidates_[i];
        if (c.status != status) continue;
        const auto& rv = reviews_[i];
        json props = {{"id", c.id},
                      {"status", scorer::to_string(c.status)},
                      {"probability", c.probability},
                      {"uncertainty", c.uncertainty},
                      {"tile", tile_path(c.tile)},
                      {"snapped_building_id", c.snapped_building_id ? json(*c.snapped_building_id) : json()},
                      {"reviews", rv.reviews},
                      {"operator_count", rv.operators.size()},
                      {"first_reviewed", rv.reviews ? json(rv.first_reviewed) : json()},
                      {"last_reviewed", rv.reviews ? json(rv.last_reviewed) : json()},
                      {"source", "validated-candidate"}};
        features.push_back(geojson::feature(geojson::point_geometry(c.point), std::move(props)));
    }
    return geojson::feature_collection(std::move(features));
}

FeedbackLog::FeedbackLog(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.has_parent_path()) std::filesystem::create_directories(path_.parent_path());
}

std::vector<FeedbackRecord> FeedbackLog::read_all() const {
    std::vector<FeedbackRecord> out;
    std::ifstream in(path_);
    if (!in) return out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        try {
            out.push_back(FeedbackRecord::from_json(json::parse(line)));
        } catch (const std::exception& e) {
            throw ServiceError("feedback log " + path_.string() + " line " + std::to_string(n) + ": " + e.what());
        }
    }
    return out;
}

void FeedbackLog::append(const FeedbackRecord& record) {
    std::lock_guard lock(mu_);
    std::ofstream out(path_, std::ios::app | std::ios::binary);
    if (!out) throw ServiceError("cannot open feedback log " + path_.string());
    out << record.to_json().dump() << '\n';
    out.flush();
    if (!out) throw ServiceError("failed writing feedback log " + path_.string());
}

// ---- service ---------------------------------------------------------------

std::vector<GroundTruthPoint> ground_truth_from_geojson(const json& doc) {
    std::vector<GroundTruthPoint> out;
    if (!doc.is_object() || !doc.contains("features") || !doc["features"].is_array())
        throw ServiceError("ground truth is not a FeatureCollection");
    for (const auto& f : doc["features"]) {
        const auto& g = f.value("geometry", json());
        if (!g.is_object() || g.value("type", "") != "Point") continue;
        GroundTruthPoint p{geojson::parse_point(g), f.value("properties", json::object())};
        if (!p.properties.is_object()) p.properties = json::object();
        out.push_back(std::move(p));
    }
    return out;
}

std::optional<geo::BBox> parse_bbox_param(std::string_view s) {
    double v[4];
    std::size_t start = 0;
    for (int i = 0; i < 4; ++i) {
        const auto end = i < 3 ? s.find(',', start) : s.size();
        if (end == std::string_view::npos) return std::nullopt;
        const auto n = parse_number<double>(trim(s.substr(start, end - start)));
        if (!n || !std::isfinite(*n)) return std::nullopt;
        v[i] = *n;
        start = end + 1;
    }
    const double min_lon = v[0], min_lat = v[1], max_lon = v[2], max_lat = v[3];
    if (min_lon < -180 || max_lon > 180 || min_lat < -90 || max_lat > 90 || min_lon > max_lon || min_lat > max_lat)
        return std::nullopt;
    return geo::BBox(min_lat, min_lon, max_lat, max_lon);
}

Service::Service(ServiceOptions options, std::shared_ptr<const scorer::Scorer> scorer,
                 std::shared_ptr<TileUpstream> upstream, std::vector<GroundTruthPoint> ground_truth,
                 std::vector<scorer::Candidate> candidates, std::filesystem::path feedback_log, SteadyClock steady,
                 WallClock wall)
    : options_(options),
      scorer_(std::move(scorer)),
      upstream_(std::move(upstream)),
      ground_truth_(std::move(ground_truth)),
      wall_(wall ? std::move(wall) : WallClock([] { return std::chrono::system_clock::now(); })),
      tile_cache_(options.tile_cache_capacity, steady),
      prediction_cache_(options.prediction_cache_capacity, steady),
      log_(std::move(feedback_log)),
      book_(std::move(candidates), log_.read_all()) {
    if (!scorer_) throw ServiceError("no scorer configured");
    if (!upstream_) throw ServiceError("no tile upstream configured");
}

std::shared_ptr<const scorer::Scorer> Service::current_scorer() const {
    std::lock_guard lock(scorer_mu_);
    return scorer_;
}

void Service::set_scorer(std::shared_ptr<const scorer::Scorer> scorer) {
    if (!scorer) throw ServiceError("no scorer configured");
    std::lock_guard lock(scorer_mu_);
    scorer_ = std::move(scorer);
}

Service::TileBytes Service::tile_bytes(const geo::TileIndex& t) {
    const auto key = upstream_->key(t);
    if (auto hit = tile_cache_.get(key)) return {std::move(*hit), true};
    UpstreamReply reply;
    try {
        reply = upstream_->fetch(t);
    } catch (const std::exception& e) {
        throw TileFetchFailed(e.what());
    }
    if (reply.status != 200) throw TileFetchFailed("upstream status " + std::to_string(reply.status));
    const auto ttl = reply.cache.max_age.value_or(options_.tile_fallback_ttl);
    if (!reply.cache.no_store && ttl.count() > 0) tile_cache_.put(key, reply.body, ttl);
    return {std::move(reply.body), false};
}

Service::Outcome Service::score_tile(const geo::TileIndex& t, const scorer::Scorer& s, bool tta) {
    TileBytes bytes;
    try {
        bytes = tile_bytes(t);
    } catch (const std::exception& e) {
        return {502, e.what(), {}};
    }
    scorer::TileImage img;
    try {
        img = scorer::TileImage::from_png(bytes.body, t);
        img.validate();
    } catch (const std::exception& e) {
        return {502, std::string("upstream tile unusable: ") + e.what(), {}};
    }
    try {
        return {200, "", tta ? scorer::tta_score(s, img) : s.score(img)};
    } catch (const std::exception& e) {
        return {503, std::string("scorer error: ") + e.what(), {}};
    }
}

std::pair<Service::Outcome, bool> Service::cached_score(const std::string& key, const std::function<Outcome()>& compute) {
    if (auto hit = prediction_cache_.get(key)) return {Outcome{200, "", std::move(*hit)}, true};
    std::promise<Outcome> promise;
    {
        std::unique_lock lock(inflight_mu_);
        if (auto it = inflight_.find(key); it != inflight_.end()) {
            auto fut = it->second;
            lock.unlock();
            return {fut.get(), false};
        }
        if (auto hit = prediction_cache_.get(key)) return {Outcome{200, "", std::move(*hit)}, true};
        inflight_.emplace(key, promise.get_future().share());
    }
    Outcome out;
    try {
        out = compute();
    } catch (const std::exception& e) {
        out = {500, e.what(), {}};
    }
    if (out.status == 200) prediction_cache_.put(key, out.result, options_.prediction_ttl);
    {
        std::lock_guard lock(inflight_mu_);
        inflight_.erase(key);
    }
    promise.set_value(out);
    return {out, false};
}

Response Service::tile(std::string_view z, std::string_view x, std::string_view y) {
    const auto t = parse_tile(z, x, y);
    if (!t) return error_response(400, "invalid tile coordinates");
    try {
        auto bytes = tile_bytes(*t);
        Response r;
        r.content_type = "image/png";
        r.body = std::move(bytes.body);
        r.headers["X-Cache"] = bytes.hit ? "hit" : "miss";
        return r;
    } catch (const TileFetchFailed& e) {
        return error_response(502, e.what());
    }
}

Response Service::predict(std::string_view z, std::string_view x, std::string_view y) {
    const auto t = parse_tile(z, x, y);
    if (!t) return error_response(400, "invalid tile coordinates");
    const auto s = current_scorer();
    const auto key = "predict|" + tile_path(*t) + "|" + s->version();
    auto [out, cached] = cached_score(key, [&] { return score_tile(*t, *s, true); });
    if (out.status != 200) return error_response(out.status, out.error);
    return json_response(200, {{"probability", out.result.probability},
                               {"model_version", out.result.model_version},
                               {"cached", cached}});
}

Response Service::saliency(std::string_view z, std::string_view x, std::string_view y) {
    const auto t = parse_tile(z, x, y);
    if (!t) return error_response(400, "invalid tile coordinates");
    const auto s = current_scorer();
    const auto key = "saliency|" + tile_path(*t) + "|" + s->version();
    auto [out, cached] = cached_score(key, [&] { return score_tile(*t, *s, false); });
    if (out.status != 200) return error_response(out.status, out.error);
    if (!out.result.saliency) return error_response(404, "scorer provides no saliency for this tile");
    try {
        Response r;
        r.content_type = "image/png";
        r.body = png::encode(render_saliency(*out.result.saliency, options_.saliency_size));
        r.headers["X-Cache"] = cached ? "hit" : "miss";
        return r;
    } catch (const std::exception& e) {
        return error_response(503, std::string("scorer error: ") + e.what());
    }
}

Response Service::groundtruth(const std::optional<std::string>& bbox) const {
    std::optional<geo::BBox> box;
    if (bbox) {
        box = parse_bbox_param(*bbox);
        if (!box) return error_response(400, "malformed bbox, expected minLon,minLat,maxLon,maxLat");
    }
    json features = json::array();
    for (const auto& g : ground_truth_)
        if (!box || box->contains(g.point))
            features.push_back(geojson::feature(geojson::point_geometry(g.point), g.properties));
    auto r = json_response(200, geojson::feature_collection(std::move(features)));
    r.content_type = "application/geo+json";
    return r;
}

Response Service::candidates(const std::optional<std::string>& bbox, const std::optional<std::string>& status) const {
    std::optional<geo::BBox> box;
    if (bbox) {
        box = parse_bbox_param(*bbox);
        if (!box) return error_response(400, "malformed bbox, expected minLon,minLat,maxLon,maxLat");
    }
    std::optional<scorer::Status> want;
    if (status && *status != "all") {
        want = scorer::parse_status(*status);
        if (!want) return error_response(400, "invalid status filter '" + *status + "'");
    }
    std::vector<scorer::Candidate> out;
    for (auto& c : current_candidates())
        if ((!box || box->contains(c.point)) && (!want || c.status == *want)) out.push_back(std::move(c));
    scorer::review_order(out);
    auto r = json_response(200, scorer::candidates_to_geojson(out));
    r.content_type = "application/geo+json";
    return r;
}

Response Service::feedback(const std::string& body) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::exception&) {
        return error_response(400, "request body is not valid JSON");
    }
    if (!j.is_object()) return error_response(400, "request body must be a JSON object");
    for (const char* key : {"candidate_id", "verdict", "operator"})
        if (!j.contains(key) || !j[key].is_string()) return error_response(400, std::string("missing string field '") + key + "'");
    const auto verdict = scorer::parse_status(j["verdict"].get<std::string>());
    if (!verdict || *verdict == scorer::Status::pending)
        return error_response(400, "verdict must be confirmed, rejected or unsure");
    const auto id = j["candidate_id"].get<std::string>();

    std::lock_guard lock(state_mu_);
    const auto idx = book_.index_of(id);
    if (!idx) return error_response(404, "unknown candidate " + id);
    FeedbackRecord rec;
    rec.candidate_id = id;
    rec.verdict = *verdict;
    rec.operator_name = j["operator"].get<std::string>();
    rec.timestamp = format_timestamp(wall_());
    rec.probability_at_review = book_.candidates()[*idx].probability;
    try {
        log_.append(rec);
    } catch (const std::exception& e) {
        return error_response(500, e.what());
    }
    book_.apply(rec);
    return json_response(200, {{"candidate_id", id}, {"status", scorer::to_string(book_.review(*idx).status)}});
}

Response Service::export_geojson(const std::optional<std::string>& status) const {
    const auto want = scorer::parse_status(status.value_or("confirmed"));
    if (!want) return error_response(400, "invalid status filter '" + *status + "'");
    std::lock_guard lock(state_mu_);
    auto r = json_response(200, book_.export_geojson(*want));
    r.content_type = "application/geo+json";
    return r;
}

std::vector<scorer::Candidate> Service::current_candidates() const {
    std::lock_guard lock(state_mu_);
    return book_.candidates();
}

std::size_t Service::orphan_feedback() const {
    std::lock_guard lock(state_mu_);
    return book_.orphans();
}

void mount(httplib::Server& server, Service& service) {
    auto send = [](httplib::Response& res, Response r) {
        res.status = r.status;
        for (const auto& [k, v] : r.headers) res.set_header(k, v);
        res.set_content(std::move(r.body), r.content_type);
    };
    auto param = [](const httplib::Request& req, const char* name) -> std::optional<std::string> {
        if (!req.has_param(name)) return std::nullopt;
        return req.get_param_value(name);
    };
    server.Get(R"(/tiles/([^/]+)/([^/]+)/([^/]+)\.png)", [&service, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.tile(req.matches[1].str(), req.matches[2].str(), req.matches[3].str()));
    });
    server.Get(R"(/predict/([^/]+)/([^/]+)/([^/]+))", [&service, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.predict(req.matches[1].str(), req.matches[2].str(), req.matches[3].str()));
    });
    server.Get(R"(/saliency/([^/]+)/([^/]+)/([^/]+)\.png)", [&service, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.saliency(req.matches[1].str(), req.matches[2].str(), req.matches[3].str()));
    });
    server.Get("/groundtruth", [&service, send, param](const httplib::Request& req, httplib::Response& res) {
        send(res, service.groundtruth(param(req, "bbox")));
    });
    server.Get("/candidates", [&service, send, param](const httplib::Request& req, httplib::Response& res) {
        send(res, service.candidates(param(req, "bbox"), param(req, "status")));
    });
    server.Post("/feedback", [&service, send](const httplib::Request& req, httplib::Response& res) {
        send(res, service.feedback(req.body));
    });
    server.Get("/export", [&service, send, param](const httplib::Request& req, httplib::Response& res) {
        send(res, service.export_geojson(param(req, "status")));
    });
}

}  // namespace atlas::service
