#pragma once

#include <array>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <future>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "atlas/geo.hpp"
#include "atlas/lru.hpp"
#include "atlas/png.hpp"
#include "atlas/scorer.hpp"
#include "json.hpp"

namespace httplib {
class Server;
}

namespace atlas::service {

using nlohmann::json;

struct ServiceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// ---- upstream tiles --------------------------------------------------------

struct CacheControl {
    std::optional<std::chrono::seconds> max_age;
    bool no_store = false;
};

/// Reads max-age and no-store/no-cache from a Cache-Control header value.
CacheControl parse_cache_control(std::string_view header);

/// Substitutes {z}, {x}, {y}, {bbox} (minLon,minLat,maxLon,maxLat in
/// EPSG:4326) and {bbox3857} (Web-Mercator metres) in a URL or path template.
std::string expand_template(std::string_view tmpl, const geo::TileIndex& tile);

struct UpstreamReply {
    int status = 200;
    std::string body;
    CacheControl cache;
};

/// Thrown for transport failures (as opposed to an HTTP error status).
struct UpstreamUnavailable : std::runtime_error {
    using std::runtime_error::runtime_error;
};

class TileUpstream {
public:
    virtual ~TileUpstream() = default;

    UpstreamReply fetch(const geo::TileIndex& tile) {
        ++fetches_;
        return do_fetch(tile);
    }
    /// Cache key of the tile, normally the expanded upstream URL.
    virtual std::string key(const geo::TileIndex& tile) const = 0;
    std::size_t fetches() const { return fetches_.load(); }

protected:
    virtual UpstreamReply do_fetch(const geo::TileIndex& tile) = 0;

private:
    std::atomic<std::size_t> fetches_{0};
};

/// XYZ or WMS GetMap URL template over http(s).
class HttpUpstream : public TileUpstream {
public:
    explicit HttpUpstream(std::string url_template, std::chrono::milliseconds timeout = std::chrono::seconds(10));
    std::string key(const geo::TileIndex& tile) const override { return expand_template(template_, tile); }

protected:
    UpstreamReply do_fetch(const geo::TileIndex& tile) override;

private:
    std::string template_;
    std::chrono::milliseconds timeout_;
};

/// Local tile files addressed by a path template; a missing file is a 404.
class FileUpstream : public TileUpstream {
public:
    explicit FileUpstream(std::string path_template);
    std::string key(const geo::TileIndex& tile) const override;

protected:
    UpstreamReply do_fetch(const geo::TileIndex& tile) override;

private:
    std::string template_;
};

/// Footprints drawn on the fly (see scorer::RenderedTileSource).
class RenderedUpstream : public TileUpstream {
public:
    explicit RenderedUpstream(std::shared_ptr<const geo::FootprintIndex> buildings, int size = 256);
    std::string key(const geo::TileIndex& tile) const override;

protected:
    UpstreamReply do_fetch(const geo::TileIndex& tile) override;

private:
    scorer::RenderedTileSource source_;
};

/// "rendered" -> RenderedUpstream, http(s) URL -> HttpUpstream, anything else
/// (optionally prefixed file://) -> FileUpstream.
std::unique_ptr<TileUpstream> make_upstream(const std::string& tmpl,
                                            std::shared_ptr<const geo::FootprintIndex> buildings);

// ---- saliency overlay ------------------------------------------------------

/// Warm colormap: r = 255, g = 255 - i, b = 0.
std::array<std::uint8_t, 3> warm_color(int index);

/// Nearest-neighbour resample to out_size, colour by round(255 v), alpha
/// round(180 v).
png::Image render_saliency(const scorer::Saliency& saliency, int out_size = 256);

// ---- feedback --------------------------------------------------------------

using WallClock = std::function<std::chrono::system_clock::time_point()>;

/// "YYYY-MM-DDTHH:MM:SS.mmmZ"
std::string format_timestamp(std::chrono::system_clock::time_point t);
/// Milliseconds since the epoch; accepts an optional fraction of any length.
std::optional<std::int64_t> parse_timestamp(std::string_view s);

struct FeedbackRecord {
    std::string candidate_id;
    scorer::Status verdict = scorer::Status::unsure;
    std::string operator_name;
    std::string timestamp;
    double probability_at_review = 0.0;

    json to_json() const;
    /// Throws ServiceError on schema violations.
    static FeedbackRecord from_json(const json& j);
};

/// Review history of one candidate, folded from the log.
struct ReviewState {
    scorer::Status status = scorer::Status::pending;
    std::int64_t earliest_ms = 0;
    std::int64_t latest_ms = 0;
    std::size_t reviews = 0;
    std::vector<std::string> operators;  // distinct, first-seen order
    std::string first_reviewed;
    std::string last_reviewed;
};

/// Applies one record: the status follows the latest timestamp, ties going
/// to the later record.
void apply_feedback(ReviewState& state, const FeedbackRecord& record);

/// Candidates with review state folded from feedback records.
class ReviewBook {
public:
    /// Throws ServiceError on duplicate candidate ids. Records for unknown
    /// candidates are counted as orphans.
    ReviewBook(std::vector<scorer::Candidate> candidates, const std::vector<FeedbackRecord>& records = {});

    std::optional<std::size_t> index_of(const std::string& id) const;
    /// Returns false for an unknown candidate.
    bool apply(const FeedbackRecord& record);

    const std::vector<scorer::Candidate>& candidates() const { return candidates_; }
    const ReviewState& review(std::size_t i) const { return reviews_[i]; }
    std::size_t orphans() const { return orphans_; }

    /// Candidates with the given status as points with review provenance.
    json export_geojson(scorer::Status status) const;

private:
    std::vector<scorer::Candidate> candidates_;
    std::vector<ReviewState> reviews_;
    std::unordered_map<std::string, std::size_t> by_id_;
    std::size_t orphans_ = 0;
};

/// Append-only JSONL file; appends are serialized and flushed per record.
class FeedbackLog {
public:
    explicit FeedbackLog(std::filesystem::path path);
    /// Every record in file order; throws ServiceError naming a bad line.
    std::vector<FeedbackRecord> read_all() const;
    void append(const FeedbackRecord& record);
    const std::filesystem::path& path() const { return path_; }

private:
    std::filesystem::path path_;
    std::mutex mu_;
};

// ---- service ---------------------------------------------------------------

struct GroundTruthPoint {
    geo::GeoPoint point;
    json properties;
};

/// Point features of a GeoJSON FeatureCollection; other geometries are skipped.
std::vector<GroundTruthPoint> ground_truth_from_geojson(const json& doc);

/// "minLon,minLat,maxLon,maxLat"; nullopt when malformed.
std::optional<geo::BBox> parse_bbox_param(std::string_view s);

struct ServiceOptions {
    std::size_t tile_cache_capacity = 4096;
    std::chrono::seconds tile_fallback_ttl{24 * 3600};
    std::size_t prediction_cache_capacity = 8192;
    std::chrono::seconds prediction_ttl{3600};
    int saliency_size = 256;
};

struct Response {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;
};

class Service {
public:
    Service(ServiceOptions options, std::shared_ptr<const scorer::Scorer> scorer,
            std::shared_ptr<TileUpstream> upstream, std::vector<GroundTruthPoint> ground_truth,
            std::vector<scorer::Candidate> candidates, std::filesystem::path feedback_log,
            SteadyClock steady = default_steady_clock(), WallClock wall = nullptr);

    Response tile(std::string_view z, std::string_view x, std::string_view y);
    Response predict(std::string_view z, std::string_view x, std::string_view y);
    Response saliency(std::string_view z, std::string_view x, std::string_view y);
    Response groundtruth(const std::optional<std::string>& bbox) const;
    Response candidates(const std::optional<std::string>& bbox, const std::optional<std::string>& status) const;
    Response feedback(const std::string& body);
    Response export_geojson(const std::optional<std::string>& status) const;

    /// Later predictions are keyed by the new scorer's version.
    void set_scorer(std::shared_ptr<const scorer::Scorer> scorer);

    /// Candidates with their current review status, in input order.
    std::vector<scorer::Candidate> current_candidates() const;
    std::size_t orphan_feedback() const;

private:
    struct Outcome {
        int status = 200;
        std::string error;
        scorer::ScoreResult result;
    };
    struct TileBytes {
        std::string body;
        bool hit = false;
    };

    std::shared_ptr<const scorer::Scorer> current_scorer() const;
    TileBytes tile_bytes(const geo::TileIndex& t);
    Outcome score_tile(const geo::TileIndex& t, const scorer::Scorer& s, bool tta);
    std::pair<Outcome, bool> cached_score(const std::string& key, const std::function<Outcome()>& compute);

    ServiceOptions options_;
    mutable std::mutex scorer_mu_;
    std::shared_ptr<const scorer::Scorer> scorer_;
    std::shared_ptr<TileUpstream> upstream_;
    std::vector<GroundTruthPoint> ground_truth_;
    WallClock wall_;

    LruCache<std::string, std::string> tile_cache_;
    LruCache<std::string, scorer::ScoreResult> prediction_cache_;
    std::mutex inflight_mu_;
    std::unordered_map<std::string, std::shared_future<Outcome>> inflight_;

    mutable std::mutex state_mu_;
    FeedbackLog log_;
    ReviewBook book_;
};

/// Registers every endpoint on `server`.
void mount(httplib::Server& server, Service& service);

}  // namespace atlas::service
