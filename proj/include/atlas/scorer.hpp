#pragma once

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "atlas/forest.hpp"
#include "atlas/geo.hpp"
#include "atlas/png.hpp"
#include "atlas/spatial_index.hpp"
#include "json.hpp"

namespace atlas::scorer {

struct ScorerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Square RGB tile, row 0 at the top (north).
struct TileImage {
    int size = 256;
    std::vector<std::uint8_t> rgb;
    geo::BBox bounds;
    geo::TileIndex tile;

    void validate() const;
    png::Image to_image() const { return {size, size, 3, rgb}; }
    static TileImage from_png(std::string_view bytes, const geo::TileIndex& tile);
};

/// Square grid of values in [0, 1], row-major, row 0 at the top.
struct Saliency {
    int size = 0;
    std::vector<double> values;

    double at(int r, int c) const { return values[static_cast<std::size_t>(r) * size + c]; }
    friend bool operator==(const Saliency&, const Saliency&) = default;
};

struct ScoreResult {
    double probability = 0.0;
    std::optional<Saliency> saliency;
    std::string model_version;
};

/// Implementations must be safe for concurrent score() calls.
class Scorer {
public:
    virtual ~Scorer() = default;
    virtual ScoreResult score(const TileImage& img) const = 0;
    virtual std::string version() const = 0;
};

// ---- dihedral group --------------------------------------------------------

/// Element k of D4: a horizontal flip when k >= 4, then k % 4 quarter turns
/// counter-clockwise. Returns where cell (r, c) of an n x n grid lands.
std::pair<int, int> dihedral_map(int k, int n, int r, int c);

/// out[map(r, c)] = in[(r, c)], `channels` interleaved values per cell.
template <class T>
std::vector<T> apply_dihedral(int k, int n, int channels, std::span<const T> in) {
    std::vector<T> out(in.size());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const auto [r2, c2] = dihedral_map(k, n, r, c);
            const std::size_t src = (static_cast<std::size_t>(r) * n + c) * channels;
            const std::size_t dst = (static_cast<std::size_t>(r2) * n + c2) * channels;
            for (int ch = 0; ch < channels; ++ch) out[dst + ch] = in[src + ch];
        }
    return out;
}

/// out[(r, c)] = in[map(r, c)]; undoes apply_dihedral with the same k.
template <class T>
std::vector<T> invert_dihedral(int k, int n, int channels, std::span<const T> in) {
    std::vector<T> out(in.size());
    for (int r = 0; r < n; ++r)
        for (int c = 0; c < n; ++c) {
            const auto [r2, c2] = dihedral_map(k, n, r, c);
            const std::size_t dst = (static_cast<std::size_t>(r) * n + c) * channels;
            const std::size_t src = (static_cast<std::size_t>(r2) * n + c2) * channels;
            for (int ch = 0; ch < channels; ++ch) out[dst + ch] = in[src + ch];
        }
    return out;
}

TileImage transform_tile(const TileImage& img, int k);

/// Mean of the eight dihedral scores. Saliency is the mean of the
/// inverse-transformed grids when all eight carry one of the same size.
ScoreResult tta_score(const Scorer& scorer, const TileImage& img);

// ---- scorers ---------------------------------------------------------------

class ConstantScorer : public Scorer {
public:
    explicit ConstantScorer(double p);
    ScoreResult score(const TileImage& img) const override;
    std::string version() const override;

private:
    double p_;
};

/// Lookup keyed "z/x/y". Values are a probability or an object with
/// "probability" and optional "saliency" / "saliency_size".
class FixtureScorer : public Scorer {
public:
    FixtureScorer(const nlohmann::json& table, std::optional<double> fallback, std::string version = "fixture");
    static std::unique_ptr<FixtureScorer> load(const std::filesystem::path& path, std::optional<double> fallback);

    ScoreResult score(const TileImage& img) const override;
    std::string version() const override { return version_; }

private:
    struct Entry {
        double probability;
        std::optional<Saliency> saliency;
    };
    std::map<std::string, Entry> entries_;
    std::optional<double> fallback_;
    std::string version_;
};

/// Mean Rec. 601 luma / 255; saliency is the 16 x 16 block mean luma.
class BrightnessScorer : public Scorer {
public:
    ScoreResult score(const TileImage& img) const override;
    std::string version() const override { return "brightness-v1"; }
};

/// Fraction of the tile's 16 x 16 sub-cells whose centre lies in a
/// footprint. The sub-cell mask is returned as saliency.
class BuiltFractionScorer : public Scorer {
public:
    explicit BuiltFractionScorer(std::shared_ptr<const geo::FootprintIndex> buildings);
    ScoreResult score(const TileImage& img) const override;
    std::string version() const override { return "built-fraction-v1"; }

private:
    std::shared_ptr<const geo::FootprintIndex> buildings_;
};

struct RemoteOptions {
    std::chrono::milliseconds timeout{10000};
    int retries = 2;
    std::chrono::milliseconds backoff{200};
    std::string version;  // reported before any call; defaults to "remote:<endpoint>"
};

/// POSTs the tile as image/png and validates the JSON reply.
class RemoteScorer : public Scorer {
public:
    RemoteScorer(std::string endpoint, RemoteOptions options = {});
    ScoreResult score(const TileImage& img) const override;
    std::string version() const override { return options_.version; }

private:
    std::string endpoint_;
    RemoteOptions options_;
};

/// Validates a remote reply; throws ScorerError("protocol error: ...").
ScoreResult parse_remote_reply(const std::string& body, const std::string& fallback_version);

/// Wraps a scorer and counts score() calls.
class CountingScorer : public Scorer {
public:
    explicit CountingScorer(std::shared_ptr<const Scorer> inner) : inner_(std::move(inner)) {}
    ScoreResult score(const TileImage& img) const override {
        ++calls_;
        return inner_->score(img);
    }
    std::string version() const override { return inner_->version(); }
    std::size_t calls() const { return calls_.load(); }

private:
    std::shared_ptr<const Scorer> inner_;
    mutable std::atomic<std::size_t> calls_{0};
};

// ---- tile sources ----------------------------------------------------------

class TileSource {
public:
    virtual ~TileSource() = default;
    virtual TileImage fetch(const geo::TileIndex& tile) const = 0;
};

/// Draws footprints as grey on a green background, one sample per pixel centre.
class RenderedTileSource : public TileSource {
public:
    explicit RenderedTileSource(std::shared_ptr<const geo::FootprintIndex> buildings, int size = 256);
    TileImage fetch(const geo::TileIndex& tile) const override;

private:
    std::shared_ptr<const geo::FootprintIndex> buildings_;
    int size_;
};

/// Decodes PNG bytes returned by a fetch function.
class PngTileSource : public TileSource {
public:
    using Fetch = std::function<std::string(const geo::TileIndex&)>;
    explicit PngTileSource(Fetch fetch) : fetch_(std::move(fetch)) {}
    TileImage fetch(const geo::TileIndex& tile) const override { return TileImage::from_png(fetch_(tile), tile); }

private:
    Fetch fetch_;
};

// ---- candidates ------------------------------------------------------------

enum class Status { pending, confirmed, rejected, unsure };
const char* to_string(Status s);
std::optional<Status> parse_status(const std::string& s);

struct Candidate {
    std::string id;
    geo::GeoPoint point;
    geo::TileIndex tile;
    double probability = 0.0;
    double uncertainty = 0.5;
    Status status = Status::pending;
    std::optional<std::string> snapped_building_id;

    friend bool operator==(const Candidate&, const Candidate&) = default;
};

std::string candidate_id(const geo::TileIndex& t);

struct CandidateOptions {
    int zoom = 17;
    double p_min = 0.7;
    double dedupe_m = 100.0;
    double gap_min = 0.5;
    std::size_t max_cells = 25;
};

struct TileFailure {
    geo::TileIndex tile;
    std::string error;
};

struct CandidateReport {
    std::vector<Candidate> candidates;  // probability descending, then id
    std::size_t cells_used = 0;
    std::size_t tiles_scored = 0;
    std::size_t tiles_qualifying = 0;
    std::size_t suppressed = 0;
    std::vector<TileFailure> failures;

    nlohmann::json to_json() const;
};

/// Point for a qualifying tile: the centroid nearest the tile centre among
/// footprints whose bounding box meets the tile, else the tile centre.
std::pair<geo::GeoPoint, std::optional<std::size_t>> snap_to_building(const geo::TileIndex& tile,
                                                                      const geo::FootprintIndex& buildings);

/// Suppresses any candidate within dedupe_m of an already kept one, visiting
/// in probability-descending, id-ascending order.
std::vector<Candidate> dedupe_candidates(std::vector<Candidate> raw, double dedupe_m, std::size_t* suppressed = nullptr);

/// Scores (with TTA) every zoom-level tile intersecting the highest-gap
/// cells. Tile fetch failures are recorded and skipped; scorer errors
/// propagate.
CandidateReport generate_candidates(const forest::GapMap& gaps, const Scorer& scorer, const TileSource& tiles,
                                    const geo::FootprintIndex& buildings, const std::vector<std::string>& building_ids,
                                    const CandidateOptions& options);

/// Sorts by ascending |p - 0.5|, then id, then input order.
void review_order(std::vector<Candidate>& candidates);

/// Pending candidates by ascending |p - 0.5|, then id, then input order.
std::vector<Candidate> rank_review_queue(const std::vector<Candidate>& candidates);

nlohmann::json candidates_to_geojson(const std::vector<Candidate>& candidates);
std::vector<Candidate> candidates_from_geojson(const nlohmann::json& doc);

}  // namespace atlas::scorer
