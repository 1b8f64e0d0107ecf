#pragma once

#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "atlas/features.hpp"
#include "atlas/random.hpp"
#include "atlas/spatial_index.hpp"
#include "json.hpp"

namespace atlas::forest {

using features::LabeledDataset;

struct ForestError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct MaxFeatures {
    enum class Kind { count, sqrt, half, all };
    Kind kind = Kind::sqrt;
    int count = 0;

    std::size_t resolve(std::size_t n_features) const;
    std::string to_string() const;
    /// "sqrt", "half", "all" or a positive integer.
    static MaxFeatures parse(const std::string& text);

    friend bool operator==(const MaxFeatures&, const MaxFeatures&) = default;
};

struct Hyperparams {
    int n_trees = 100;
    int max_depth = 12;
    int min_samples_leaf = 1;
    MaxFeatures max_features;
    bool bootstrap = true;

    void validate() const;
    nlohmann::json to_json() const;
    static Hyperparams from_json(const nlohmann::json& j);

    friend bool operator==(const Hyperparams&, const Hyperparams&) = default;
};

/// Flattened binary tree. Node 0 is the root; feature < 0 marks a leaf.
/// Every node keeps its (possibly bootstrap-weighted) class counts.
struct Tree {
    std::vector<int> feature;
    std::vector<double> threshold;
    std::vector<int> left;
    std::vector<int> right;
    std::vector<std::uint32_t> n0;
    std::vector<std::uint32_t> n1;

    std::size_t size() const { return feature.size(); }
    bool is_leaf(std::size_t node) const { return feature[node] < 0; }
    /// Index of the leaf reached by x (x[f] <= threshold goes left).
    std::size_t leaf_for(std::span<const double> x) const;
    /// Class-1 fraction of the leaf reached by x.
    double leaf_value(std::span<const double> x) const;
    int depth() const;

    friend bool operator==(const Tree&, const Tree&) = default;
};

double gini(double n0, double n1);

/// CART on the rows listed in `rows` (repeats allowed, as in a bootstrap
/// sample). At each node features are visited in a random order until
/// max_features non-constant ones have been evaluated; the split with the
/// lowest weighted Gini wins, ties to the lower feature, then the lower
/// threshold.
Tree train_tree(const LabeledDataset& data, std::span<const std::size_t> rows, const Hyperparams& params, Rng& rng);

struct ForestModel {
    std::vector<Tree> trees;
    Hyperparams params;
    std::vector<std::string> columns;
    std::vector<features::FeatureGroup> groups;
    std::uint64_t seed = 0;
    std::string model_version;

    nlohmann::json to_json() const;
    /// Throws ForestError when the stored version does not match the content.
    static ForestModel from_json(const nlohmann::json& j);
    void save(const std::filesystem::path& path) const;
    static ForestModel load(const std::filesystem::path& path);
};

/// First 16 hex digits of the SHA-256 of the canonical tree/params document.
std::string compute_model_version(const ForestModel& model);

/// Tree t trains with Rng(seed ^ t); with bootstrap it first draws n rows
/// with replacement from that stream.
ForestModel train_forest(const LabeledDataset& data, const Hyperparams& params, std::uint64_t seed);

/// Mean over trees of the leaf class-1 fraction. Throws ForestError on a
/// column-count mismatch.
double predict_proba(const ForestModel& model, std::span<const double> x);
inline int predict_class(const ForestModel& model, std::span<const double> x) {
    return predict_proba(model, x) >= 0.5 ? 1 : 0;
}

struct Confusion {
    std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
};

struct ClassMetrics {
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
    std::size_t support = 0;
};

struct MetricsReport {
    Confusion confusion;
    ClassMetrics class0;
    ClassMetrics class1;
    double accuracy = 0.0;

    nlohmann::json to_json() const;
};

/// Zero denominators give 0.
MetricsReport metrics_from_confusion(const Confusion& c);
MetricsReport evaluate(const ForestModel& model, const LabeledDataset& test);

struct Importance {
    std::vector<double> per_column;                     // sums to 1 unless the forest has no split
    std::vector<std::pair<std::string, double>> groups;  // in group order

    nlohmann::json to_json(const std::vector<std::string>& columns) const;
};

Importance feature_importance(const ForestModel& model);

struct Split {
    std::vector<std::size_t> train;
    std::vector<std::size_t> test;
};

/// Per-class seeded shuffle; round(test_frac * class count) rows of each
/// class go to test. Both lists ascending.
Split stratified_split(std::span<const int> labels, double test_frac, std::uint64_t seed);

struct SearchSpace {
    std::vector<int> n_trees{100, 200, 400};
    std::vector<int> max_depth{8, 12, 16, 32};
    std::vector<int> min_samples_leaf{1, 2, 5};
    std::vector<MaxFeatures> max_features{{MaxFeatures::Kind::sqrt, 0}, {MaxFeatures::Kind::half, 0}};
    std::vector<bool> bootstrap{true};

    std::size_t size() const;
};

struct SearchTrial {
    Hyperparams params;
    double score = 0.0;
};

struct SearchResult {
    Hyperparams best;
    double best_score = 0.0;
    std::vector<SearchTrial> trials;

    nlohmann::json to_json() const;
};

/// Scores n_iter seeded draws from the space by mean class-1 F1 over
/// stratified k-fold CV on a stratified subset_frac subset. The first draw
/// with the highest score wins.
SearchResult random_search(const LabeledDataset& data, const SearchSpace& space, int n_iter, double subset_frac,
                           int folds, std::uint64_t seed);

inline double gap_score(double p, std::size_t n_known, double k_sat) {
    return p * (1.0 - std::min(1.0, static_cast<double>(n_known) / k_sat));
}

struct GapCell {
    int row = 0;
    int col = 0;
    geo::GeoPoint center;
    std::optional<double> p_school;
    std::size_t n_known = 0;
    std::optional<double> gap;
};

struct GapOptions {
    double cell_m = 1000.0;
    double radius_m = 2000.0;
    double k_sat = 3.0;
};

struct GapMap {
    int ncols = 0;
    int nrows = 0;
    double xll = 0.0;
    double yll = 0.0;
    double cellsize = 0.0;  // degrees
    std::vector<GapCell> cells;  // row-major, row 0 north

    geo::BBox cell_bounds(const GapCell& c) const;
    geo::RasterGrid to_raster(double nodata = -9999.0) const;
    nlohmann::json to_geojson() const;
    /// Lossless form (cell geometry plus values) for later stages.
    nlohmann::json to_json() const;
    static GapMap from_json(const nlohmann::json& j);
};

/// Square cells of cell_m / metres-per-degree degrees tiling aoi from its
/// south-west corner. Cells whose features drop have no p_school and no gap.
GapMap gap_map(const ForestModel& model, const geo::BBox& aoi, const features::RasterStack& stack,
               const geo::SpatialIndex& known_schools, const GapOptions& options);

}  // namespace atlas::forest
