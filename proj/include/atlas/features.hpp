#pragma once

#include <array>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "atlas/geo.hpp"
#include "atlas/raster.hpp"
#include "json.hpp"

namespace atlas::features {

inline constexpr std::size_t kNumFeatures = 10;
using FeatureVector = std::array<double, kNumFeatures>;

inline constexpr std::array<const char*, kNumFeatures> kColumns{
    "sin_lat", "cos_lat", "sin_lon", "cos_lon", "climate", "landcover", "terrain", "population", "degurba", "nightlights"};

struct FeatureGroup {
    std::string name;
    std::vector<std::size_t> columns;

    friend bool operator==(const FeatureGroup&, const FeatureGroup&) = default;
};

/// coordinates, climate, landcover, terrain, population, degurba, nightlights.
const std::vector<FeatureGroup>& default_groups();

struct RasterStack {
    geo::RasterGrid climate;
    geo::RasterGrid landcover;
    geo::RasterGrid terrain;
    geo::RasterGrid population;
    geo::RasterGrid degurba;
    geo::RasterGrid nightlights;
};

std::array<double, 4> encode_coordinates(const geo::GeoPoint& p);

struct Extraction {
    std::optional<FeatureVector> features;
    std::string drop_reason;  // set when features is empty
};

/// Continuous layers (population, nightlights) read 0 when absent;
/// a missing categorical layer drops the point.
Extraction extract_features(const geo::GeoPoint& p, const RasterStack& stack);

struct DatasetError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Row-major feature table with binary labels.
struct LabeledDataset {
    std::vector<std::string> columns;
    std::vector<FeatureGroup> groups;
    std::vector<std::string> ids;
    std::vector<int> labels;
    std::vector<double> values;

    std::size_t size() const { return labels.size(); }
    std::size_t n_features() const { return columns.size(); }
    std::span<const double> row(std::size_t i) const { return {values.data() + i * columns.size(), columns.size()}; }

    void push_back(std::string id, int label, std::span<const double> row);
    /// Rows at the given indices, in that order.
    LabeledDataset subset(std::span<const std::size_t> indices) const;

    friend bool operator==(const LabeledDataset&, const LabeledDataset&) = default;
};

LabeledDataset empty_dataset();

struct LabeledPoint {
    std::string id;
    geo::GeoPoint point;
};

struct Drop {
    std::string id;
    int label = 0;
    std::string reason;
};

struct BuildResult {
    LabeledDataset dataset;
    std::vector<Drop> drops;

    nlohmann::json drops_json() const;
};

/// Positives first, then negatives, each in input order. Throws
/// DatasetError on an id shared between the sets or on an empty class.
BuildResult build_dataset(const std::vector<LabeledPoint>& positives, const std::vector<LabeledPoint>& negatives,
                          const RasterStack& stack);

/// CSV with header id,label,<columns>. Values use shortest round-trip form.
void write_dataset_csv(std::ostream& out, const LabeledDataset& ds);
void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& ds);
/// Throws DatasetError on malformed input. Groups are the defaults when
/// the columns match the default layout, otherwise one group per column.
LabeledDataset read_dataset_csv(std::istream& in);
LabeledDataset read_dataset_csv(const std::filesystem::path& path);

}  // namespace atlas::features
