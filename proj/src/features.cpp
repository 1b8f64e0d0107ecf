#include "atlas/features.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>

#include "atlas/csv.hpp"
#include "atlas/format.hpp"

namespace atlas::features {

const std::vector<FeatureGroup>& default_groups() {
    static const std::vector<FeatureGroup> groups{
        {"coordinates", {0, 1, 2, 3}}, {"climate", {4}}, {"landcover", {5}},  {"terrain", {6}},
        {"population", {7}},           {"degurba", {8}}, {"nightlights", {9}},
    };
    return groups;
}

std::array<double, 4> encode_coordinates(const geo::GeoPoint& p) {
    const double lat = geo::deg2rad(p.lat());
    const double lon = geo::deg2rad(p.lon());
    return {std::sin(lat), std::cos(lat), std::sin(lon), std::cos(lon)};
}

Extraction extract_features(const geo::GeoPoint& p, const RasterStack& stack) {
    FeatureVector fv{};
    const auto coords = encode_coordinates(p);
    std::copy(coords.begin(), coords.end(), fv.begin());

    struct Layer {
        const char* name;
        const geo::RasterGrid* grid;
        std::size_t column;
        bool categorical;
    };
    const Layer layers[] = {
        {"climate", &stack.climate, 4, true},         {"landcover", &stack.landcover, 5, true},
        {"terrain", &stack.terrain, 6, true},         {"population", &stack.population, 7, false},
        {"degurba", &stack.degurba, 8, true},         {"nightlights", &stack.nightlights, 9, false},
    };
    for (const auto& layer : layers) {
        const auto v = layer.grid->sample(p);
        if (!v && layer.categorical) return {std::nullopt, std::string("missing categorical: ") + layer.name};
        fv[layer.column] = v ? *v : 0.0;
    }
    return {fv, {}};
}

void LabeledDataset::push_back(std::string id, int label, std::span<const double> row) {
    if (row.size() != columns.size()) throw DatasetError("row width does not match columns");
    ids.push_back(std::move(id));
    labels.push_back(label);
    values.insert(values.end(), row.begin(), row.end());
}

LabeledDataset LabeledDataset::subset(std::span<const std::size_t> indices) const {
    LabeledDataset out{columns, groups, {}, {}, {}};
    out.ids.reserve(indices.size());
    out.labels.reserve(indices.size());
    out.values.reserve(indices.size() * columns.size());
    for (std::size_t i : indices) out.push_back(ids[i], labels[i], row(i));
    return out;
}

LabeledDataset empty_dataset() {
    return {std::vector<std::string>(kColumns.begin(), kColumns.end()), default_groups(), {}, {}, {}};
}

nlohmann::json BuildResult::drops_json() const {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& d : drops) out.push_back({{"id", d.id}, {"label", d.label}, {"reason", d.reason}});
    return out;
}

BuildResult build_dataset(const std::vector<LabeledPoint>& positives, const std::vector<LabeledPoint>& negatives,
                          const RasterStack& stack) {
    std::set<std::string> positive_ids;
    for (const auto& p : positives) positive_ids.insert(p.id);
    for (const auto& n : negatives)
        if (positive_ids.count(n.id)) throw DatasetError("id in both classes: " + n.id);

    BuildResult out{empty_dataset(), {}};
    std::size_t counts[2] = {0, 0};
    auto add = [&](const std::vector<LabeledPoint>& points, int label) {
        for (const auto& p : points) {
            auto ex = extract_features(p.point, stack);
            if (!ex.features) {
                out.drops.push_back({p.id, label, ex.drop_reason});
                continue;
            }
            out.dataset.push_back(p.id, label, *ex.features);
            ++counts[label];
        }
    };
    add(positives, 1);
    add(negatives, 0);
    if (counts[1] == 0) throw DatasetError("no positive rows after drops");
    if (counts[0] == 0) throw DatasetError("no negative rows after drops");
    return out;
}

void write_dataset_csv(std::ostream& out, const LabeledDataset& ds) {
    out << "id,label";
    for (const auto& c : ds.columns) out << ',' << csv::escape(c);
    out << '\n';
    for (std::size_t i = 0; i < ds.size(); ++i) {
        out << csv::escape(ds.ids[i]) << ',' << ds.labels[i];
        for (double v : ds.row(i)) out << ',' << format_double(v);
        out << '\n';
    }
}

void write_dataset_csv(const std::filesystem::path& path, const LabeledDataset& ds) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DatasetError("cannot write " + path.string());
    write_dataset_csv(out, ds);
}

namespace {

double parse_number(const std::string& s, std::size_t line) {
    double v = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || !std::isfinite(v))
        throw DatasetError("line " + std::to_string(line) + ": bad number '" + s + "'");
    return v;
}

}  // namespace

LabeledDataset read_dataset_csv(std::istream& in) {
    auto header = csv::read_record(in);
    if (!header || header->size() < 3 || (*header)[0] != "id" || (*header)[1] != "label")
        throw DatasetError("dataset header must start with id,label and name at least one feature");
    LabeledDataset ds;
    ds.columns.assign(header->begin() + 2, header->end());
    if (ds.columns == std::vector<std::string>(kColumns.begin(), kColumns.end())) {
        ds.groups = default_groups();
    } else {
        for (std::size_t c = 0; c < ds.columns.size(); ++c) ds.groups.push_back({ds.columns[c], {c}});
    }
    std::vector<double> row(ds.columns.size());
    std::size_t line = 1;
    while (auto rec = csv::read_record(in)) {
        ++line;
        if (rec->size() == 1 && (*rec)[0].empty()) continue;
        if (rec->size() != header->size()) throw DatasetError("line " + std::to_string(line) + ": column count mismatch");
        const std::string& label = (*rec)[1];
        if (label != "0" && label != "1") throw DatasetError("line " + std::to_string(line) + ": label must be 0 or 1");
        for (std::size_t c = 0; c < row.size(); ++c) row[c] = parse_number((*rec)[c + 2], line);
        ds.push_back((*rec)[0], label == "1" ? 1 : 0, row);
    }
    return ds;
}

LabeledDataset read_dataset_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DatasetError("cannot open " + path.string());
    return read_dataset_csv(in);
}

}  // namespace atlas::features
