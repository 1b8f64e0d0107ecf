#include "atlas/forest.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>

#include "atlas/geojson.hpp"
#include "atlas/hash.hpp"

namespace atlas::forest {

using nlohmann::json;

// ---- hyperparameters -------------------------------------------------------

std::size_t MaxFeatures::resolve(std::size_t n_features) const {
    std::size_t k = n_features;
    switch (kind) {
        case Kind::count: k = static_cast<std::size_t>(count); break;
        case Kind::sqrt: k = static_cast<std::size_t>(std::floor(std::sqrt(static_cast<double>(n_features)))); break;
        case Kind::half: k = n_features / 2; break;
        case Kind::all: break;
    }
    return std::clamp<std::size_t>(k, 1, std::max<std::size_t>(1, n_features));
}

std::string MaxFeatures::to_string() const {
    switch (kind) {
        case Kind::count: return std::to_string(count);
        case Kind::sqrt: return "sqrt";
        case Kind::half: return "half";
        case Kind::all: return "all";
    }
    return "sqrt";
}

MaxFeatures MaxFeatures::parse(const std::string& text) {
    if (text == "sqrt") return {Kind::sqrt, 0};
    if (text == "half") return {Kind::half, 0};
    if (text == "all") return {Kind::all, 0};
    int n = 0;
    auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), n);
    if (ec != std::errc() || ptr != text.data() + text.size() || n < 1)
        throw ForestError("max_features must be sqrt, half, all or a positive integer: " + text);
    return {Kind::count, n};
}

void Hyperparams::validate() const {
    if (n_trees < 1) throw ForestError("n_trees must be >= 1");
    if (max_depth < 1) throw ForestError("max_depth must be >= 1");
    if (min_samples_leaf < 1) throw ForestError("min_samples_leaf must be >= 1");
    if (max_features.kind == MaxFeatures::Kind::count && max_features.count < 1)
        throw ForestError("max_features must be >= 1");
}

json Hyperparams::to_json() const {
    return {{"n_trees", n_trees},
            {"max_depth", max_depth},
            {"min_samples_leaf", min_samples_leaf},
            {"max_features", max_features.to_string()},
            {"bootstrap", bootstrap}};
}

Hyperparams Hyperparams::from_json(const json& j) {
    Hyperparams p;
    p.n_trees = j.at("n_trees").get<int>();
    p.max_depth = j.at("max_depth").get<int>();
    p.min_samples_leaf = j.at("min_samples_leaf").get<int>();
    const auto& mf = j.at("max_features");
    p.max_features = mf.is_number_integer() ? MaxFeatures{MaxFeatures::Kind::count, mf.get<int>()}
                                            : MaxFeatures::parse(mf.get<std::string>());
    p.bootstrap = j.at("bootstrap").get<bool>();
    p.validate();
    return p;
}

// ---- trees -----------------------------------------------------------------

double gini(double n0, double n1) {
    const double n = n0 + n1;
    if (n <= 0.0) return 0.0;
    const double p0 = n0 / n, p1 = n1 / n;
    return 1.0 - p0 * p0 - p1 * p1;
}

std::size_t Tree::leaf_for(std::span<const double> x) const {
    std::size_t node = 0;
    while (feature[node] >= 0)
        node = static_cast<std::size_t>(x[static_cast<std::size_t>(feature[node])] <= threshold[node] ? left[node]
                                                                                                       : right[node]);
    return node;
}

double Tree::leaf_value(std::span<const double> x) const {
    const std::size_t leaf = leaf_for(x);
    return static_cast<double>(n1[leaf]) / static_cast<double>(n0[leaf] + n1[leaf]);
}

int Tree::depth() const {
    std::vector<int> d(size(), 0);
    int best = 0;
    for (std::size_t i = 0; i < size(); ++i) {
        best = std::max(best, d[i]);
        if (!is_leaf(i)) {
            d[static_cast<std::size_t>(left[i])] = d[i] + 1;
            d[static_cast<std::size_t>(right[i])] = d[i] + 1;
        }
    }
    return best;
}

namespace {

constexpr double kTieEps = 1e-12;

class TreeBuilder {
public:
    TreeBuilder(const LabeledDataset& data, const Hyperparams& params, Rng& rng)
        : data_(data), params_(params), rng_(rng), mtry_(params.max_features.resolve(data.n_features())) {}

    Tree build(std::vector<std::size_t> rows) {
        grow(rows, 0);
        return std::move(tree_);
    }

private:
    struct Best {
        int feature = -1;
        double threshold = 0.0;
        double impurity = 0.0;
    };

    std::size_t add_node(std::uint32_t n0, std::uint32_t n1) {
        tree_.feature.push_back(-1);
        tree_.threshold.push_back(0.0);
        tree_.left.push_back(-1);
        tree_.right.push_back(-1);
        tree_.n0.push_back(n0);
        tree_.n1.push_back(n1);
        return tree_.size() - 1;
    }

    void consider(std::size_t f, std::size_t n0, std::size_t n1, Best& best) {
        const std::size_t n = sorted_.size();
        std::size_t l0 = 0, l1 = 0;
        const std::size_t msl = static_cast<std::size_t>(params_.min_samples_leaf);
        for (std::size_t i = 0; i + 1 < n; ++i) {
            (sorted_[i].second ? l1 : l0) += 1;
            const double a = sorted_[i].first, b = sorted_[i + 1].first;
            if (a == b) continue;
            const std::size_t nl = i + 1, nr = n - nl;
            if (nl < msl || nr < msl) continue;
            const double imp = (static_cast<double>(nl) * gini(static_cast<double>(l0), static_cast<double>(l1)) +
                                static_cast<double>(nr) *
                                    gini(static_cast<double>(n0 - l0), static_cast<double>(n1 - l1))) /
                               static_cast<double>(n);
            double mid = a + (b - a) / 2.0;
            if (mid >= b) mid = a;
            const int fi = static_cast<int>(f);
            bool take = false;
            if (best.feature < 0 || imp < best.impurity - kTieEps) {
                take = true;
            } else if (imp <= best.impurity + kTieEps) {
                take = fi < best.feature || (fi == best.feature && mid < best.threshold);
            }
            if (take) best = {fi, mid, imp};
        }
    }

    std::size_t grow(std::vector<std::size_t>& rows, int depth) {
        std::size_t n1 = 0;
        for (std::size_t r : rows) n1 += static_cast<std::size_t>(data_.labels[r]);
        const std::size_t n0 = rows.size() - n1;
        const std::size_t node = add_node(static_cast<std::uint32_t>(n0), static_cast<std::uint32_t>(n1));
        const std::size_t msl = static_cast<std::size_t>(params_.min_samples_leaf);
        if (n0 == 0 || n1 == 0 || depth >= params_.max_depth || rows.size() < 2 * msl) return node;

        const std::size_t nf = data_.n_features();
        std::vector<std::size_t> order(nf);
        std::iota(order.begin(), order.end(), std::size_t{0});
        Best best;
        std::size_t evaluated = 0;
        for (std::size_t k = 0; k < nf && evaluated < mtry_; ++k) {
            std::swap(order[k], order[k + static_cast<std::size_t>(rng_.below(nf - k))]);
            const std::size_t f = order[k];
            sorted_.clear();
            for (std::size_t r : rows) sorted_.emplace_back(data_.row(r)[f], data_.labels[r]);
            std::sort(sorted_.begin(), sorted_.end());
            if (sorted_.front().first == sorted_.back().first) continue;
            ++evaluated;
            consider(f, n0, n1, best);
        }
        if (best.feature < 0) return node;

        std::vector<std::size_t> left_rows, right_rows;
        for (std::size_t r : rows)
            (data_.row(r)[static_cast<std::size_t>(best.feature)] <= best.threshold ? left_rows : right_rows)
                .push_back(r);
        rows.clear();
        rows.shrink_to_fit();

        tree_.feature[node] = best.feature;
        tree_.threshold[node] = best.threshold;
        const std::size_t l = grow(left_rows, depth + 1);
        const std::size_t r = grow(right_rows, depth + 1);
        tree_.left[node] = static_cast<int>(l);
        tree_.right[node] = static_cast<int>(r);
        return node;
    }

    const LabeledDataset& data_;
    const Hyperparams& params_;
    Rng& rng_;
    std::size_t mtry_;
    Tree tree_;
    std::vector<std::pair<double, int>> sorted_;
};

}  // namespace

Tree train_tree(const LabeledDataset& data, std::span<const std::size_t> rows, const Hyperparams& params, Rng& rng) {
    params.validate();
    if (rows.empty()) throw ForestError("train_tree needs at least one row");
    TreeBuilder builder(data, params, rng);
    return builder.build(std::vector<std::size_t>(rows.begin(), rows.end()));
}

// ---- forest ----------------------------------------------------------------

namespace {

json tree_to_json(const Tree& t) {
    return {{"feature", t.feature}, {"threshold", t.threshold}, {"left", t.left},
            {"right", t.right},     {"n0", t.n0},               {"n1", t.n1}};
}

Tree tree_from_json(const json& j) {
    Tree t;
    j.at("feature").get_to(t.feature);
    j.at("threshold").get_to(t.threshold);
    j.at("left").get_to(t.left);
    j.at("right").get_to(t.right);
    j.at("n0").get_to(t.n0);
    j.at("n1").get_to(t.n1);
    const std::size_t n = t.feature.size();
    if (n == 0 || t.threshold.size() != n || t.left.size() != n || t.right.size() != n || t.n0.size() != n ||
        t.n1.size() != n)
        throw ForestError("malformed tree arrays");
    for (std::size_t i = 0; i < n; ++i) {
        if (t.n0[i] + t.n1[i] == 0) throw ForestError("empty tree node");
        if (t.feature[i] < 0) continue;
        for (int child : {t.left[i], t.right[i]})
            if (child <= static_cast<int>(i) || child >= static_cast<int>(n)) throw ForestError("bad child index");
    }
    return t;
}

json groups_to_json(const std::vector<features::FeatureGroup>& groups) {
    json out = json::array();
    for (const auto& g : groups) out.push_back({{"name", g.name}, {"columns", g.columns}});
    return out;
}

json content_json(const ForestModel& m) {
    json trees = json::array();
    for (const auto& t : m.trees) trees.push_back(tree_to_json(t));
    return {{"params", m.params.to_json()}, {"columns", m.columns}, {"groups", groups_to_json(m.groups)},
            {"trees", trees}};
}

}  // namespace

std::string compute_model_version(const ForestModel& model) {
    return sha256_hex(content_json(model).dump()).substr(0, 16);
}

json ForestModel::to_json() const {
    json j = content_json(*this);
    j["format"] = "atlas-forest";
    j["format_version"] = 1;
    j["seed"] = seed;
    j["model_version"] = model_version;
    return j;
}

ForestModel ForestModel::from_json(const json& j) {
    try {
        if (j.at("format") != "atlas-forest" || j.at("format_version") != 1) throw ForestError("unsupported model format");
        ForestModel m;
        m.params = Hyperparams::from_json(j.at("params"));
        j.at("columns").get_to(m.columns);
        for (const auto& g : j.at("groups"))
            m.groups.push_back({g.at("name").get<std::string>(), g.at("columns").get<std::vector<std::size_t>>()});
        for (const auto& t : j.at("trees")) {
            m.trees.push_back(tree_from_json(t));
            for (int f : m.trees.back().feature)
                if (f >= static_cast<int>(m.columns.size())) throw ForestError("split on unknown column");
        }
        if (m.trees.empty()) throw ForestError("model has no trees");
        m.seed = j.at("seed").get<std::uint64_t>();
        m.model_version = j.at("model_version").get<std::string>();
        if (m.model_version != compute_model_version(m)) throw ForestError("model_version does not match content");
        return m;
    } catch (const json::exception& e) {
        throw ForestError(std::string("malformed model: ") + e.what());
    }
}

void ForestModel::save(const std::filesystem::path& path) const { geojson::write_json_file(path, to_json()); }

ForestModel ForestModel::load(const std::filesystem::path& path) { return from_json(geojson::read_json_file(path)); }

ForestModel train_forest(const LabeledDataset& data, const Hyperparams& params, std::uint64_t seed) {
    params.validate();
    if (data.size() == 0) throw ForestError("empty training data");
    const auto ones = static_cast<std::size_t>(std::count(data.labels.begin(), data.labels.end(), 1));
    if (ones == 0 || ones == data.size()) throw ForestError("training data must contain both classes");

    ForestModel m;
    m.params = params;
    m.columns = data.columns;
    m.groups = data.groups;
    m.seed = seed;
    const std::size_t n = data.size();
    std::vector<std::size_t> rows(n);
    for (int t = 0; t < params.n_trees; ++t) {
        Rng rng(seed ^ static_cast<std::uint64_t>(t));
        if (params.bootstrap) {
            for (auto& r : rows) r = static_cast<std::size_t>(rng.below(n));
        } else {
            std::iota(rows.begin(), rows.end(), std::size_t{0});
        }
        m.trees.push_back(train_tree(data, rows, params, rng));
    }
    m.model_version = compute_model_version(m);
    return m;
}

double predict_proba(const ForestModel& model, std::span<const double> x) {
    if (x.size() != model.columns.size())
        throw ForestError("expected " + std::to_string(model.columns.size()) + " features, got " +
                          std::to_string(x.size()));
    double sum = 0.0;
    for (const auto& t : model.trees) sum += t.leaf_value(x);
    return sum / static_cast<double>(model.trees.size());
}

// ---- evaluation ------------------------------------------------------------

namespace {

double safe_div(double a, double b) { return b == 0.0 ? 0.0 : a / b; }

ClassMetrics class_metrics(std::size_t tp, std::size_t fp, std::size_t fn) {
    ClassMetrics m;
    m.precision = safe_div(static_cast<double>(tp), static_cast<double>(tp + fp));
    m.recall = safe_div(static_cast<double>(tp), static_cast<double>(tp + fn));
    m.f1 = safe_div(2.0 * m.precision * m.recall, m.precision + m.recall);
    m.support = tp + fn;
    return m;
}

json class_json(const ClassMetrics& m) {
    return {{"precision", m.precision}, {"recall", m.recall}, {"f1", m.f1}, {"support", m.support}};
}

}  // namespace

MetricsReport metrics_from_confusion(const Confusion& c) {
    MetricsReport r;
    r.confusion = c;
    r.class1 = class_metrics(c.tp, c.fp, c.fn);
    r.class0 = class_metrics(c.tn, c.fn, c.fp);
    r.accuracy = safe_div(static_cast<double>(c.tp + c.tn), static_cast<double>(c.tp + c.tn + c.fp + c.fn));
    return r;
}

json MetricsReport::to_json() const {
    return {{"accuracy", accuracy},
            {"confusion", {{"tp", confusion.tp}, {"fp", confusion.fp}, {"fn", confusion.fn}, {"tn", confusion.tn}}},
            {"classes", {{"0", class_json(class0)}, {"1", class_json(class1)}}}};
}

MetricsReport evaluate(const ForestModel& model, const LabeledDataset& test) {
    Confusion c;
    for (std::size_t i = 0; i < test.size(); ++i) {
        const int pred = predict_class(model, test.row(i));
        const int truth = test.labels[i];
        if (pred == 1 && truth == 1) ++c.tp;
        else if (pred == 1) ++c.fp;
        else if (truth == 1) ++c.fn;
        else ++c.tn;
    }
    return metrics_from_confusion(c);
}

Importance feature_importance(const ForestModel& model) {
    const std::size_t nf = model.columns.size();
    Importance imp;
    imp.per_column.assign(nf, 0.0);
    for (const auto& t : model.trees) {
        const double root = static_cast<double>(t.n0[0] + t.n1[0]);
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t.is_leaf(i)) continue;
            const auto l = static_cast<std::size_t>(t.left[i]);
            const auto r = static_cast<std::size_t>(t.right[i]);
            const double n = t.n0[i] + t.n1[i], nl = t.n0[l] + t.n1[l], nr = t.n0[r] + t.n1[r];
            const double gain = gini(t.n0[i], t.n1[i]) - (nl / n) * gini(t.n0[l], t.n1[l]) -
                                (nr / n) * gini(t.n0[r], t.n1[r]);
            imp.per_column[static_cast<std::size_t>(t.feature[i])] += std::max(0.0, gain) * (n / root);
        }
    }
    const double total = std::accumulate(imp.per_column.begin(), imp.per_column.end(), 0.0);
    if (total > 0.0)
        for (auto& v : imp.per_column) v /= total;
    for (const auto& g : model.groups) {
        double s = 0.0;
        for (std::size_t c : g.columns) s += imp.per_column.at(c);
        imp.groups.emplace_back(g.name, s);
    }
    return imp;
}

json Importance::to_json(const std::vector<std::string>& columns) const {
    json cols = json::object(), grp = json::object();
    for (std::size_t i = 0; i < per_column.size() && i < columns.size(); ++i) cols[columns[i]] = per_column[i];
    for (const auto& [name, v] : groups) grp[name] = v;
    json ranking = json::array();
    auto sorted = groups;
    std::stable_sort(sorted.begin(), sorted.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    for (const auto& [name, v] : sorted) ranking.push_back(name);
    return {{"columns", cols}, {"groups", grp}, {"ranking", ranking}};
}

// ---- splits and search -----------------------------------------------------

namespace {

std::array<std::vector<std::size_t>, 2> by_class(std::span<const int> labels) {
    std::array<std::vector<std::size_t>, 2> out;
    for (std::size_t i = 0; i < labels.size(); ++i) out[labels[i] == 1 ? 1 : 0].push_back(i);
    return out;
}

}  // namespace

Split stratified_split(std::span<const int> labels, double test_frac, std::uint64_t seed) {
    if (test_frac < 0.0 || test_frac > 1.0) throw ForestError("test fraction must be in [0, 1]");
    Rng rng(seed);
    Split s;
    for (auto& members : by_class(labels)) {
        rng.shuffle(std::span<std::size_t>(members));
        const auto k = static_cast<std::size_t>(std::llround(test_frac * static_cast<double>(members.size())));
        s.test.insert(s.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(k));
        s.train.insert(s.train.end(), members.begin() + static_cast<std::ptrdiff_t>(k), members.end());
    }
    std::sort(s.train.begin(), s.train.end());
    std::sort(s.test.begin(), s.test.end());
    return s;
}

std::size_t SearchSpace::size() const {
    return n_trees.size() * max_depth.size() * min_samples_leaf.size() * max_features.size() * bootstrap.size();
}

json SearchResult::to_json() const {
    json trials_json = json::array();
    for (const auto& t : trials) trials_json.push_back({{"params", t.params.to_json()}, {"score", t.score}});
    return {{"best", best.to_json()}, {"best_score", best_score}, {"trials", trials_json}};
}

SearchResult random_search(const LabeledDataset& data, const SearchSpace& space, int n_iter, double subset_frac,
                           int folds, std::uint64_t seed) {
    if (space.size() == 0) throw ForestError("search space is empty");
    if (n_iter < 1) throw ForestError("n_iter must be >= 1");
    if (folds < 2) throw ForestError("folds must be >= 2");
    if (subset_frac <= 0.0 || subset_frac > 1.0) throw ForestError("subset fraction must be in (0, 1]");

    Rng rng(seed);
    // Subset and fold assignment, per class.
    std::vector<std::size_t> subset;
    std::vector<int> fold_of;
    for (auto& members : by_class(data.labels)) {
        rng.shuffle(std::span<std::size_t>(members));
        const auto k = static_cast<std::size_t>(std::llround(subset_frac * static_cast<double>(members.size())));
        if (k < static_cast<std::size_t>(folds))
            throw ForestError("search subset has " + std::to_string(k) + " rows of a class, fewer than " +
                              std::to_string(folds) + " folds");
        for (std::size_t i = 0; i < k; ++i) {
            subset.push_back(members[i]);
            fold_of.push_back(static_cast<int>(i % static_cast<std::size_t>(folds)));
        }
    }

    std::vector<std::pair<LabeledDataset, LabeledDataset>> splits;
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> train, test;
        for (std::size_t i = 0; i < subset.size(); ++i) (fold_of[i] == f ? test : train).push_back(subset[i]);
        splits.emplace_back(data.subset(train), data.subset(test));
    }

    SearchResult result;
    for (int it = 0; it < n_iter; ++it) {
        Hyperparams p;
        p.n_trees = space.n_trees[rng.below(space.n_trees.size())];
        p.max_depth = space.max_depth[rng.below(space.max_depth.size())];
        p.min_samples_leaf = space.min_samples_leaf[rng.below(space.min_samples_leaf.size())];
        p.max_features = space.max_features[rng.below(space.max_features.size())];
        p.bootstrap = space.bootstrap[rng.below(space.bootstrap.size())];
        const std::uint64_t trial_seed = rng.next();
        double sum = 0.0;
        for (const auto& [train, test] : splits)
            sum += evaluate(train_forest(train, p, trial_seed), test).class1.f1;
        const double score = sum / static_cast<double>(folds);
        result.trials.push_back({p, score});
        if (it == 0 || score > result.best_score) {
            result.best = p;
            result.best_score = score;
        }
    }
    return result;
}

// ---- gap map ---------------------------------------------------------------

geo::BBox GapMap::cell_bounds(const GapCell& c) const {
    const double top = yll + (nrows - c.row) * cellsize;
    const double west = xll + c.col * cellsize;
    return geo::BBox(top - cellsize, west, top, west + cellsize);
}

geo::RasterGrid GapMap::to_raster(double nodata) const {
    std::vector<double> values(cells.size(), nodata);
    for (std::size_t i = 0; i < cells.size(); ++i)
        if (cells[i].gap) values[i] = *cells[i].gap;
    return geo::RasterGrid(ncols, nrows, xll, yll, cellsize, nodata, std::move(values), geo::RasterKind::continuous);
}

json GapMap::to_geojson() const {
    json features = json::array();
    for (const auto& c : cells) {
        json props = {{"row", c.row}, {"col", c.col}, {"n_known", c.n_known}};
        if (c.p_school) props["p_school"] = *c.p_school;
        if (c.gap) props["gap_score"] = *c.gap;
        features.push_back(geojson::feature(geojson::bbox_polygon_geometry(cell_bounds(c)), props));
    }
    return geojson::feature_collection(std::move(features));
}

json GapMap::to_json() const {
    json out_cells = json::array();
    for (const auto& c : cells)
        out_cells.push_back({{"row", c.row},
                             {"col", c.col},
                             {"lat", c.center.lat()},
                             {"lon", c.center.lon()},
                             {"n_known", c.n_known},
                             {"p_school", c.p_school ? json(*c.p_school) : json()},
                             {"gap", c.gap ? json(*c.gap) : json()}});
    return {{"ncols", ncols}, {"nrows", nrows}, {"xll", xll}, {"yll", yll}, {"cellsize", cellsize}, {"cells", out_cells}};
}

GapMap GapMap::from_json(const json& j) {
    try {
        GapMap g;
        g.ncols = j.at("ncols").get<int>();
        g.nrows = j.at("nrows").get<int>();
        g.xll = j.at("xll").get<double>();
        g.yll = j.at("yll").get<double>();
        g.cellsize = j.at("cellsize").get<double>();
        if (g.ncols <= 0 || g.nrows <= 0 || !(g.cellsize > 0.0)) throw ForestError("gap map has an empty grid");
        for (const auto& c : j.at("cells")) {
            GapCell cell;
            cell.row = c.at("row").get<int>();
            cell.col = c.at("col").get<int>();
            cell.center = geo::GeoPoint(c.at("lat").get<double>(), c.at("lon").get<double>());
            cell.n_known = c.at("n_known").get<std::size_t>();
            if (!c.at("p_school").is_null()) cell.p_school = c["p_school"].get<double>();
            if (!c.at("gap").is_null()) cell.gap = c["gap"].get<double>();
            g.cells.push_back(cell);
        }
        if (g.cells.size() != static_cast<std::size_t>(g.ncols) * static_cast<std::size_t>(g.nrows))
            throw ForestError("gap map cell count does not match its grid");
        return g;
    } catch (const json::exception& e) {
        throw ForestError(std::string("malformed gap map: ") + e.what());
    }
}

GapMap gap_map(const ForestModel& model, const geo::BBox& aoi, const features::RasterStack& stack,
               const geo::SpatialIndex& known_schools, const GapOptions& options) {
    if (options.cell_m <= 0.0 || options.k_sat <= 0.0 || options.radius_m < 0.0)
        throw ForestError("gap map needs positive cell size and k_sat");
    GapMap g;
    g.cellsize = options.cell_m / geo::kMetersPerDegree;
    g.xll = aoi.min_lon;
    g.yll = aoi.min_lat;
    g.ncols = std::max(1, static_cast<int>(std::ceil((aoi.max_lon - aoi.min_lon) / g.cellsize - 1e-9)));
    g.nrows = std::max(1, static_cast<int>(std::ceil((aoi.max_lat - aoi.min_lat) / g.cellsize - 1e-9)));
    g.cells.reserve(static_cast<std::size_t>(g.ncols) * static_cast<std::size_t>(g.nrows));
    for (int r = 0; r < g.nrows; ++r) {
        for (int c = 0; c < g.ncols; ++c) {
            GapCell cell;
            cell.row = r;
            cell.col = c;
            cell.center = geo::GeoPoint(g.yll + (g.nrows - r - 0.5) * g.cellsize, g.xll + (c + 0.5) * g.cellsize);
            cell.n_known = known_schools.query_radius(cell.center, options.radius_m).size();
            const auto ex = features::extract_features(cell.center, stack);
            if (ex.features) {
                cell.p_school = predict_proba(model, *ex.features);
                cell.gap = gap_score(*cell.p_school, cell.n_known, options.k_sat);
            }
            g.cells.push_back(cell);
        }
    }
    return g;
}

}  // namespace atlas::forest
