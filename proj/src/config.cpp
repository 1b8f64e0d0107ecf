#include "atlas/config.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "atlas/http_util.hpp"
#include "toml.hpp"

namespace atlas::config {

namespace fs = std::filesystem;

namespace {

enum class Type { real, integer, boolean, string, max_features, int_list, bool_list, max_features_list, bbox };

using Schema = std::map<std::string, std::map<std::string, Type>>;

const Schema& schema() {
    static const Schema s = {
        {"run", {{"seed", Type::integer}, {"out", Type::string}, {"aoi", Type::bbox}}},
        {"paths",
         {{"schools", Type::string},
          {"pois", Type::string},
          {"overpass", Type::string},
          {"overpass_query", Type::string},
          {"buildings_osm", Type::string},
          {"buildings_microsoft", Type::string},
          {"buildings_google", Type::string},
          {"admin_zones", Type::string},
          {"lexicon", Type::string},
          {"geocoder", Type::string}}},
        {"rasters",
         {{"climate", Type::string},
          {"landcover", Type::string},
          {"terrain", Type::string},
          {"population", Type::string},
          {"degurba", Type::string},
          {"nightlights", Type::string},
          {"builtup", Type::string}}},
        {"ingest",
         {{"confidence_min", Type::real},
          {"exclusion_radius_m", Type::real},
          {"csv_id", Type::string},
          {"csv_name", Type::string},
          {"csv_lat", Type::string},
          {"csv_lon", Type::string},
          {"csv_admin_zone", Type::string},
          {"csv_address", Type::string},
          {"csv_source", Type::string}}},
        {"cleanse",
         {{"dedup_radius_m", Type::real},
          {"dedup_similarity", Type::real},
          {"water_class", Type::integer},
          {"max_building_dist_m", Type::real},
          {"thin_target", Type::integer},
          {"thin_spacing_m", Type::real}}},
        {"negatives",
         {{"poi_n", Type::integer},
          {"remote_n", Type::integer},
          {"remote_min_dist_m", Type::real},
          {"builtup_threshold", Type::real},
          {"water_class", Type::integer},
          {"pool_factor", Type::integer},
          {"max_draws", Type::integer}}},
        {"train",
         {{"test_frac", Type::real},
          {"search", Type::boolean},
          {"search_iter", Type::integer},
          {"search_subset", Type::real},
          {"search_folds", Type::integer},
          {"n_trees", Type::integer},
          {"max_depth", Type::integer},
          {"min_samples_leaf", Type::integer},
          {"max_features", Type::max_features},
          {"bootstrap", Type::boolean},
          {"space_n_trees", Type::int_list},
          {"space_max_depth", Type::int_list},
          {"space_min_samples_leaf", Type::int_list},
          {"space_max_features", Type::max_features_list},
          {"space_bootstrap", Type::bool_list}}},
        {"gapmap", {{"cell_m", Type::real}, {"radius_m", Type::real}, {"k_sat", Type::real}}},
        {"candidates",
         {{"zoom", Type::integer},
          {"p_min", Type::real},
          {"dedupe_m", Type::real},
          {"gap_min", Type::real},
          {"max_cells", Type::integer},
          {"tiles", Type::string},
          {"tile_size", Type::integer}}},
        {"scorer",
         {{"kind", Type::string},
          {"builtin", Type::string},
          {"constant", Type::real},
          {"fixture", Type::string},
          {"fixture_default", Type::real},
          {"endpoint", Type::string},
          {"timeout_ms", Type::integer},
          {"retries", Type::integer}}},
        {"service",
         {{"host", Type::string},
          {"port", Type::integer},
          {"upstream", Type::string},
          {"tile_cache_capacity", Type::integer},
          {"tile_ttl_s", Type::integer},
          {"prediction_cache_capacity", Type::integer},
          {"prediction_ttl_s", Type::integer},
          {"feedback_log", Type::string}}},
    };
    return s;
}

std::string fmt(double v) {
    std::ostringstream ss;
    ss << v;
    return ss.str();
}

class Reader {
public:
    Reader(const toml::table& root, std::vector<std::string>& errors) : root_(root), errors_(errors) {}

    void error(const std::string& sec, const std::string& key, const std::string& msg) {
        errors_.push_back("[" + sec + "]." + key + ": " + msg);
    }

    const toml::node* node(const std::string& sec, const std::string& key) const {
        const auto* t = root_.get_as<toml::table>(sec);
        return t ? t->get(key) : nullptr;
    }

    std::optional<double> real(const std::string& sec, const std::string& key) {
        const auto* n = node(sec, key);
        if (!n) return std::nullopt;
        if (n->is_floating_point()) return n->as_floating_point()->get();
        if (n->is_integer()) return static_cast<double>(n->as_integer()->get());
        error(sec, key, "expected a number");
        return std::nullopt;
    }

    std::optional<std::int64_t> integer(const std::string& sec, const std::string& key) {
        const auto* n = node(sec, key);
        if (!n) return std::nullopt;
        if (n->is_integer()) return n->as_integer()->get();
        error(sec, key, "expected an integer");
        return std::nullopt;
    }

    std::optional<bool> boolean(const std::string& sec, const std::string& key) {
        const auto* n = node(sec, key);
        if (!n) return std::nullopt;
        if (n->is_boolean()) return n->as_boolean()->get();
        error(sec, key, "expected true or false");
        return std::nullopt;
    }

    std::optional<std::string> string(const std::string& sec, const std::string& key) {
        const auto* n = node(sec, key);
        if (!n) return std::nullopt;
        if (n->is_string()) return n->as_string()->get();
        error(sec, key, "expected a string");
        return std::nullopt;
    }

    std::optional<forest::MaxFeatures> max_features(const std::string& sec, const std::string& key,
                                                    const toml::node* n) {
        try {
            if (n->is_integer()) return forest::MaxFeatures::parse(std::to_string(n->as_integer()->get()));
            if (n->is_string()) return forest::MaxFeatures::parse(n->as_string()->get());
            error(sec, key, "expected sqrt, half, all or a positive integer");
        } catch (const std::exception& e) {
            error(sec, key, e.what());
        }
        return std::nullopt;
    }

    const toml::array* array(const std::string& sec, const std::string& key) {
        const auto* n = node(sec, key);
        if (!n) return nullptr;
        if (!n->is_array()) {
            error(sec, key, "expected an array");
            return nullptr;
        }
        if (n->as_array()->empty()) {
            error(sec, key, "must not be empty");
            return nullptr;
        }
        return n->as_array();
    }

    // Setters with range checks; the target keeps its default when absent or invalid.
    void real_in(const std::string& sec, const std::string& key, double& target, double lo, double hi,
                 bool open_lo = false, bool open_hi = false) {
        auto v = real(sec, key);
        if (!v) return;
        const bool ok = std::isfinite(*v) && (open_lo ? *v > lo : *v >= lo) && (open_hi ? *v < hi : *v <= hi);
        if (!ok) {
            error(sec, key,
                  "must be in " + std::string(open_lo ? "(" : "[") + fmt(lo) + ", " + fmt(hi) + (open_hi ? ")" : "]"));
            return;
        }
        target = *v;
    }

    void non_negative(const std::string& sec, const std::string& key, double& target) {
        auto v = real(sec, key);
        if (!v) return;
        if (!std::isfinite(*v) || *v < 0.0) {
            error(sec, key, "must be a finite number >= 0");
            return;
        }
        target = *v;
    }

    void positive(const std::string& sec, const std::string& key, double& target) {
        auto v = real(sec, key);
        if (!v) return;
        if (!std::isfinite(*v) || *v <= 0.0) {
            error(sec, key, "must be a finite number > 0");
            return;
        }
        target = *v;
    }

    template <class T>
    void int_in(const std::string& sec, const std::string& key, T& target, std::int64_t lo, std::int64_t hi) {
        auto v = integer(sec, key);
        if (!v) return;
        if (*v < lo || *v > hi) {
            error(sec, key, "must be an integer in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
            return;
        }
        target = static_cast<T>(*v);
    }

    void text(const std::string& sec, const std::string& key, std::string& target, bool non_empty = true) {
        auto v = string(sec, key);
        if (!v) return;
        if (non_empty && v->empty()) {
            error(sec, key, "must not be empty");
            return;
        }
        target = *v;
    }

private:
    const toml::table& root_;
    std::vector<std::string>& errors_;
};

void check_unknown(const toml::table& root, std::vector<std::string>& errors) {
    for (auto&& [k, v] : root) {
        const std::string sec(k.str());
        auto it = schema().find(sec);
        if (it == schema().end()) {
            errors.push_back("[" + sec + "]: unknown section");
            continue;
        }
        if (!v.is_table()) {
            errors.push_back("[" + sec + "]: expected a table");
            continue;
        }
        for (auto&& [key, value] : *v.as_table())
            if (!it->second.contains(std::string(key.str())))
                errors.push_back("[" + sec + "]." + std::string(key.str()) + ": unknown key");
    }
}

void apply_env(toml::table& root, const std::map<std::string, std::string>& env, std::vector<std::string>& errors) {
    for (const auto& [name, value] : env) {
        if (!name.starts_with("ATLAS_")) continue;
        std::string rest = name.substr(6);
        for (auto& ch : rest) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
        const Schema::value_type* section = nullptr;
        for (const auto& entry : schema())
            if (rest.starts_with(entry.first + "_")) section = &entry;
        if (!section) continue;
        const std::string key = rest.substr(section->first.size() + 1);
        auto type = section->second.find(key);
        if (type == section->second.end()) {
            errors.push_back(name + ": no key [" + section->first + "]." + key);
            continue;
        }
        if (!root.contains(section->first)) root.insert(section->first, toml::table{});
        auto* tbl = root.get_as<toml::table>(section->first);
        if (!tbl) continue;
        if (type->second == Type::string) {
            tbl->insert_or_assign(key, value);
            continue;
        }
        try {
            auto parsed = toml::parse("v = " + value);
            parsed["v"].node()->visit([&](auto&& v) { tbl->insert_or_assign(key, v); });
        } catch (const toml::parse_error&) {
            tbl->insert_or_assign(key, value);
        }
    }
}

fs::path resolve(const fs::path& base, const std::string& p) {
    const fs::path path(p);
    return path.is_absolute() ? path.lexically_normal() : (base / path).lexically_normal();
}

}  // namespace

ConfigError::ConfigError(std::vector<std::string> errors)
    : std::runtime_error([&] {
          std::string msg = "invalid configuration:";
          for (const auto& e : errors) msg += "\n  " + e;
          return msg;
      }()),
      errors_(std::move(errors)) {}

std::map<std::string, std::string> environment_overrides(char** envp) {
    std::map<std::string, std::string> out;
    for (char** e = envp; e && *e; ++e) {
        const std::string entry(*e);
        const auto eq = entry.find('=');
        if (eq == std::string::npos || !entry.starts_with("ATLAS_")) continue;
        out[entry.substr(0, eq)] = entry.substr(eq + 1);
    }
    return out;
}

PipelineConfig parse(std::string_view toml_text, const fs::path& base_dir, const std::map<std::string, std::string>& env) {
    toml::table root;
    try {
        root = toml::parse(toml_text);
    } catch (const toml::parse_error& e) {
        throw ConfigError({"TOML syntax error at line " + std::to_string(e.source().begin.line) + ": " +
                           std::string(e.description())});
    }
    std::vector<std::string> errors;
    apply_env(root, env, errors);
    check_unknown(root, errors);
    Reader r(root, errors);
    PipelineConfig cfg;

    // [run]
    if (auto seed = r.integer("run", "seed")) {
        if (*seed < 0)
            r.error("run", "seed", "must be >= 0");
        else
            cfg.seed = static_cast<std::uint64_t>(*seed);
    }
    std::string out = "out";
    r.text("run", "out", out);
    cfg.out_dir = resolve(base_dir, out);
    if (const auto* aoi = r.array("run", "aoi")) {
        std::vector<double> v;
        for (const auto& n : *aoi) {
            if (n.is_floating_point()) v.push_back(n.as_floating_point()->get());
            else if (n.is_integer()) v.push_back(static_cast<double>(n.as_integer()->get()));
        }
        if (v.size() != 4 || !std::all_of(v.begin(), v.end(), [](double x) { return std::isfinite(x); })) {
            r.error("run", "aoi", "expected [minLon, minLat, maxLon, maxLat]");
        } else if (v[0] < -180 || v[2] > 180 || v[1] < -90 || v[3] > 90 || v[0] >= v[2] || v[1] >= v[3]) {
            r.error("run", "aoi", "must be a non-empty box within [-180, -90, 180, 90]");
        } else {
            cfg.aoi = geo::BBox(v[1], v[0], v[3], v[2]);
        }
    }

    // [paths] and [rasters]
    struct FileKey {
        const char* sec;
        const char* key;
        fs::path* target;
        bool required;
    };
    bool overpass_set = false;
    if (auto v = r.string("paths", "overpass"); v && !v->empty()) {
        overpass_set = true;
        cfg.paths.overpass = http::is_http_url(*v) ? *v : resolve(base_dir, *v).string();
        if (!http::is_http_url(*v) && !fs::is_regular_file(cfg.paths.overpass))
            r.error("paths", "overpass", "file not found: " + cfg.paths.overpass);
    }
    r.text("paths", "overpass_query", cfg.paths.overpass_query, false);
    const FileKey files[] = {
        {"paths", "schools", &cfg.paths.schools, true},
        {"paths", "pois", &cfg.paths.pois, !overpass_set},
        {"paths", "buildings_osm", &cfg.paths.buildings_osm, true},
        {"paths", "buildings_microsoft", &cfg.paths.buildings_microsoft, false},
        {"paths", "buildings_google", &cfg.paths.buildings_google, false},
        {"paths", "admin_zones", &cfg.paths.admin_zones, true},
        {"paths", "lexicon", &cfg.paths.lexicon, true},
        {"paths", "geocoder", &cfg.paths.geocoder, false},
        {"rasters", "climate", &cfg.rasters.climate, true},
        {"rasters", "landcover", &cfg.rasters.landcover, true},
        {"rasters", "terrain", &cfg.rasters.terrain, true},
        {"rasters", "population", &cfg.rasters.population, true},
        {"rasters", "degurba", &cfg.rasters.degurba, true},
        {"rasters", "nightlights", &cfg.rasters.nightlights, true},
        {"rasters", "builtup", &cfg.rasters.builtup, true},
    };
    for (const auto& f : files) {
        auto v = r.string(f.sec, f.key);
        if (!v || v->empty()) {
            if (f.required && !r.node(f.sec, f.key)) r.error(f.sec, f.key, "is required");
            else if (f.required && v) r.error(f.sec, f.key, "must not be empty");
            continue;
        }
        *f.target = resolve(base_dir, *v);
        if (!fs::is_regular_file(*f.target)) r.error(f.sec, f.key, "file not found: " + f.target->string());
    }

    // [ingest]
    r.real_in("ingest", "confidence_min", cfg.merge.confidence_min, 0.0, 1.0);
    r.non_negative("ingest", "exclusion_radius_m", cfg.merge.exclusion_radius_m);
    r.text("ingest", "csv_id", cfg.csv.id);
    r.text("ingest", "csv_name", cfg.csv.name);
    r.text("ingest", "csv_lat", cfg.csv.lat);
    r.text("ingest", "csv_lon", cfg.csv.lon);
    r.text("ingest", "csv_admin_zone", cfg.csv.admin_zone);
    r.text("ingest", "csv_address", cfg.csv.address);
    r.text("ingest", "csv_source", cfg.csv.source);

    // [cleanse]
    r.non_negative("cleanse", "dedup_radius_m", cfg.dedup.radius_m);
    r.real_in("cleanse", "dedup_similarity", cfg.dedup.sim_min, 0.0, 1.0);
    r.int_in("cleanse", "water_class", cfg.school_filter.water_class, 0, 255);
    r.non_negative("cleanse", "max_building_dist_m", cfg.school_filter.max_dist_m);
    r.int_in("cleanse", "thin_target", cfg.thin_target, 1, 100000000);
    r.non_negative("cleanse", "thin_spacing_m", cfg.thin_spacing_m);

    // [negatives]
    r.int_in("negatives", "poi_n", cfg.poi_negatives, 0, 100000000);
    r.int_in("negatives", "remote_n", cfg.remote.n, 0, 100000000);
    r.non_negative("negatives", "remote_min_dist_m", cfg.remote.min_dist_m);
    if (auto v = r.real("negatives", "builtup_threshold")) {
        if (!std::isfinite(*v))
            r.error("negatives", "builtup_threshold", "must be finite");
        else
            cfg.remote.builtup_threshold = *v;
    }
    r.int_in("negatives", "water_class", cfg.remote.water_class, 0, 255);
    r.int_in("negatives", "pool_factor", cfg.remote.pool_factor, 1, 1000);
    r.int_in("negatives", "max_draws", cfg.remote.max_draws, 1, 1000000000);

    // [train]
    r.real_in("train", "test_frac", cfg.train.test_frac, 0.0, 1.0, true, true);
    if (auto v = r.boolean("train", "search")) cfg.train.search = *v;
    r.int_in("train", "search_iter", cfg.train.search_iter, 1, 100000);
    r.real_in("train", "search_subset", cfg.train.search_subset, 0.0, 1.0, true, false);
    r.int_in("train", "search_folds", cfg.train.search_folds, 2, 100);
    r.int_in("train", "n_trees", cfg.train.params.n_trees, 1, 100000);
    r.int_in("train", "max_depth", cfg.train.params.max_depth, 1, 1000);
    r.int_in("train", "min_samples_leaf", cfg.train.params.min_samples_leaf, 1, 1000000);
    if (const auto* n = r.node("train", "max_features"))
        if (auto mf = r.max_features("train", "max_features", n)) cfg.train.params.max_features = *mf;
    if (auto v = r.boolean("train", "bootstrap")) cfg.train.params.bootstrap = *v;
    auto int_list = [&](const char* key, std::vector<int>& target, std::int64_t lo, std::int64_t hi) {
        const auto* a = r.array("train", key);
        if (!a) return;
        std::vector<int> out;
        for (const auto& n : *a) {
            if (!n.is_integer() || n.as_integer()->get() < lo || n.as_integer()->get() > hi) {
                r.error("train", key, "entries must be integers in [" + std::to_string(lo) + ", " + std::to_string(hi) + "]");
                return;
            }
            out.push_back(static_cast<int>(n.as_integer()->get()));
        }
        target = std::move(out);
    };
    int_list("space_n_trees", cfg.train.space.n_trees, 1, 100000);
    int_list("space_max_depth", cfg.train.space.max_depth, 1, 1000);
    int_list("space_min_samples_leaf", cfg.train.space.min_samples_leaf, 1, 1000000);
    if (const auto* a = r.array("train", "space_max_features")) {
        std::vector<forest::MaxFeatures> out;
        for (const auto& n : *a)
            if (auto mf = r.max_features("train", "space_max_features", &n)) out.push_back(*mf);
        if (out.size() == a->size()) cfg.train.space.max_features = std::move(out);
    }
    if (const auto* a = r.array("train", "space_bootstrap")) {
        std::vector<bool> out;
        for (const auto& n : *a) {
            if (!n.is_boolean()) {
                r.error("train", "space_bootstrap", "entries must be true or false");
                break;
            }
            out.push_back(n.as_boolean()->get());
        }
        if (out.size() == a->size()) cfg.train.space.bootstrap = std::move(out);
    }

    // [gapmap]
    r.positive("gapmap", "cell_m", cfg.gap.cell_m);
    r.non_negative("gapmap", "radius_m", cfg.gap.radius_m);
    r.positive("gapmap", "k_sat", cfg.gap.k_sat);

    // [candidates]
    r.int_in("candidates", "zoom", cfg.candidates.zoom, 0, geo::kMaxZoom);
    r.real_in("candidates", "p_min", cfg.candidates.p_min, 0.0, 1.0);
    r.non_negative("candidates", "dedupe_m", cfg.candidates.dedupe_m);
    r.real_in("candidates", "gap_min", cfg.candidates.gap_min, 0.0, 1.0);
    r.int_in("candidates", "max_cells", cfg.candidates.max_cells, 1, 1000000);
    r.text("candidates", "tiles", cfg.candidate_tiles);
    r.int_in("candidates", "tile_size", cfg.tile_size, 16, 2048);

    // [scorer]
    std::string kind = "builtin";
    r.text("scorer", "kind", kind);
    if (kind == "builtin") cfg.scorer.kind = ScorerKind::builtin;
    else if (kind == "fixture") cfg.scorer.kind = ScorerKind::fixture;
    else if (kind == "remote") cfg.scorer.kind = ScorerKind::remote;
    else r.error("scorer", "kind", "must be builtin, fixture or remote");
    r.text("scorer", "builtin", cfg.scorer.builtin);
    if (cfg.scorer.builtin != "built_fraction" && cfg.scorer.builtin != "brightness" && cfg.scorer.builtin != "constant")
        r.error("scorer", "builtin", "must be built_fraction, brightness or constant");
    r.real_in("scorer", "constant", cfg.scorer.constant, 0.0, 1.0);
    if (auto v = r.string("scorer", "fixture"); v && !v->empty()) {
        cfg.scorer.fixture = resolve(base_dir, *v);
        if (!fs::is_regular_file(cfg.scorer.fixture))
            r.error("scorer", "fixture", "file not found: " + cfg.scorer.fixture.string());
    } else if (cfg.scorer.kind == ScorerKind::fixture) {
        r.error("scorer", "fixture", "is required when kind = \"fixture\"");
    }
    if (r.node("scorer", "fixture_default")) {
        double d = 0.0;
        const auto before = errors.size();
        r.real_in("scorer", "fixture_default", d, 0.0, 1.0);
        if (errors.size() == before) cfg.scorer.fixture_default = d;
    }
    r.text("scorer", "endpoint", cfg.scorer.endpoint, false);
    if (cfg.scorer.kind == ScorerKind::remote && !http::is_http_url(cfg.scorer.endpoint))
        r.error("scorer", "endpoint", "an http(s) URL is required when kind = \"remote\"");
    r.int_in("scorer", "timeout_ms", cfg.scorer.timeout_ms, 1, 3600000);
    r.int_in("scorer", "retries", cfg.scorer.retries, 0, 100);

    // [service]
    r.text("service", "host", cfg.service.host);
    r.int_in("service", "port", cfg.service.port, 0, 65535);
    r.text("service", "upstream", cfg.service.upstream);
    r.int_in("service", "tile_cache_capacity", cfg.service.tile_cache_capacity, 1, 100000000);
    r.int_in("service", "tile_ttl_s", cfg.service.tile_ttl_s, 0, 10LL * 365 * 24 * 3600);
    r.int_in("service", "prediction_cache_capacity", cfg.service.prediction_cache_capacity, 1, 100000000);
    r.int_in("service", "prediction_ttl_s", cfg.service.prediction_ttl_s, 0, 10LL * 365 * 24 * 3600);
    std::string log = (cfg.out_dir / "feedback" / "feedback.jsonl").string();
    if (auto v = r.string("service", "feedback_log"); v && !v->empty()) log = resolve(base_dir, *v).string();
    cfg.service.feedback_log = log;

    if (!errors.empty()) throw ConfigError(std::move(errors));
    return cfg;
}

PipelineConfig load(const fs::path& file, const std::map<std::string, std::string>& env) {
    std::ifstream in(file, std::ios::binary);
    if (!in) throw ConfigError({"cannot read config file " + file.string()});
    std::ostringstream ss;
    ss << in.rdbuf();
    auto cfg = parse(ss.str(), fs::absolute(file).parent_path(), env);
    cfg.source = fs::absolute(file).lexically_normal();
    return cfg;
}

}  // namespace atlas::config
