#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "atlas/geo.hpp"
#include "json.hpp"

namespace atlas::sampling {

/// Class code of a stratifying raster; nullopt is the "unclassified" stratum.
using StratumKey = std::optional<int>;

std::string stratum_label(const StratumKey& key);
StratumKey stratum_of(const std::optional<double>& sample);

/// Proportional allocation of `total` seats by the largest-remainder
/// method. Remainder ties go to the smaller key. When total covers every
/// record the quotas equal the counts.
std::map<StratumKey, std::size_t> largest_remainder_quotas(const std::map<StratumKey, std::size_t>& counts,
                                                           std::size_t total);

struct StratifiedResult {
    std::vector<std::size_t> selected;  // input indices, ascending
    std::map<StratumKey, std::size_t> population;
    std::map<StratumKey, std::size_t> quotas;
    std::map<StratumKey, std::size_t> extra_quotas;  // from the redistribution pass
    std::map<StratumKey, std::size_t> chosen;
    std::size_t shortfall = 0;  // target minus selected

    nlohmann::json to_json() const;
};

/// Seeded stratified sampling. Each stratum is visited in a seed-determined
/// random order; with `min_spacing_m` a record is accepted only when it is at
/// least that far from every record accepted so far (across strata). Quota
/// left unfilled after the first pass is redistributed once, by largest
/// remainder, over strata that still have unvisited records.
StratifiedResult stratified_sample(std::span<const geo::GeoPoint> points, std::span<const StratumKey> strata,
                                   std::size_t target, std::uint64_t seed,
                                   std::optional<double> min_spacing_m = std::nullopt);

}  // namespace atlas::sampling
