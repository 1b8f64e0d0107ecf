#include "atlas/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "atlas/random.hpp"
#include "atlas/spatial_index.hpp"

namespace atlas::sampling {

std::string stratum_label(const StratumKey& key) { return key ? std::to_string(*key) : "unclassified"; }

StratumKey stratum_of(const std::optional<double>& sample) {
    if (!sample) return std::nullopt;
    return static_cast<int>(std::lround(*sample));
}

std::map<StratumKey, std::size_t> largest_remainder_quotas(const std::map<StratumKey, std::size_t>& counts,
                                                           std::size_t total) {
    const std::size_t n = std::accumulate(counts.begin(), counts.end(), std::size_t{0},
                                          [](std::size_t acc, const auto& kv) { return acc + kv.second; });
    if (total >= n) return counts;
    std::map<StratumKey, std::size_t> quotas;
    std::vector<std::pair<std::size_t, StratumKey>> remainders;
    std::size_t assigned = 0;
    for (const auto& [key, count] : counts) {
        // Exact integer arithmetic: total * count / n.
        const unsigned __int128 num = static_cast<unsigned __int128>(total) * count;
        quotas[key] = static_cast<std::size_t>(num / n);
        remainders.emplace_back(static_cast<std::size_t>(num % n), key);
        assigned += quotas[key];
    }
    std::stable_sort(remainders.begin(), remainders.end(),
                     [](const auto& a, const auto& b) { return a.first > b.first; });
    for (std::size_t i = 0; assigned < total; ++i, ++assigned) ++quotas[remainders[i].second];
    return quotas;
}

nlohmann::json StratifiedResult::to_json() const {
    nlohmann::json strata = nlohmann::json::object();
    for (const auto& [key, count] : population) {
        auto get = [&](const std::map<StratumKey, std::size_t>& m) {
            auto it = m.find(key);
            return it == m.end() ? std::size_t{0} : it->second;
        };
        strata[stratum_label(key)] = {{"population", count},
                                      {"quota", get(quotas)},
                                      {"extra_quota", get(extra_quotas)},
                                      {"selected", get(chosen)}};
    }
    return {{"selected", selected.size()}, {"shortfall", shortfall}, {"strata", strata}};
}

StratifiedResult stratified_sample(std::span<const geo::GeoPoint> points, std::span<const StratumKey> strata,
                                   std::size_t target, std::uint64_t seed, std::optional<double> min_spacing_m) {
    if (points.size() != strata.size()) throw std::invalid_argument("points and strata differ in length");
    StratifiedResult out;
    std::map<StratumKey, std::vector<std::size_t>> groups;
    for (std::size_t i = 0; i < points.size(); ++i) groups[strata[i]].push_back(i);
    for (const auto& [key, members] : groups) out.population[key] = members.size();
    out.quotas = largest_remainder_quotas(out.population, target);

    Rng rng(seed);
    for (auto& [key, members] : groups) rng.shuffle(std::span<std::size_t>(members));

    const double bucket = min_spacing_m ? std::max(0.01, *min_spacing_m / geo::kMetersPerDegree) : 1.0;
    geo::SpatialIndex accepted(bucket);
    std::map<StratumKey, std::size_t> cursor;

    auto fill = [&](const StratumKey& key, std::size_t quota) {
        auto& members = groups[key];
        std::size_t& pos = cursor[key];
        std::size_t taken = 0;
        while (taken < quota && pos < members.size()) {
            const std::size_t idx = members[pos++];
            if (min_spacing_m && accepted.any_closer_than(points[idx], *min_spacing_m)) continue;
            if (min_spacing_m) accepted.insert(idx, points[idx]);
            out.selected.push_back(idx);
            ++taken;
        }
        out.chosen[key] += taken;
        return taken;
    };

    std::size_t unfilled = 0;
    for (const auto& [key, quota] : out.quotas) unfilled += quota - fill(key, quota);

    if (unfilled > 0) {
        std::map<StratumKey, std::size_t> remaining;
        for (const auto& [key, members] : groups)
            if (cursor[key] < members.size()) remaining[key] = members.size() - cursor[key];
        if (!remaining.empty()) {
            out.extra_quotas = largest_remainder_quotas(remaining, unfilled);
            for (const auto& [key, quota] : out.extra_quotas) fill(key, quota);
        }
    }

    std::sort(out.selected.begin(), out.selected.end());
    out.shortfall = target - out.selected.size();
    return out;
}

}  // namespace atlas::sampling
