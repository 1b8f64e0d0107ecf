#include <algorithm>
#include <functional>
#include <map>
#include <string>

#include "atlas/random.hpp"
#include "atlas/text.hpp"
#include "doctest.h"

using namespace atlas::cleanse;

namespace {

// Memoized recursive edit distance, written independently of the two-row DP.
std::size_t recursive_distance(const std::u32string& a, const std::u32string& b) {
    std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
    std::function<std::size_t(std::size_t, std::size_t)> go = [&](std::size_t i, std::size_t j) -> std::size_t {
        if (i == 0) return j;
        if (j == 0) return i;
        if (auto it = memo.find({i, j}); it != memo.end()) return it->second;
        std::size_t best = std::min(go(i - 1, j) + 1, go(i, j - 1) + 1);
        best = std::min(best, go(i - 1, j - 1) + (a[i - 1] == b[j - 1] ? 0 : 1));
        return memo[{i, j}] = best;
    };
    return go(a.size(), b.size());
}

}  // namespace

TEST_CASE("normalize_name") {
    CHECK(normalize_name("École  Primaire ") == "ecole primaire");
    CHECK(normalize_name("") == "");
    CHECK(normalize_name("ŠKOLA Ž") == "skola z");
    CHECK(normalize_name("  \tLycée\n Français  ") == "lycee francais");
    CHECK(normalize_name("Straße") == "strasse");
    CHECK(normalize_name("   ") == "");
}

TEST_CASE("levenshtein examples") {
    CHECK(levenshtein("kitten", "sitting") == 3);
    CHECK(name_similarity("kitten", "sitting") == doctest::Approx(1.0 - 3.0 / 7.0));
    CHECK(levenshtein("same", "same") == 0);
    CHECK(name_similarity("same", "same") == 1.0);
    CHECK(levenshtein("abc", "") == 3);
    CHECK(name_similarity("abc", "") == 0.0);
    CHECK(name_similarity("", "") == 1.0);
    // Code points, not bytes.
    CHECK(levenshtein("école", "ecole") == 1);
}

TEST_CASE("levenshtein agrees with recursive oracle") {
    atlas::Rng rng(99);
    const std::u32string alphabet = U"abcdeé";
    for (int i = 0; i < 1000; ++i) {
        std::u32string a, b;
        const auto la = rng.below(13), lb = rng.below(13);
        for (std::size_t k = 0; k < la; ++k) a += alphabet[rng.below(alphabet.size())];
        for (std::size_t k = 0; k < lb; ++k) b += alphabet[rng.below(alphabet.size())];
        const auto d = levenshtein(a, b);
        CHECK(d == recursive_distance(a, b));
        CHECK(d == levenshtein(b, a));
        CHECK(d <= std::max(a.size(), b.size()));
    }
}
