#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <set>
#include <vector>

#include "relaybp/errors.hpp"
#include "relaybp/sampler.hpp"

using namespace relaybp;

namespace {

// Skewed 10-class label list; class c has sizes[c] images, contiguous.
std::vector<int> skewed_labels(const std::vector<int>& sizes) {
    std::vector<int> labels;
    for (std::size_t c = 0; c < sizes.size(); ++c)
        labels.insert(labels.end(), sizes[c], static_cast<int>(c));
    return labels;
}

const std::vector<int> kSkew = {40, 68, 300, 51, 77, 120, 44, 260, 90, 55};

std::vector<int> draw_counts(const std::vector<int>& labels, const std::vector<Index>& draws,
                             int classes) {
    std::vector<int> counts(classes, 0);
    for (Index i : draws) {
        REQUIRE(i >= 0);
        REQUIRE(i < static_cast<Index>(labels.size()));
        ++counts[labels[static_cast<std::size_t>(i)]];
    }
    return counts;
}

}  // namespace

TEST_CASE("every block of C draws hits each class exactly once, however skewed") {
    std::vector<int> labels = skewed_labels(kSkew);
    SamplerState st = init_sampler(labels, 99);
    const int C = 10;
    for (int block = 0; block < 25; ++block) {
        std::vector<Index> draws = next_batch(st, C);
        std::vector<int> counts = draw_counts(labels, draws, C);
        for (int c = 0; c < C; ++c) CHECK(counts[c] == 1);
    }
}

TEST_CASE("after 10*C draws every class was drawn exactly 10 times") {
    std::vector<int> labels = skewed_labels(kSkew);
    SamplerState st = init_sampler(labels, 7);
    std::vector<Index> all;
    // Batch sizes that straddle the rotation boundary; 100 draws total.
    for (Index b : {7, 13, 30, 50}) {
        std::vector<Index> part = next_batch(st, b);
        all.insert(all.end(), part.begin(), part.end());
    }
    REQUIRE(all.size() == 100);
    std::vector<int> counts = draw_counts(labels, all, 10);
    for (int c = 0; c < 10; ++c) CHECK(counts[c] == 10);
}

TEST_CASE("equal seeds reproduce the exact draw sequence, different seeds do not") {
    std::vector<int> labels = skewed_labels(kSkew);
    SamplerState a = init_sampler(labels, 1234);
    SamplerState b = init_sampler(labels, 1234);
    SamplerState c = init_sampler(labels, 1235);
    bool differs = false;
    for (int i = 0; i < 20; ++i) {
        std::vector<Index> da = next_batch(a, 17);
        std::vector<Index> db = next_batch(b, 17);
        std::vector<Index> dc = next_batch(c, 17);
        CHECK(da == db);
        if (da != dc) differs = true;
    }
    CHECK(differs);
}

TEST_CASE("a class never repeats an image before exhausting its list") {
    std::vector<int> labels = skewed_labels(kSkew);
    SamplerState st = init_sampler(labels, 5);
    std::vector<std::vector<Index>> seen(10);
    for (int i = 0; i < 40; ++i) {
        std::vector<Index> draws = next_batch(st, 10);
        for (Index idx : draws) seen[labels[static_cast<std::size_t>(idx)]].push_back(idx);
    }
    // Class 0 has 40 images and was drawn 40 times: all distinct.
    REQUIRE(seen[0].size() == 40);
    std::set<Index> uniq(seen[0].begin(), seen[0].end());
    CHECK(uniq.size() == 40);
    // Larger classes saw no repeats either (fewer draws than images).
    std::set<Index> uniq2(seen[2].begin(), seen[2].end());
    CHECK(uniq2.size() == seen[2].size());
}

TEST_CASE("class-aware balance beats uniform draws on skewed data") {
    std::vector<int> labels = skewed_labels(kSkew);
    SamplerState st = init_sampler(labels, 11);
    std::vector<int> counts = draw_counts(labels, next_batch(st, 100), 10);
    const auto [amin, amax] = std::minmax_element(counts.begin(), counts.end());
    CHECK(*amax - *amin == 0);

    // Uniform index draws follow the skew: the largest class dominates.
    Rng rng(11);
    std::vector<Index> uniform;
    for (int i = 0; i < 100; ++i)
        uniform.push_back(static_cast<Index>(rng.next_below(labels.size())));
    std::vector<int> ucounts = draw_counts(labels, uniform, 10);
    const auto [umin, umax] = std::minmax_element(ucounts.begin(), ucounts.end());
    CHECK(*umax - *umin > 0);
}

TEST_CASE("sampler rejects unusable label lists") {
    CHECK_THROWS_AS(init_sampler({}, 1), ConfigError);
    CHECK_THROWS_AS(init_sampler({0, 1, -3}, 1), ConfigError);
    // Class 1 has no images.
    CHECK_THROWS_AS(init_sampler({0, 0, 2}, 1), ConfigError);

    std::vector<int> ok = {0, 1, 1, 0};
    SamplerState st = init_sampler(ok, 1);
    CHECK_THROWS_AS(next_batch(st, 0), ConfigError);
}
