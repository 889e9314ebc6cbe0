#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "lineident/rng.hpp"

using namespace lineident;

TEST_CASE("mix_seed separates nearby indices and bases") {
    CHECK(mix_seed(0, 0) != mix_seed(0, 1));
    CHECK(mix_seed(0, 0) != mix_seed(1, 0));
    CHECK(mix_seed(42, 7) == mix_seed(42, 7));
    // No collisions over a modest grid.
    std::vector<std::uint64_t> seen;
    for (std::uint64_t b = 0; b < 50; ++b)
        for (std::uint64_t i = 0; i < 50; ++i) seen.push_back(mix_seed(b, i));
    std::sort(seen.begin(), seen.end());
    CHECK(std::adjacent_find(seen.begin(), seen.end()) == seen.end());
}

TEST_CASE("uniform01 stays in [0,1) and reproduces with the seed") {
    Rng a(123), b(123);
    for (int i = 0; i < 1000; ++i) {
        const double x = a.uniform01();
        CHECK(x >= 0.0);
        CHECK(x < 1.0);
        CHECK(x == b.uniform01());
    }
}

TEST_CASE("uniform_open avoids the endpoints") {
    Rng rng(5);
    for (int i = 0; i < 10000; ++i) {
        const double x = rng.uniform_open();
        CHECK(x > 0.0);
        CHECK(x < 1.0);
    }
}

TEST_CASE("uniform(lo,hi) covers the interval with the right mean") {
    Rng rng(9);
    double sum = 0.0;
    const int n = 100000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.uniform(2.0, 6.0);
        CHECK(x >= 2.0);
        CHECK(x <= 6.0);
        sum += x;
    }
    CHECK(std::abs(sum / n - 4.0) < 0.02);
}

TEST_CASE("below(n) is uniform over 0..n-1") {
    Rng rng(11);
    std::vector<int> counts(7, 0);
    const int n = 70000;
    for (int i = 0; i < n; ++i) {
        const std::uint64_t v = rng.below(7);
        REQUIRE(v < 7);
        ++counts[static_cast<int>(v)];
    }
    for (int c : counts) CHECK(std::abs(c - 10000) < 500);
}

TEST_CASE("normal has zero mean and unit variance") {
    Rng rng(13);
    double sum = 0.0, sq = 0.0;
    const int n = 200000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.normal();
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean) < 0.01);
    CHECK(std::abs(var - 1.0) < 0.02);
}

TEST_CASE("gamma sampling matches requested moments") {
    // mean = shape*scale, cv = 1/sqrt(shape)
    struct Case {
        double mean, cv;
    };
    const Case cases[] = {{5.0, 1.0}, {8.0, 0.5}, {10.0, 0.2}};
    int idx = 0;
    for (const Case& c : cases) {
        Rng rng(100 + idx++);
        const double shape = 1.0 / (c.cv * c.cv);
        const double scale = c.mean * c.cv * c.cv;
        double sum = 0.0, sq = 0.0;
        const int n = 1000000;
        for (int i = 0; i < n; ++i) {
            const double x = rng.gamma(shape, scale);
            CHECK(x > 0.0);
            sum += x;
            sq += x * x;
        }
        const double mean = sum / n;
        const double var = sq / n - mean * mean;
        const double cv = std::sqrt(var) / mean;
        CHECK(std::abs(mean - c.mean) / c.mean < 0.01);
        CHECK(std::abs(cv - c.cv) / c.cv < 0.02);
    }
}

TEST_CASE("gamma with shape below one still matches moments") {
    Rng rng(77);
    const double shape = 0.5, scale = 3.0;  // cv = sqrt(2)
    double sum = 0.0, sq = 0.0;
    const int n = 500000;
    for (int i = 0; i < n; ++i) {
        const double x = rng.gamma(shape, scale);
        CHECK(x >= 0.0);
        sum += x;
        sq += x * x;
    }
    const double mean = sum / n;
    const double var = sq / n - mean * mean;
    CHECK(std::abs(mean - shape * scale) / (shape * scale) < 0.01);
    CHECK(std::abs(var - shape * scale * scale) / (shape * scale * scale) < 0.03);
}

TEST_CASE("identical seeds give identical draw sequences across types") {
    Rng a(555), b(555);
    for (int i = 0; i < 200; ++i) {
        CHECK(a.gamma(2.5, 1.3) == b.gamma(2.5, 1.3));
        CHECK(a.normal() == b.normal());
        CHECK(a.below(17) == b.below(17));
    }
}
