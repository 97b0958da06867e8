#include <doctest.h>

#include <cmath>

#include "tsad/panel.hpp"
#include "tsad/rng.hpp"

using namespace tsad;

namespace {

Panel make_panel(const std::vector<std::vector<double>>& rows) {
    Panel panel;
    const std::size_t n = rows.size();
    const std::size_t T = rows[0].size();
    for (std::size_t i = 0; i < n; ++i)
        panel.node_ids.push_back("n" + std::to_string(i));
    for (std::size_t t = 0; t < T; ++t)
        panel.timestamps.push_back(static_cast<std::int64_t>(t));
    panel.values = Matrix(n, T);
    panel.mask = Mask(n, T, 1);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < T; ++t) panel.values(i, t) = rows[i][t];
    return panel;
}

} // namespace

TEST_CASE("normalize: constant series hits the std floor") {
    Panel panel = make_panel({{5.0, 5.0, 5.0, 5.0}});
    auto [normed, params] = normalize_panel(panel, 4);
    for (std::size_t t = 0; t < 4; ++t) CHECK(normed.values(0, t) == 0.0);
    CHECK(params.mean[0] == 5.0);
    CHECK(params.stddev[0] == NormalizationParams::kStdFloor);
}

TEST_CASE("normalize: already standardized series is unchanged") {
    // mean 0 and population std 1 on the train range
    Panel panel = make_panel({{-1.0, 1.0, -1.0, 1.0}});
    auto [normed, params] = normalize_panel(panel, 4);
    for (std::size_t t = 0; t < 4; ++t)
        CHECK(normed.values(0, t) == doctest::Approx(panel.values(0, t)).epsilon(1e-12));
}

TEST_CASE("normalize: population moments of 1,2,3,4") {
    // Brute-force oracle: mean = sum/N, std = sqrt(sum((x-mean)^2)/N).
    const std::vector<double> xs{1.0, 2.0, 3.0, 4.0};
    double mean = 0.0;
    for (double x : xs) mean += x;
    mean /= 4.0;
    double sq = 0.0;
    for (double x : xs) sq += (x - mean) * (x - mean);
    const double stddev = std::sqrt(sq / 4.0);

    Panel panel = make_panel({xs});
    auto [normed, params] = normalize_panel(panel, 4);
    CHECK(params.mean[0] == doctest::Approx(2.5));
    CHECK(params.stddev[0] == doctest::Approx(1.118034).epsilon(1e-6));
    CHECK(params.stddev[0] == doctest::Approx(stddev));
    CHECK(normed.values(0, 0) == doctest::Approx(-1.341641).epsilon(1e-6));
}

TEST_CASE("normalize: too few observed training points is an error") {
    Panel panel = make_panel({{1.0, 2.0, 3.0}});
    panel.mask(0, 0) = 0;
    panel.mask(0, 1) = 0;
    CHECK_THROWS_WITH_AS(normalize_panel(panel, 3),
                         doctest::Contains("n0"), Error);
}

TEST_CASE("normalize/denormalize round-trip on random panels") {
    SeededRng rng(7);
    for (int rep = 0; rep < 20; ++rep) {
        const std::size_t n = 1 + rng.uniform_int(4);
        const std::size_t T = 10 + rng.uniform_int(50);
        Panel panel;
        for (std::size_t i = 0; i < n; ++i)
            panel.node_ids.push_back("n" + std::to_string(i));
        for (std::size_t t = 0; t < T; ++t)
            panel.timestamps.push_back(static_cast<std::int64_t>(t));
        panel.values = Matrix(n, T);
        panel.mask = Mask(n, T, 1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < T; ++t)
                panel.values(i, t) = rng.normal(3.0, 10.0);
        auto [normed, params] = normalize_panel(panel, T);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < T; ++t) {
                const double back = params.denormalize(i, normed.values(i, t));
                const double orig = panel.values(i, t);
                CHECK(std::fabs(back - orig) <=
                      1e-12 * std::max(1.0, std::fabs(orig)));
            }
    }
}

TEST_CASE("split: worked examples") {
    SUBCASE("T=100 0.5/0.2") {
        const SplitRanges r = split_panel(100, 0.5, 0.2);
        CHECK(r.train == TimeRange{0, 50});
        CHECK(r.val == TimeRange{50, 70});
        CHECK(r.test == TimeRange{70, 100});
    }
    SUBCASE("T=2000 0.6/0.2") {
        const SplitRanges r = split_panel(2000, 0.6, 0.2);
        CHECK(r.train == TimeRange{0, 1200});
        CHECK(r.val == TimeRange{1200, 1600});
        CHECK(r.test == TimeRange{1600, 2000});
    }
    SUBCASE("empty val range is an error") {
        CHECK_THROWS_AS(split_panel(10, 0.9, 0.09), Error);
    }
    SUBCASE("fractions must sum below 1") {
        CHECK_THROWS_AS(split_panel(100, 0.8, 0.2), Error);
    }
}

TEST_CASE("split: ranges partition [0,T) for random instances") {
    SeededRng rng(11);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t T = 10 + rng.uniform_int(5000);
        const double train_frac = 0.2 + 0.6 * rng.uniform();
        const double val_frac = 0.05 + 0.8 * (1.0 - train_frac) * rng.uniform();
        SplitRanges r;
        try {
            r = split_panel(T, train_frac, val_frac);
        } catch (const Error&) {
            continue; // a degenerate rounding produced an empty range
        }
        CHECK(r.train.begin == 0);
        CHECK(r.train.end == r.val.begin);
        CHECK(r.val.end == r.test.begin);
        CHECK(r.test.end == T);
        CHECK(r.train.length() > 0);
        CHECK(r.val.length() > 0);
        CHECK(r.test.length() > 0);
    }
}

TEST_CASE("seeded rng: equal seeds give equal streams") {
    SeededRng a(123456789), b(123456789);
    for (int k = 0; k < 100000; ++k) REQUIRE(a.next_u64() == b.next_u64());
    SeededRng c(1), d(2);
    bool all_equal = true;
    for (int k = 0; k < 100; ++k)
        if (c.next_u64() != d.next_u64()) all_equal = false;
    CHECK_FALSE(all_equal);
}

TEST_CASE("seeded rng: child seeds differ per stream index") {
    CHECK(child_seed(42, 0) != child_seed(42, 1));
    CHECK(child_seed(42, 0) == child_seed(42, 0));
    CHECK(child_seed(42, 0) != child_seed(43, 0));
}

TEST_CASE("fill_forward carries the last observation over gaps") {
    Panel panel = make_panel({{1.0, 99.0, 99.0, 4.0}});
    panel.mask(0, 1) = 0;
    panel.mask(0, 2) = 0;
    const Matrix filled = fill_forward(panel);
    CHECK(filled(0, 0) == 1.0);
    CHECK(filled(0, 1) == 1.0);
    CHECK(filled(0, 2) == 1.0);
    CHECK(filled(0, 3) == 4.0);

    // Leading gap back-fills from the first observation.
    Panel lead = make_panel({{77.0, 2.0, 3.0, 4.0}});
    lead.mask(0, 0) = 0;
    const Matrix lf = fill_forward(lead);
    CHECK(lf(0, 0) == 2.0);
}

TEST_CASE("panel validation catches inconsistencies") {
    Panel panel = make_panel({{1.0, 2.0}});
    panel.timestamps = {5, 5};
    CHECK_THROWS_AS(panel.validate(), Error);
    panel.timestamps = {5, 6};
    CHECK_NOTHROW(panel.validate());
    panel.labels = Mask(1, 2);
    (*panel.labels)(0, 1) = 1;
    panel.mask(0, 1) = 0;
    CHECK_THROWS_AS(panel.validate(), Error);
}
