#include <doctest.h>

#include <filesystem>
#include <vector>

#include "tsad/detection.hpp"
#include "tsad/rng.hpp"

using namespace tsad;

namespace {

ResidualSet residual_row(const std::vector<double>& errors) {
    ResidualSet r;
    r.start = 0;
    r.errors = Matrix(1, errors.size());
    r.valid = Mask(1, errors.size(), 1);
    for (std::size_t t = 0; t < errors.size(); ++t) r.errors(0, t) = errors[t];
    return r;
}

Mask labels_row(const std::vector<std::size_t>& times, std::size_t len) {
    Mask m(1, len);
    for (std::size_t t : times) m(0, t) = 1;
    return m;
}

double f1_at(const ResidualSet& r, const Mask& labels, double tau,
             std::size_t w) {
    std::vector<std::size_t> preds, truths;
    for (std::size_t t = 0; t < r.errors.cols(); ++t) {
        if (r.valid(0, t) && r.errors(0, t) > tau) preds.push_back(t);
        if (labels(0, t)) truths.push_back(t);
    }
    const NodeMatch m = match_events(preds, truths, w);
    return score_counts(m.matched.size(), m.false_pos.size(), m.false_neg.size()).f1;
}

} // namespace

TEST_CASE("residuals: absolute error with masking") {
    Panel panel;
    panel.node_ids = {"a"};
    panel.timestamps = {0, 1, 2};
    panel.values = Matrix(1, 3);
    panel.values(0, 0) = 5.0;
    panel.values(0, 1) = 2.0;
    panel.values(0, 2) = 1.0;
    panel.mask = Mask(1, 3, 1);
    panel.mask(0, 2) = 0;

    ForecastSet f;
    f.start = 0;
    f.predictions = Matrix(1, 3);
    f.predictions(0, 0) = 3.0;
    f.predictions(0, 1) = 2.0;
    f.predictions(0, 2) = 9.0;

    const ResidualSet r = residuals(panel, f, {0, 3});
    CHECK(r.errors(0, 0) == 2.0);
    CHECK(r.errors(0, 1) == 0.0);
    CHECK(r.valid(0, 2) == 0);

    SUBCASE("sign symmetry") {
        ForecastSet swapped = f;
        swapped.predictions(0, 0) = 5.0;
        Panel p2 = panel;
        p2.values(0, 0) = 3.0;
        const ResidualSet r2 = residuals(p2, swapped, {0, 3});
        CHECK(r2.errors(0, 0) == r.errors(0, 0));
    }
    SUBCASE("coverage mismatch is an error") {
        CHECK_THROWS_AS(residuals(panel, f, {0, 2}), Error);
    }
}

TEST_CASE("sweep: worked example picks the separating midpoint") {
    const ResidualSet r = residual_row({0.1, 0.9, 0.2, 0.8});
    const Mask labels = labels_row({1, 3}, 4);
    const ThresholdMap map = sweep_thresholds(r, labels, {.tolerance = 0});
    CHECK(map.tau[0] == doctest::Approx(0.5));
    CHECK(map.val_f1[0] == 1.0);
}

TEST_CASE("sweep: no anomalies and no fallback means never alarm") {
    const ResidualSet r = residual_row({0.3, 0.1, 0.7});
    const Mask labels = labels_row({}, 3);
    const ThresholdMap map =
        sweep_thresholds(r, labels, {.tolerance = 0, .pooled_fallback = false});
    CHECK(map.tau[0] > 0.7);
    const Mask flags = flag(r, map);
    for (std::size_t t = 0; t < 3; ++t) CHECK(flags(0, t) == 0);
    CHECK(map.val_f1[0] == 1.0); // vacuous
}

TEST_CASE("sweep: everything anomalous drives tau to the floor") {
    const ResidualSet r = residual_row({0.3, 0.1, 0.7, 0.5});
    const Mask labels = labels_row({0, 1, 2, 3}, 4);
    const ThresholdMap map = sweep_thresholds(r, labels, {.tolerance = 0});
    CHECK(map.tau[0] == ThresholdMap::kTauMin);
    CHECK(map.val_f1[0] == 1.0);
    const Mask flags = flag(r, map);
    for (std::size_t t = 0; t < 4; ++t) CHECK(flags(0, t) == 1);
}

TEST_CASE("sweep: empty validation residuals are an error") {
    ResidualSet r = residual_row({0.3, 0.1});
    r.valid(0, 0) = 0;
    r.valid(0, 1) = 0;
    CHECK_THROWS_AS(sweep_thresholds(r, labels_row({}, 2), {}), Error);
}

TEST_CASE("sweep: optimal over exhaustive candidate enumeration") {
    SeededRng rng(71);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t len = 4 + rng.uniform_int(12);
        std::vector<double> errors(len);
        for (auto& e : errors) e = rng.uniform();
        std::vector<std::size_t> truths;
        for (std::size_t t = 0; t < len; ++t)
            if (rng.uniform() < 0.3) truths.push_back(t);
        const std::size_t w = rng.uniform_int(3);

        const ResidualSet r = residual_row(errors);
        const Mask labels = labels_row(truths, len);
        const ThresholdMap map =
            sweep_thresholds(r, labels, {.tolerance = w, .pooled_fallback = false});

        // Exhaustive: every candidate from the same rule, plus a dense grid
        // of extra thresholds; the swept choice must not be beaten.
        double best = -1.0;
        for (double tau : detail::threshold_candidates(errors))
            best = std::max(best, f1_at(r, labels, tau, w));
        for (double tau = 0.0; tau <= 1.05; tau += 0.01)
            best = std::max(best, f1_at(r, labels, std::max(tau, 1e-6), w));
        REQUIRE(map.val_f1[0] == doctest::Approx(best));
        REQUIRE(f1_at(r, labels, map.tau[0], w) == doctest::Approx(map.val_f1[0]));
    }
}

TEST_CASE("sweep: pooled fallback for nodes without validation anomalies") {
    ResidualSet r;
    r.start = 0;
    r.errors = Matrix(2, 4);
    r.valid = Mask(2, 4, 1);
    // Node 0 has labeled anomalies; node 1 has none.
    const double e0[] = {0.1, 0.9, 0.2, 0.8};
    const double e1[] = {0.15, 0.25, 0.1, 0.2};
    for (std::size_t t = 0; t < 4; ++t) {
        r.errors(0, t) = e0[t];
        r.errors(1, t) = e1[t];
    }
    Mask labels(2, 4);
    labels(0, 1) = 1;
    labels(0, 3) = 1;
    const ThresholdMap map = sweep_thresholds(r, labels, {.tolerance = 0});
    CHECK(map.pooled[0] == 0);
    CHECK(map.pooled[1] == 1);
    // The pooled threshold still separates node 0's anomalies and keeps
    // node 1 quiet.
    const Mask flags = flag(r, map);
    CHECK(flags(0, 1) == 1);
    CHECK(flags(0, 3) == 1);
    CHECK(flags(1, 0) == 0);
    CHECK(flags(1, 1) == 0);
}

TEST_CASE("flag: strict inequality at the boundary") {
    const ResidualSet r = residual_row({0.5, 0.2, 0.0});
    ThresholdMap map;
    map.tau = {0.5};
    const Mask flags = flag(r, map);
    CHECK(flags(0, 0) == 0); // e == tau is not flagged
    CHECK(flags(0, 1) == 0);
    CHECK(flags(0, 2) == 0);
}

TEST_CASE("flag: zero residuals never alarm") {
    const ResidualSet r = residual_row({0.0, 0.0, 0.0});
    ThresholdMap map;
    map.tau = {ThresholdMap::kTauMin};
    const Mask flags = flag(r, map);
    for (std::size_t t = 0; t < 3; ++t) CHECK(flags(0, t) == 0);
}

TEST_CASE("flag: matches an elementwise oracle on random instances") {
    SeededRng rng(83);
    for (int rep = 0; rep < 50; ++rep) {
        const std::size_t n = 1 + rng.uniform_int(4);
        const std::size_t len = 1 + rng.uniform_int(30);
        ResidualSet r;
        r.start = 0;
        r.errors = Matrix(n, len);
        r.valid = Mask(n, len);
        ThresholdMap map;
        for (std::size_t i = 0; i < n; ++i) map.tau.push_back(0.1 + rng.uniform());
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < len; ++t) {
                r.errors(i, t) = 2.0 * rng.uniform();
                r.valid(i, t) = rng.uniform() < 0.9;
            }
        const Mask flags = flag(r, map);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < len; ++t) {
                const bool expect = r.valid(i, t) && r.errors(i, t) > map.tau[i];
                REQUIRE(static_cast<bool>(flags(i, t)) == expect);
            }
    }
}

TEST_CASE("flag monotonicity: raising tau never adds alarms") {
    SeededRng rng(97);
    ResidualSet r;
    r.start = 0;
    r.errors = Matrix(1, 50);
    r.valid = Mask(1, 50, 1);
    for (std::size_t t = 0; t < 50; ++t) r.errors(0, t) = rng.uniform();
    std::size_t prev_count = 51;
    for (double tau = 0.05; tau < 1.1; tau += 0.05) {
        ThresholdMap map;
        map.tau = {tau};
        const Mask flags = flag(r, map);
        std::size_t count = 0;
        for (std::size_t t = 0; t < 50; ++t) count += flags(0, t);
        CHECK(count <= prev_count);
        prev_count = count;
    }
}

TEST_CASE("interval_flag mirrors flag with per-cell half-widths") {
    Panel panel;
    panel.node_ids = {"a"};
    panel.timestamps = {0, 1, 2};
    panel.values = Matrix(1, 3);
    panel.values(0, 0) = 1.0;
    panel.values(0, 1) = 2.0;
    panel.values(0, 2) = 3.0;
    panel.mask = Mask(1, 3, 1);

    ForecastSet f;
    f.start = 0;
    f.predictions = Matrix(1, 3);
    f.predictions(0, 0) = 1.5; // err 0.5
    f.predictions(0, 1) = 2.0; // err 0
    f.predictions(0, 2) = 2.5; // err 0.5
    f.half_width = Matrix(1, 3, 0.5);

    const Mask flags = interval_flag(panel, f);
    CHECK(flags(0, 0) == 0); // boundary: err == hw not flagged
    CHECK(flags(0, 1) == 0);
    CHECK(flags(0, 2) == 0);
    (*f.half_width)(0, 0) = 0.4;
    const Mask flags2 = interval_flag(panel, f);
    CHECK(flags2(0, 0) == 1);

    SUBCASE("missing half-widths are an error") {
        f.half_width.reset();
        CHECK_THROWS_AS(interval_flag(panel, f), Error);
    }
}

TEST_CASE("thresholds CSV round-trip") {
    const std::vector<std::string> ids{"a", "b"};
    ThresholdMap map;
    map.tau = {0.125, 2.5};
    map.val_f1 = {0.75, 1.0};
    map.grid_size = {4, 4};
    map.pooled = {0, 0};
    const std::string path =
        (std::filesystem::temp_directory_path() / "tsad_thresholds.csv").string();
    write_thresholds_csv(path, ids, map);
    const ThresholdMap back = read_thresholds_csv(path, ids);
    CHECK(back.tau == map.tau);
    CHECK(back.val_f1 == map.val_f1);
    std::filesystem::remove(path);
}
