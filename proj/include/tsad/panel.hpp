#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <unordered_set>
#include <vector>

#include "tsad/error.hpp"
#include "tsad/matrix.hpp"

namespace tsad {

// Half-open index range [begin, end) on the shared time axis.
struct TimeRange {
    std::size_t begin = 0;
    std::size_t end = 0;

    std::size_t length() const { return end - begin; }
    bool contains(std::size_t t) const { return t >= begin && t < end; }
    bool operator==(const TimeRange&) const = default;
};

// Node x time matrix of aligned observations. values/mask (and labels when
// present) share the same shape; timestamps are strictly increasing; models
// operate on the ordinal index.
struct Panel {
    std::vector<std::string> node_ids;
    std::vector<std::int64_t> timestamps;
    Matrix values;                // [n_nodes x T]
    Mask mask;                    // true = observed
    std::optional<Mask> labels;   // true = anomaly

    std::size_t n_nodes() const { return node_ids.size(); }
    std::size_t n_steps() const { return timestamps.size(); }

    bool observed(std::size_t i, std::size_t t) const { return mask(i, t) != 0; }
    bool labeled(std::size_t i, std::size_t t) const {
        return labels && (*labels)(i, t) != 0;
    }

    void validate() const {
        const std::size_t n = n_nodes();
        const std::size_t T = n_steps();
        if (values.rows() != n || values.cols() != T)
            fail("panel", "values shape does not match node_ids/timestamps");
        if (mask.rows() != n || mask.cols() != T)
            fail("panel", "mask shape does not match values");
        if (labels && (labels->rows() != n || labels->cols() != T))
            fail("panel", "labels shape does not match values");
        for (std::size_t t = 1; t < T; ++t)
            if (timestamps[t] <= timestamps[t - 1])
                fail("panel", "timestamps not strictly increasing at index " +
                                  std::to_string(t));
        std::unordered_set<std::string> seen;
        for (const auto& id : node_ids)
            if (!seen.insert(id).second)
                fail("panel", "duplicate node id '" + id + "'");
        if (labels) {
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t t = 0; t < T; ++t)
                    if ((*labels)(i, t) && !mask(i, t))
                        fail("panel", "label on unobserved cell, node " +
                                          node_ids[i] + " t=" + std::to_string(t));
        }
    }
};

// Per-node mean/std in raw units. Zero deviations are floored at kStdFloor
// so constant series normalize to zeros instead of dividing by zero.
struct NormalizationParams {
    static constexpr double kStdFloor = 1e-8;

    std::vector<double> mean;
    std::vector<double> stddev; // already floored

    double normalize(std::size_t node, double x) const {
        return (x - mean[node]) / stddev[node];
    }
    double denormalize(std::size_t node, double z) const {
        return z * stddev[node] + mean[node];
    }
};

// Per-node zero mean / unit variance over observed entries of the training
// prefix [0, train_end). Population (divide-by-N) standard deviation.
// Labels and mask pass through unchanged.
inline std::pair<Panel, NormalizationParams> normalize_panel(
    const Panel& panel, std::size_t train_end) {
    const std::size_t n = panel.n_nodes();
    NormalizationParams params;
    params.mean.resize(n);
    params.stddev.resize(n);

    Panel out = panel;
    for (std::size_t i = 0; i < n; ++i) {
        double sum = 0.0;
        std::size_t count = 0;
        for (std::size_t t = 0; t < train_end; ++t) {
            if (!panel.observed(i, t)) continue;
            sum += panel.values(i, t);
            ++count;
        }
        if (count < 2)
            fail("degenerate-node",
                 "node " + panel.node_ids[i] +
                     " has fewer than 2 observed training points");
        const double mean = sum / static_cast<double>(count);
        double sq = 0.0;
        for (std::size_t t = 0; t < train_end; ++t) {
            if (!panel.observed(i, t)) continue;
            const double d = panel.values(i, t) - mean;
            sq += d * d;
        }
        double stddev = std::sqrt(sq / static_cast<double>(count));
        if (stddev < NormalizationParams::kStdFloor)
            stddev = NormalizationParams::kStdFloor;
        params.mean[i] = mean;
        params.stddev[i] = stddev;
        for (std::size_t t = 0; t < panel.n_steps(); ++t)
            out.values(i, t) = (panel.values(i, t) - mean) / stddev;
    }
    return {std::move(out), std::move(params)};
}

struct SplitRanges {
    TimeRange train;
    TimeRange val;
    TimeRange test;
};

// Contiguous, disjoint, ordered ranges covering [0, T).
inline SplitRanges split_panel(std::size_t n_steps, double train_frac,
                               double val_frac) {
    if (!(train_frac > 0.0) || !(val_frac > 0.0) || train_frac + val_frac >= 1.0)
        fail("split", "fractions must be positive and sum to less than 1");
    const auto n_train =
        static_cast<std::size_t>(std::floor(train_frac * static_cast<double>(n_steps)));
    const auto n_val =
        static_cast<std::size_t>(std::floor(val_frac * static_cast<double>(n_steps)));
    SplitRanges ranges;
    ranges.train = {0, n_train};
    ranges.val = {n_train, n_train + n_val};
    ranges.test = {n_train + n_val, n_steps};
    if (ranges.train.length() == 0 || ranges.val.length() == 0 ||
        ranges.test.length() == 0)
        fail("split", "a split range is empty (T=" + std::to_string(n_steps) + ")");
    return ranges;
}

// Missing values filled by last observation carried forward; positions
// before the first observation take the first observed value. Returned
// matrix is what models consume as input; masked cells stay excluded from
// losses and residuals.
inline Matrix fill_forward(const Panel& panel) {
    Matrix filled = panel.values;
    for (std::size_t i = 0; i < panel.n_nodes(); ++i) {
        // Back-fill the leading gap from the first observation.
        std::size_t first = panel.n_steps();
        for (std::size_t t = 0; t < panel.n_steps(); ++t) {
            if (panel.observed(i, t)) {
                first = t;
                break;
            }
        }
        if (first == panel.n_steps()) {
            for (std::size_t t = 0; t < panel.n_steps(); ++t) filled(i, t) = 0.0;
            continue;
        }
        for (std::size_t t = 0; t < first; ++t) filled(i, t) = filled(i, first);
        double last = filled(i, first);
        for (std::size_t t = first; t < panel.n_steps(); ++t) {
            if (panel.observed(i, t))
                last = filled(i, t);
            else
                filled(i, t) = last;
        }
    }
    return filled;
}

} // namespace tsad
