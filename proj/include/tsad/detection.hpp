#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include "tsad/error.hpp"
#include "tsad/eval.hpp"
#include "tsad/forecast.hpp"
#include "tsad/format.hpp"
#include "tsad/matrix.hpp"
#include "tsad/panel.hpp"

namespace tsad {

// Absolute one-step forecast errors over an evaluation range; cells without
// an observation are invalid and never flag.
struct ResidualSet {
    std::size_t start = 0;
    Matrix errors; // [n_nodes x range_len]
    Mask valid;

    TimeRange range() const { return {start, start + errors.cols()}; }
};

// Per-node tuned thresholds plus tuning metadata. Thresholds are floored at
// kTauMin so they stay strictly positive.
struct ThresholdMap {
    static constexpr double kTauMin = 1e-6;

    std::vector<double> tau;
    std::vector<double> val_f1;          // best validation F1 per node
    std::vector<std::size_t> grid_size;  // candidate count per node
    std::vector<std::uint8_t> pooled;    // tuned via the pooled fallback
};

inline ResidualSet residuals(const Panel& panel, const ForecastSet& forecasts,
                             TimeRange eval_range) {
    if (forecasts.range() != eval_range)
        fail("detection", "forecast coverage does not match eval range");
    if (forecasts.predictions.rows() != panel.n_nodes())
        fail("detection", "forecast node count does not match panel");
    ResidualSet out;
    out.start = eval_range.begin;
    out.errors = Matrix(panel.n_nodes(), eval_range.length());
    out.valid = Mask(panel.n_nodes(), eval_range.length());
    for (std::size_t i = 0; i < panel.n_nodes(); ++i)
        for (std::size_t t = eval_range.begin; t < eval_range.end; ++t) {
            const std::size_t col = t - eval_range.begin;
            if (!panel.observed(i, t)) continue;
            out.valid(i, col) = 1;
            out.errors(i, col) =
                std::fabs(panel.values(i, t) - forecasts.predictions(i, col));
        }
    return out;
}

namespace detail {

// Candidate thresholds: the floor (flags everything above it), midpoints
// between consecutive sorted unique residuals, and max+eps (flags nothing).
inline std::vector<double> threshold_candidates(std::vector<double> values) {
    std::sort(values.begin(), values.end());
    values.erase(std::unique(values.begin(), values.end()), values.end());
    std::vector<double> candidates;
    candidates.push_back(ThresholdMap::kTauMin);
    for (std::size_t k = 0; k + 1 < values.size(); ++k)
        candidates.push_back(
            std::max(ThresholdMap::kTauMin, 0.5 * (values[k] + values[k + 1])));
    if (!values.empty())
        candidates.push_back(
            std::max(ThresholdMap::kTauMin, values.back() + 1e-9));
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()),
                     candidates.end());
    return candidates;
}

inline std::vector<std::size_t> times_above(
    const std::vector<std::pair<double, std::size_t>>& sorted_by_residual,
    double tau) {
    std::vector<std::size_t> times;
    for (auto it = std::upper_bound(
             sorted_by_residual.begin(), sorted_by_residual.end(),
             std::make_pair(tau, std::numeric_limits<std::size_t>::max()));
         it != sorted_by_residual.end(); ++it)
        times.push_back(it->second);
    std::sort(times.begin(), times.end());
    return times;
}

} // namespace detail

struct SweepOptions {
    std::size_t tolerance = 0;
    bool pooled_fallback = true; // nodes without validation anomalies
};

// For each node, sweeps candidate thresholds and keeps the one maximizing
// tolerance-window F1 on the validation labels; ties break toward the
// largest threshold (fewest alarms). Nodes with no labeled validation
// anomaly either borrow a pooled threshold tuned on all nodes' residuals
// jointly, or (fallback disabled) get max+eps so they never alarm.
inline ThresholdMap sweep_thresholds(const ResidualSet& residual_set,
                                     const Mask& labels,
                                     const SweepOptions& options = {}) {
    const std::size_t n = residual_set.errors.rows();
    const std::size_t len = residual_set.errors.cols();
    if (labels.rows() != n || labels.cols() != len)
        fail("detection", "label shape does not match residuals");

    ThresholdMap map;
    map.tau.assign(n, 0.0);
    map.val_f1.assign(n, 0.0);
    map.grid_size.assign(n, 0);
    map.pooled.assign(n, 0);

    // Sorted (residual, time) per node for fast flag extraction.
    std::vector<std::vector<std::pair<double, std::size_t>>> by_residual(n);
    std::vector<std::vector<std::size_t>> truth_times(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t t = 0; t < len; ++t) {
            if (!residual_set.valid(i, t)) continue;
            by_residual[i].emplace_back(residual_set.errors(i, t), t);
            if (labels(i, t)) truth_times[i].push_back(t);
        }
        if (by_residual[i].empty())
            fail("detection", "empty validation residuals for node index " +
                                  std::to_string(i));
        std::sort(by_residual[i].begin(), by_residual[i].end());
    }

    auto node_f1 = [&](std::size_t i, double tau) {
        const auto preds = detail::times_above(by_residual[i], tau);
        const NodeMatch m = match_events(preds, truth_times[i], options.tolerance);
        return score_counts(m.matched.size(), m.false_pos.size(),
                            m.false_neg.size());
    };

    std::vector<std::size_t> fallback_nodes;
    for (std::size_t i = 0; i < n; ++i) {
        if (truth_times[i].empty()) {
            if (options.pooled_fallback) {
                fallback_nodes.push_back(i);
                continue;
            }
            // Vacuous-positive avoidance: never alarm.
            map.tau[i] = std::max(ThresholdMap::kTauMin,
                                  by_residual[i].back().first + 1e-9);
            map.val_f1[i] = node_f1(i, map.tau[i]).f1;
            map.grid_size[i] = 1;
            continue;
        }
        std::vector<double> values;
        values.reserve(by_residual[i].size());
        for (const auto& [e, t] : by_residual[i]) values.push_back(e);
        const auto candidates = detail::threshold_candidates(std::move(values));
        double best_f1 = -1.0;
        double best_tau = ThresholdMap::kTauMin;
        for (double tau : candidates) {
            const double f1 = node_f1(i, tau).f1;
            if (f1 > best_f1 || (f1 == best_f1 && tau > best_tau)) {
                best_f1 = f1;
                best_tau = tau;
            }
        }
        map.tau[i] = best_tau;
        map.val_f1[i] = best_f1;
        map.grid_size[i] = candidates.size();
    }

    if (!fallback_nodes.empty()) {
        // Pooled sweep: one global threshold maximizing micro-F1 over all
        // nodes' residuals, assigned to the fallback nodes.
        std::vector<double> pooled_values;
        for (std::size_t i = 0; i < n; ++i)
            for (const auto& [e, t] : by_residual[i]) pooled_values.push_back(e);
        const auto candidates =
            detail::threshold_candidates(std::move(pooled_values));
        double best_f1 = -1.0;
        double best_tau = ThresholdMap::kTauMin;
        for (double tau : candidates) {
            std::size_t tp = 0, fp = 0, fn = 0;
            for (std::size_t i = 0; i < n; ++i) {
                const NodeScore s = node_f1(i, tau);
                tp += s.tp;
                fp += s.fp;
                fn += s.fn;
            }
            const double f1 = score_counts(tp, fp, fn).f1;
            if (f1 > best_f1 || (f1 == best_f1 && tau > best_tau)) {
                best_f1 = f1;
                best_tau = tau;
            }
        }
        for (std::size_t i : fallback_nodes) {
            map.tau[i] = best_tau;
            map.val_f1[i] = node_f1(i, best_tau).f1;
            map.grid_size[i] = candidates.size();
            map.pooled[i] = 1;
        }
    }
    return map;
}

// flag <=> residual strictly exceeds the node threshold at a valid cell.
inline Mask flag(const ResidualSet& residual_set, const ThresholdMap& thresholds) {
    const std::size_t n = residual_set.errors.rows();
    if (thresholds.tau.size() != n)
        fail("detection", "threshold count does not match residual nodes");
    Mask flags(n, residual_set.errors.cols());
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < residual_set.errors.cols(); ++t)
            flags(i, t) = residual_set.valid(i, t) &&
                          residual_set.errors(i, t) > thresholds.tau[i];
    return flags;
}

// Interval rule for baselines with prediction intervals:
// flag <=> |y - yhat| strictly exceeds the half-width.
inline Mask interval_flag(const Panel& panel, const ForecastSet& forecasts) {
    if (!forecasts.half_width)
        fail("detection", "forecasts carry no interval half-widths");
    const TimeRange range = forecasts.range();
    Mask flags(panel.n_nodes(), range.length());
    for (std::size_t i = 0; i < panel.n_nodes(); ++i)
        for (std::size_t t = range.begin; t < range.end; ++t) {
            const std::size_t col = t - range.begin;
            if (!panel.observed(i, t)) continue;
            const double err =
                std::fabs(panel.values(i, t) - forecasts.predictions(i, col));
            flags(i, col) = err > (*forecasts.half_width)(i, col);
        }
    return flags;
}

inline void write_thresholds_csv(const std::string& path,
                                 const std::vector<std::string>& node_ids,
                                 const ThresholdMap& map) {
    std::ofstream out(path);
    if (!out) fail("io", "cannot write " + path);
    out << "node_id,threshold,val_f1\n";
    for (std::size_t i = 0; i < node_ids.size(); ++i)
        out << node_ids[i] << ',' << format_g(map.tau[i]) << ','
            << format_g(map.val_f1[i]) << '\n';
}

inline ThresholdMap read_thresholds_csv(const std::string& path,
                                        const std::vector<std::string>& node_ids) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || line.rfind("node_id,threshold,val_f1", 0) != 0)
        fail("format", path + ": expected header node_id,threshold,val_f1");
    ThresholdMap map;
    map.tau.assign(node_ids.size(), 0.0);
    map.val_f1.assign(node_ids.size(), 0.0);
    map.grid_size.assign(node_ids.size(), 0);
    map.pooled.assign(node_ids.size(), 0);
    std::vector<bool> seen(node_ids.size(), false);
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto c1 = line.find(',');
        const auto c2 = line.find(',', c1 + 1);
        if (c1 == std::string::npos || c2 == std::string::npos)
            fail("format", path + ": malformed row '" + line + "'");
        const std::string id = line.substr(0, c1);
        const auto it = std::find(node_ids.begin(), node_ids.end(), id);
        if (it == node_ids.end()) fail("format", path + ": unknown node '" + id + "'");
        const std::size_t i = it - node_ids.begin();
        map.tau[i] = std::stod(line.substr(c1 + 1, c2 - c1 - 1));
        map.val_f1[i] = std::stod(line.substr(c2 + 1));
        seen[i] = true;
    }
    for (std::size_t i = 0; i < node_ids.size(); ++i)
        if (!seen[i]) fail("format", path + ": missing node '" + node_ids[i] + "'");
    return map;
}

} // namespace tsad
