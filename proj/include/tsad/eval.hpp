#pragma once

#include <cstddef>
#include <string>
#include <utility>
#include <vector>

#include "tsad/error.hpp"
#include "tsad/graph.hpp"
#include "tsad/matrix.hpp"

namespace tsad {

// One-to-one matching between flagged steps and labeled anomalies under a
// time tolerance: a prediction at p detects a truth at t when |p - t| <= w.
struct NodeMatch {
    std::vector<std::pair<std::size_t, std::size_t>> matched; // (pred_t, true_t)
    std::vector<std::size_t> false_pos; // unmatched predictions
    std::vector<std::size_t> false_neg; // unmatched truths
};

struct MatchResult {
    std::vector<NodeMatch> per_node;
    std::size_t tolerance = 0;
};

// Greedy matcher: truths in increasing time order each take the earliest
// unmatched prediction inside the window. For this interval structure the
// earliest-feasible rule yields a maximum matching (the unit tests compare
// against brute-force bipartite matching), and it picks the earlier
// prediction on ties.
inline NodeMatch match_events(const std::vector<std::size_t>& pred_times,
                              const std::vector<std::size_t>& true_times,
                              std::size_t w) {
    NodeMatch result;
    std::vector<bool> used(pred_times.size(), false);
    std::size_t cursor = 0; // predictions before this index are used or stale
    for (std::size_t truth : true_times) {
        const std::size_t lo = truth >= w ? truth - w : 0;
        const std::size_t hi = truth + w;
        // Predictions are sorted; anything before lo can never match later
        // truths either.
        while (cursor < pred_times.size() &&
               (used[cursor] || pred_times[cursor] < lo))
            ++cursor;
        std::size_t pick = pred_times.size();
        for (std::size_t k = cursor; k < pred_times.size(); ++k) {
            if (pred_times[k] > hi) break;
            if (!used[k]) {
                pick = k;
                break;
            }
        }
        if (pick < pred_times.size()) {
            used[pick] = true;
            result.matched.emplace_back(pred_times[pick], truth);
        } else {
            result.false_neg.push_back(truth);
        }
    }
    for (std::size_t k = 0; k < pred_times.size(); ++k)
        if (!used[k]) result.false_pos.push_back(pred_times[k]);
    return result;
}

inline std::vector<std::size_t> flag_times(const Mask& flags, std::size_t node) {
    std::vector<std::size_t> times;
    for (std::size_t t = 0; t < flags.cols(); ++t)
        if (flags(node, t)) times.push_back(t);
    return times;
}

// Per-node matching of binary flag matrices (same shape).
inline MatchResult match(const Mask& pred, const Mask& truth, std::size_t w) {
    if (pred.rows() != truth.rows() || pred.cols() != truth.cols())
        fail("eval", "prediction/truth shape mismatch");
    MatchResult result;
    result.tolerance = w;
    result.per_node.reserve(pred.rows());
    for (std::size_t i = 0; i < pred.rows(); ++i)
        result.per_node.push_back(
            match_events(flag_times(pred, i), flag_times(truth, i), w));
    return result;
}

struct NodeScore {
    std::size_t tp = 0;
    std::size_t fp = 0;
    std::size_t fn = 0;
    double precision = 0.0;
    double recall = 0.0;
    double f1 = 0.0;
};

// Per-node and micro-aggregated precision/recall/F1. A node with neither
// predictions nor truths scores 1.0 across the board (vacuous) but
// contributes zero counts to the micro aggregate; 0/0 in F1 itself is 0.
struct ScoreTable {
    std::vector<NodeScore> per_node;
    NodeScore micro;
};

inline NodeScore score_counts(std::size_t tp, std::size_t fp, std::size_t fn) {
    NodeScore s;
    s.tp = tp;
    s.fp = fp;
    s.fn = fn;
    if (tp + fp + fn == 0) {
        s.precision = s.recall = s.f1 = 1.0;
        return s;
    }
    s.precision = (tp + fp) == 0 ? 0.0
                                 : static_cast<double>(tp) /
                                       static_cast<double>(tp + fp);
    s.recall = (tp + fn) == 0 ? 0.0
                              : static_cast<double>(tp) /
                                    static_cast<double>(tp + fn);
    s.f1 = (s.precision + s.recall) == 0.0
               ? 0.0
               : 2.0 * s.precision * s.recall / (s.precision + s.recall);
    return s;
}

inline ScoreTable score(const MatchResult& matches) {
    ScoreTable table;
    std::size_t tp = 0, fp = 0, fn = 0;
    for (const auto& node : matches.per_node) {
        table.per_node.push_back(score_counts(
            node.matched.size(), node.false_pos.size(), node.false_neg.size()));
        tp += node.matched.size();
        fp += node.false_pos.size();
        fn += node.false_neg.size();
    }
    table.micro = score_counts(tp, fp, fn);
    return table;
}

// Per-node F1 difference between two score tables, paired with node degree.
struct DegreeImprovement {
    struct Record {
        std::size_t node = 0;
        std::size_t degree = 0;
        double f1_a = 0.0;
        double f1_b = 0.0;
        double delta_f1 = 0.0;
    };
    std::vector<Record> records;
    double fraction_non_negative = 0.0; // share of nodes with delta >= 0
};

inline DegreeImprovement degree_improvement(const ScoreTable& scores_a,
                                            const ScoreTable& scores_b,
                                            const Graph& graph) {
    if (scores_a.per_node.size() != scores_b.per_node.size() ||
        scores_a.per_node.size() != graph.n_nodes)
        fail("eval", "node sets differ between score tables and graph");
    DegreeImprovement improvement;
    const auto degrees = graph.degree_sequence();
    std::size_t non_negative = 0;
    for (std::size_t i = 0; i < graph.n_nodes; ++i) {
        DegreeImprovement::Record record;
        record.node = i;
        record.degree = degrees[i];
        record.f1_a = scores_a.per_node[i].f1;
        record.f1_b = scores_b.per_node[i].f1;
        record.delta_f1 = record.f1_a - record.f1_b;
        if (record.delta_f1 >= 0.0) ++non_negative;
        improvement.records.push_back(record);
    }
    improvement.fraction_non_negative =
        graph.n_nodes == 0
            ? 0.0
            : static_cast<double>(non_negative) / static_cast<double>(graph.n_nodes);
    return improvement;
}

} // namespace tsad
