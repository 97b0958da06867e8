#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <set>
#include <string>
#include <utility>
#include <vector>

#include "tsad/error.hpp"
#include "tsad/matrix.hpp"
#include "tsad/panel.hpp"
#include "tsad/rng.hpp"

namespace tsad {

// Node set with an edge list. Undirected edges are stored canonically
// (src < dst); no self-loops, no duplicates. Edge weights from input files
// are kept but the model's uniform neighbor averaging ignores them.
struct Graph {
    std::size_t n_nodes = 0;
    std::vector<std::pair<std::size_t, std::size_t>> edges;
    std::vector<double> weights; // empty or aligned with edges
    bool directed = false;

    void validate() const {
        std::set<std::pair<std::size_t, std::size_t>> seen;
        for (const auto& [src, dst] : edges) {
            if (src >= n_nodes || dst >= n_nodes)
                fail("graph", "edge index out of range");
            if (src == dst) fail("graph", "self-loop on node " + std::to_string(src));
            if (!directed && src > dst)
                fail("graph", "undirected edge not stored canonically");
            if (!seen.insert({src, dst}).second) fail("graph", "duplicate edge");
        }
        if (!weights.empty() && weights.size() != edges.size())
            fail("graph", "weights not aligned with edges");
    }

    void add_edge(std::size_t src, std::size_t dst) {
        if (!directed && src > dst) std::swap(src, dst);
        edges.emplace_back(src, dst);
    }

    std::vector<std::size_t> degree_sequence() const {
        std::vector<std::size_t> degree(n_nodes, 0);
        for (const auto& [src, dst] : edges) {
            ++degree[src];
            if (!directed) ++degree[dst];
        }
        return degree;
    }
};

// Per-node sorted neighbor lists; immutable once built and safe to share.
struct NeighborTable {
    std::vector<std::vector<std::size_t>> neighbors;

    std::size_t degree(std::size_t node) const { return neighbors[node].size(); }
    std::size_t n_nodes() const { return neighbors.size(); }
};

inline NeighborTable build_neighbor_table(const Graph& graph) {
    graph.validate();
    NeighborTable table;
    table.neighbors.resize(graph.n_nodes);
    for (const auto& [src, dst] : graph.edges) {
        table.neighbors[src].push_back(dst);
        if (!graph.directed) table.neighbors[dst].push_back(src);
    }
    for (auto& list : table.neighbors) std::sort(list.begin(), list.end());
    return table;
}

// Arithmetic mean of the neighbor rows of `states` [n_nodes x dim].
// Nodes without neighbors get the zero vector, which makes the augmented
// model degenerate to the plain per-node model on isolated nodes.
inline void neighbor_mean(const Matrix& states, const NeighborTable& table,
                          std::size_t node, double* out) {
    const std::size_t dim = states.cols();
    std::fill(out, out + dim, 0.0);
    const auto& list = table.neighbors[node];
    if (list.empty()) return;
    for (std::size_t j : list) {
        const double* row = states.row_ptr(j);
        for (std::size_t k = 0; k < dim; ++k) out[k] += row[k];
    }
    const double inv = 1.0 / static_cast<double>(list.size());
    for (std::size_t k = 0; k < dim; ++k) out[k] *= inv;
}

inline Vector neighbor_mean(const Matrix& states, const NeighborTable& table,
                            std::size_t node) {
    Vector out(states.cols(), 0.0);
    neighbor_mean(states, table, node, out.data());
    return out;
}

// Randomizes edges with double-edge swaps while keeping every node's degree
// exactly fixed (stronger than preserving the degree distribution). Proposals
// that would create a self-loop or duplicate edge are rejected but still
// consume an attempt; attempted swaps = ceil(swap_factor * |E|).
inline Graph degree_preserving_rewire(const Graph& graph, SeededRng& rng,
                                      double swap_factor = 10.0) {
    if (graph.directed)
        fail("unsupported-ablation", "rewiring requires an undirected graph");
    graph.validate();
    if (graph.edges.size() < 2)
        fail("unsupported-ablation", "rewiring requires at least 2 edges");

    std::vector<std::pair<std::size_t, std::size_t>> edges = graph.edges;
    std::set<std::pair<std::size_t, std::size_t>> edge_set(edges.begin(),
                                                           edges.end());
    auto canonical = [](std::size_t a, std::size_t b) {
        return a < b ? std::make_pair(a, b) : std::make_pair(b, a);
    };

    const auto attempts = static_cast<std::size_t>(
        std::ceil(swap_factor * static_cast<double>(edges.size())));
    for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
        const std::size_t e1 = rng.uniform_int(edges.size());
        const std::size_t e2 = rng.uniform_int(edges.size());
        auto [a, b] = edges[e1];
        auto [c, d] = edges[e2];
        if (rng.uniform_int(2) == 1) std::swap(c, d);
        // Proposed swap: (a,b),(c,d) -> (a,c),(b,d)
        if (a == c || a == d || b == c || b == d) continue;
        const auto new1 = canonical(a, c);
        const auto new2 = canonical(b, d);
        if (edge_set.count(new1) || edge_set.count(new2)) continue;
        edge_set.erase(edges[e1]);
        edge_set.erase(edges[e2]);
        edge_set.insert(new1);
        edge_set.insert(new2);
        edges[e1] = new1;
        edges[e2] = new2;
    }

    Graph out;
    out.n_nodes = graph.n_nodes;
    out.directed = false;
    out.edges.assign(edge_set.begin(), edge_set.end());
    return out;
}

// Pearson correlation of two node rows over [range.begin, range.end) using
// positions observed in both; fewer than 2 shared points or zero variance
// count as correlation 0.
inline double pearson_correlation(const Panel& panel, std::size_t a,
                                  std::size_t b, TimeRange range) {
    double sum_a = 0.0, sum_b = 0.0;
    std::size_t n = 0;
    for (std::size_t t = range.begin; t < range.end; ++t) {
        if (!panel.observed(a, t) || !panel.observed(b, t)) continue;
        sum_a += panel.values(a, t);
        sum_b += panel.values(b, t);
        ++n;
    }
    if (n < 2) return 0.0;
    const double mean_a = sum_a / static_cast<double>(n);
    const double mean_b = sum_b / static_cast<double>(n);
    double var_a = 0.0, var_b = 0.0, cov = 0.0;
    for (std::size_t t = range.begin; t < range.end; ++t) {
        if (!panel.observed(a, t) || !panel.observed(b, t)) continue;
        const double da = panel.values(a, t) - mean_a;
        const double db = panel.values(b, t) - mean_b;
        var_a += da * da;
        var_b += db * db;
        cov += da * db;
    }
    if (var_a <= 0.0 || var_b <= 0.0) return 0.0;
    return cov / std::sqrt(var_a * var_b);
}

// Undirected union-of-kNN graph on absolute Pearson correlation over the
// training range. Ties break toward the lower node index so the result is
// deterministic.
inline Graph correlation_knn_graph(const Panel& panel, TimeRange train_range,
                                   std::size_t k) {
    const std::size_t n = panel.n_nodes();
    if (n < 2) fail("graph", "correlation graph needs at least 2 nodes");
    if (k >= n) fail("graph", "k must be smaller than the node count");

    Matrix abs_corr(n, n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = i + 1; j < n; ++j) {
            const double c = std::fabs(pearson_correlation(panel, i, j, train_range));
            abs_corr(i, j) = c;
            abs_corr(j, i) = c;
        }

    std::set<std::pair<std::size_t, std::size_t>> edge_set;
    std::vector<std::size_t> order(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t m = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (j != i) order[m++] = j;
        std::stable_sort(order.begin(), order.begin() + m,
                         [&](std::size_t a, std::size_t b) {
                             return abs_corr(i, a) > abs_corr(i, b);
                         });
        for (std::size_t r = 0; r < k; ++r) {
            const std::size_t j = order[r];
            edge_set.insert(i < j ? std::make_pair(i, j) : std::make_pair(j, i));
        }
    }

    Graph graph;
    graph.n_nodes = n;
    graph.directed = false;
    graph.edges.assign(edge_set.begin(), edge_set.end());
    return graph;
}

} // namespace tsad
