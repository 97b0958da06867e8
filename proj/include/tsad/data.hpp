#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "tsad/error.hpp"
#include "tsad/format.hpp"
#include "tsad/graph.hpp"
#include "tsad/matrix.hpp"
#include "tsad/panel.hpp"
#include "tsad/rng.hpp"

namespace tsad {

namespace detail {

inline std::vector<std::string> split_csv_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cell;
    std::stringstream ss(line);
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.push_back("");
    return cells;
}

inline std::string strip(const std::string& s) {
    std::size_t b = 0, e = s.size();
    while (b < e && (s[b] == ' ' || s[b] == '\t' || s[b] == '\r')) ++b;
    while (e > b && (s[e - 1] == ' ' || s[e - 1] == '\t' || s[e - 1] == '\r')) --e;
    return s.substr(b, e - b);
}

inline double parse_double(const std::string& cell, const std::string& file,
                           std::size_t row) {
    try {
        std::size_t pos = 0;
        const double v = std::stod(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        fail("format", file + ": non-numeric value '" + cell + "' at row " +
                           std::to_string(row));
    }
}

inline std::int64_t parse_int(const std::string& cell, const std::string& file,
                              std::size_t row) {
    try {
        std::size_t pos = 0;
        const long long v = std::stoll(cell, &pos);
        if (pos != cell.size()) throw std::invalid_argument(cell);
        return v;
    } catch (const std::exception&) {
        fail("format", file + ": non-integer value '" + cell + "' at row " +
                           std::to_string(row));
    }
}

} // namespace detail

// One single-node Panel per CSV file in the directory. Files need a header
// with a timestamp-or-index column, `value`, and `is_anomaly` (alias
// `anomaly`); the series id is the file stem. Files are visited in sorted
// name order.
inline Panel load_series_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) fail("format", path + ": empty file");
    const auto header = detail::split_csv_line(line);
    std::size_t ts_col = header.size(), value_col = header.size(),
                label_col = header.size();
    for (std::size_t c = 0; c < header.size(); ++c) {
        const std::string name = detail::strip(header[c]);
        if (name == "value") value_col = c;
        else if (name == "is_anomaly" || name == "anomaly") label_col = c;
        else if (ts_col == header.size()) ts_col = c;
    }
    if (value_col == header.size())
        fail("format", path + ": missing required column 'value'");
    if (label_col == header.size())
        fail("format", path + ": missing required column 'is_anomaly'");
    if (ts_col == header.size())
        fail("format", path + ": missing timestamp or index column");

    std::vector<std::int64_t> timestamps;
    std::vector<double> values;
    std::vector<std::uint8_t> labels;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::strip(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() < header.size())
            fail("format", path + ": short row " + std::to_string(row));
        timestamps.push_back(detail::parse_int(detail::strip(cells[ts_col]), path, row));
        values.push_back(detail::parse_double(detail::strip(cells[value_col]), path, row));
        const std::int64_t lab =
            detail::parse_int(detail::strip(cells[label_col]), path, row);
        labels.push_back(lab != 0);
    }

    Panel panel;
    panel.node_ids = {std::filesystem::path(path).stem().string()};
    panel.timestamps = std::move(timestamps);
    const std::size_t T = panel.timestamps.size();
    panel.values = Matrix(1, T);
    panel.mask = Mask(1, T, 1);
    panel.labels = Mask(1, T);
    for (std::size_t t = 0; t < T; ++t) {
        panel.values(0, t) = values[t];
        (*panel.labels)(0, t) = labels[t];
    }
    panel.validate();
    return panel;
}

inline std::vector<Panel> load_yahoo_csv(const std::string& directory) {
    std::vector<std::string> files;
    for (const auto& entry : std::filesystem::directory_iterator(directory))
        if (entry.is_regular_file() && entry.path().extension() == ".csv")
            files.push_back(entry.path().string());
    if (files.empty()) fail("io", "no .csv files in " + directory);
    std::sort(files.begin(), files.end());
    std::vector<Panel> panels;
    panels.reserve(files.size());
    for (const auto& file : files) panels.push_back(load_series_csv(file));
    return panels;
}

// Wide CSV: first column timestamp, one column per node id. Empty cells, or
// cells equal to the missing sentinel when one is configured, are masked
// out.
inline Panel load_wide_csv(const std::string& path,
                           std::optional<double> missing_sentinel = {}) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) fail("format", path + ": empty file");
    auto header = detail::split_csv_line(line);
    if (header.size() < 2) fail("format", path + ": need timestamp plus node columns");

    Panel panel;
    for (std::size_t c = 1; c < header.size(); ++c)
        panel.node_ids.push_back(detail::strip(header[c]));

    std::vector<std::vector<double>> cols(panel.node_ids.size());
    std::vector<std::vector<std::uint8_t>> obs(panel.node_ids.size());
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::strip(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() != header.size())
            fail("format", path + ": row " + std::to_string(row) +
                               " has wrong cell count");
        panel.timestamps.push_back(detail::parse_int(detail::strip(cells[0]), path, row));
        for (std::size_t c = 1; c < cells.size(); ++c) {
            const std::string cell = detail::strip(cells[c]);
            if (cell.empty()) {
                cols[c - 1].push_back(0.0);
                obs[c - 1].push_back(0);
                continue;
            }
            const double v = detail::parse_double(cell, path, row);
            const bool missing = missing_sentinel && v == *missing_sentinel;
            cols[c - 1].push_back(missing ? 0.0 : v);
            obs[c - 1].push_back(missing ? 0 : 1);
        }
    }

    const std::size_t n = panel.node_ids.size();
    const std::size_t T = panel.timestamps.size();
    panel.values = Matrix(n, T);
    panel.mask = Mask(n, T);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t t = 0; t < T; ++t) {
            panel.values(i, t) = cols[i][t];
            panel.mask(i, t) = obs[i][t];
        }
    panel.validate();
    return panel;
}

// Edge-list CSV with header src,dst[,weight]; node ids resolved against the
// panel's node ids.
inline Graph load_edges_csv(const std::string& path,
                            const std::vector<std::string>& node_ids,
                            bool directed = false) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot read " + path);
    std::string line;
    if (!std::getline(in, line)) fail("format", path + ": empty file");
    const auto header = detail::split_csv_line(line);
    if (header.size() < 2 || detail::strip(header[0]) != "src" ||
        detail::strip(header[1]) != "dst")
        fail("format", path + ": expected header src,dst[,weight]");
    const bool has_weight = header.size() >= 3;

    auto index_of = [&](const std::string& id) -> std::size_t {
        const auto it = std::find(node_ids.begin(), node_ids.end(), id);
        if (it == node_ids.end())
            fail("format", path + ": edge references unknown node '" + id + "'");
        return static_cast<std::size_t>(it - node_ids.begin());
    };

    Graph graph;
    graph.n_nodes = node_ids.size();
    graph.directed = directed;
    std::size_t row = 1;
    while (std::getline(in, line)) {
        ++row;
        if (detail::strip(line).empty()) continue;
        const auto cells = detail::split_csv_line(line);
        if (cells.size() < 2)
            fail("format", path + ": short row " + std::to_string(row));
        const std::size_t src = index_of(detail::strip(cells[0]));
        const std::size_t dst = index_of(detail::strip(cells[1]));
        graph.add_edge(src, dst);
        if (has_weight && cells.size() >= 3 && !detail::strip(cells[2]).empty())
            graph.weights.push_back(
                detail::parse_double(detail::strip(cells[2]), path, row));
    }
    if (!graph.weights.empty() && graph.weights.size() != graph.edges.size())
        fail("format", path + ": weight column present on only some rows");
    graph.validate();
    return graph;
}

inline std::pair<Panel, Graph> load_wide_csv(const std::string& panel_path,
                                             const std::string& edge_path,
                                             std::optional<double> sentinel = {},
                                             bool directed = false) {
    Panel panel = load_wide_csv(panel_path, sentinel);
    Graph graph = load_edges_csv(edge_path, panel.node_ids, directed);
    return {std::move(panel), std::move(graph)};
}

// Writers emit the exact schemas the loaders read; values print with 9
// significant digits so write(load(x)) round-trips byte-exactly.
inline void write_wide_csv(const Panel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("io", "cannot write " + path);
    out << "timestamp";
    for (const auto& id : panel.node_ids) out << ',' << id;
    out << '\n';
    for (std::size_t t = 0; t < panel.n_steps(); ++t) {
        out << panel.timestamps[t];
        for (std::size_t i = 0; i < panel.n_nodes(); ++i) {
            out << ',';
            if (panel.observed(i, t)) out << format_g(panel.values(i, t));
        }
        out << '\n';
    }
}

inline void write_labels_csv(const Panel& panel, const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("io", "cannot write " + path);
    out << "timestamp";
    for (const auto& id : panel.node_ids) out << ',' << id;
    out << '\n';
    for (std::size_t t = 0; t < panel.n_steps(); ++t) {
        out << panel.timestamps[t];
        for (std::size_t i = 0; i < panel.n_nodes(); ++i)
            out << ',' << (panel.labeled(i, t) ? 1 : 0);
        out << '\n';
    }
}

inline void write_flags_csv(const Mask& flags,
                            const std::vector<std::string>& node_ids,
                            const std::vector<std::int64_t>& timestamps,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("io", "cannot write " + path);
    out << "timestamp";
    for (const auto& id : node_ids) out << ',' << id;
    out << '\n';
    for (std::size_t t = 0; t < flags.cols(); ++t) {
        out << timestamps[t];
        for (std::size_t i = 0; i < flags.rows(); ++i)
            out << ',' << (flags(i, t) ? 1 : 0);
        out << '\n';
    }
}

inline Mask load_flags_csv(const std::string& path,
                           std::vector<std::string>* node_ids_out = nullptr) {
    const Panel panel = load_wide_csv(path);
    Mask flags(panel.n_nodes(), panel.n_steps());
    for (std::size_t i = 0; i < panel.n_nodes(); ++i)
        for (std::size_t t = 0; t < panel.n_steps(); ++t)
            flags(i, t) = panel.values(i, t) != 0.0;
    if (node_ids_out) *node_ids_out = panel.node_ids;
    return flags;
}

inline void write_edges_csv(const Graph& graph,
                            const std::vector<std::string>& node_ids,
                            const std::string& path) {
    std::ofstream out(path);
    if (!out) fail("io", "cannot write " + path);
    out << (graph.weights.empty() ? "src,dst" : "src,dst,weight") << '\n';
    for (std::size_t e = 0; e < graph.edges.size(); ++e) {
        out << node_ids[graph.edges[e].first] << ','
            << node_ids[graph.edges[e].second];
        if (!graph.weights.empty()) out << ',' << format_g(graph.weights[e]);
        out << '\n';
    }
}

// Sparse, isolated drop events: a seeded subset of nodes gets
// `events_per_node` single-or-multi-step drops inside the given range,
// values transformed per the drop mode and the positions labeled anomalous.
struct InjectionSpec {
    std::size_t n_affected_nodes = 0;
    std::size_t events_per_node = 0;
    enum class DropMode { MultiplyFactor, SubtractStd } mode = DropMode::MultiplyFactor;
    double factor = 0.2;       // multiply mode, in (0,1]
    double std_multiple = 3.0; // subtract mode: value -= k * node std
    std::size_t duration = 1;
    std::size_t min_separation = 50;
    std::uint64_t seed = 0;

    void validate() const {
        if (mode == DropMode::MultiplyFactor && !(factor >= 0.0 && factor < 1.0))
            fail("inject", "multiply factor must lie in [0, 1)");
        if (duration == 0) fail("inject", "duration must be >= 1");
    }
};

// Population std of a node's observed values, used by the subtract mode.
inline double node_std(const Panel& panel, std::size_t node) {
    double sum = 0.0;
    std::size_t count = 0;
    for (std::size_t t = 0; t < panel.n_steps(); ++t)
        if (panel.observed(node, t)) {
            sum += panel.values(node, t);
            ++count;
        }
    if (count == 0) return 0.0;
    const double mean = sum / static_cast<double>(count);
    double sq = 0.0;
    for (std::size_t t = 0; t < panel.n_steps(); ++t)
        if (panel.observed(node, t)) {
            const double d = panel.values(node, t) - mean;
            sq += d * d;
        }
    return std::sqrt(sq / static_cast<double>(count));
}

// Node selection depends only on spec.seed, so repeated calls with
// different target ranges (e.g. validation then test) hit the same nodes.
// Event positions derive from the seed and the range.
inline Panel inject_anomalies(const Panel& panel, const InjectionSpec& spec,
                              TimeRange range) {
    spec.validate();
    if (range.end > panel.n_steps()) fail("inject", "range exceeds panel");
    Panel out = panel;
    if (!out.labels) out.labels = Mask(panel.n_nodes(), panel.n_steps());
    if (spec.n_affected_nodes == 0 || spec.events_per_node == 0) return out;
    if (spec.n_affected_nodes > panel.n_nodes())
        fail("inject", "more affected nodes than panel nodes");

    const std::size_t span = spec.duration + spec.min_separation;
    if (range.length() < spec.events_per_node * span)
        fail("inject", "infeasible spacing: range of " +
                           std::to_string(range.length()) +
                           " steps cannot hold " +
                           std::to_string(spec.events_per_node) +
                           " events with separation " +
                           std::to_string(spec.min_separation));

    // Seeded node subset without replacement.
    SeededRng node_rng(child_seed(spec.seed, 0xA11u));
    std::vector<std::size_t> nodes(panel.n_nodes());
    for (std::size_t i = 0; i < nodes.size(); ++i) nodes[i] = i;
    for (std::size_t i = 0; i < spec.n_affected_nodes; ++i) {
        const std::size_t j = i + node_rng.uniform_int(nodes.size() - i);
        std::swap(nodes[i], nodes[j]);
    }
    nodes.resize(spec.n_affected_nodes);
    std::sort(nodes.begin(), nodes.end());

    SeededRng pos_rng(child_seed(spec.seed ^ (0x9E37ULL * range.begin + range.end),
                                 0xB22u));
    for (std::size_t node : nodes) {
        const double sd = node_std(panel, node);
        std::vector<std::size_t> starts;
        std::size_t guard = 0;
        while (starts.size() < spec.events_per_node) {
            if (++guard > 10000 * spec.events_per_node)
                fail("inject", "infeasible spacing on node " + panel.node_ids[node]);
            const std::size_t start =
                range.begin + pos_rng.uniform_int(range.length() - spec.duration + 1);
            bool ok = true;
            for (std::size_t other : starts)
                if ((start > other ? start - other : other - start) < span) {
                    ok = false;
                    break;
                }
            if (ok) starts.push_back(start);
        }
        std::sort(starts.begin(), starts.end());
        for (std::size_t start : starts)
            for (std::size_t s = 0; s < spec.duration; ++s) {
                const std::size_t t = start + s;
                if (spec.mode == InjectionSpec::DropMode::MultiplyFactor)
                    out.values(node, t) = panel.values(node, t) * spec.factor;
                else
                    out.values(node, t) = panel.values(node, t) - spec.std_multiple * sd;
                out.mask(node, t) = 1;
                (*out.labels)(node, t) = 1;
            }
    }
    return out;
}

// Synthetic graph-correlated panel. The node signal is an AR(1) state
// (coefficient 0.9) advanced through one diffusion pass per step and driven
// by latent innovations mapped to nodes by index (node i draws innovation
// i mod F), so disturbances ripple one hop per step and the true topology
// carries real predictive information. Optional sinusoidal seasonality and
// per-node observation noise sit on top:
//   s_{i,t} = 0.9 * [(1-alpha) s_{i,t-1} + alpha * mean_{j in N(i)} s_{j,t-1}]
//             + eta_{i mod F, t}
//   y_{i,t} = s_{i,t} + A sin(2 pi t / period) + sigma * noise
struct SynthSpec {
    std::size_t n_nodes = 8;
    std::size_t n_steps = 500;
    std::size_t n_factors = 0;   // 0 = one factor per node
    double alpha = 0.5;          // diffusion strength in [0, 1)
    double sigma = 0.1;          // per-node observation noise
    std::size_t seasonal_period = 0;
    double seasonal_amplitude = 1.0;
    double avg_degree = 4.0;     // random graph density when none is given
    std::uint64_t seed = 0;

    void validate() const {
        if (n_nodes < 2 || n_steps < 10) fail("synth", "spec too small");
        if (!(alpha >= 0.0 && alpha < 1.0)) fail("synth", "alpha must be in [0,1)");
        if (sigma < 0.0) fail("synth", "sigma must be non-negative");
    }
};

// Random connected undirected graph: a random spanning tree plus extra
// edges up to roughly avg_degree.
inline Graph random_connected_graph(std::size_t n_nodes, double avg_degree,
                                    SeededRng& rng) {
    Graph graph;
    graph.n_nodes = n_nodes;
    std::set<std::pair<std::size_t, std::size_t>> edge_set;
    std::vector<std::size_t> order(n_nodes);
    for (std::size_t i = 0; i < n_nodes; ++i) order[i] = i;
    for (std::size_t i = 1; i < n_nodes; ++i) {
        const std::size_t j = i + rng.uniform_int(n_nodes - i);
        std::swap(order[i], order[j]);
    }
    for (std::size_t i = 1; i < n_nodes; ++i) {
        const std::size_t a = order[i];
        const std::size_t b = order[rng.uniform_int(i)];
        edge_set.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
    }
    const auto target = static_cast<std::size_t>(
        std::max(avg_degree * static_cast<double>(n_nodes) / 2.0,
                 static_cast<double>(n_nodes - 1)));
    std::size_t guard = 0;
    while (edge_set.size() < target && ++guard < 100 * target) {
        const std::size_t a = rng.uniform_int(n_nodes);
        const std::size_t b = rng.uniform_int(n_nodes);
        if (a == b) continue;
        edge_set.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
    }
    graph.edges.assign(edge_set.begin(), edge_set.end());
    return graph;
}

inline bool is_connected(const Graph& graph) {
    if (graph.n_nodes == 0) return true;
    const NeighborTable table = build_neighbor_table(graph);
    std::vector<bool> seen(graph.n_nodes, false);
    std::vector<std::size_t> stack{0};
    seen[0] = true;
    std::size_t visited = 1;
    while (!stack.empty()) {
        const std::size_t u = stack.back();
        stack.pop_back();
        for (std::size_t v : table.neighbors[u])
            if (!seen[v]) {
                seen[v] = true;
                ++visited;
                stack.push_back(v);
            }
    }
    return visited == graph.n_nodes;
}

inline std::pair<Panel, Graph> generate_synthetic(
    const SynthSpec& spec, std::optional<Graph> given_graph = {}) {
    spec.validate();
    SeededRng rng(child_seed(spec.seed, 0xC33u));

    Graph graph;
    if (given_graph) {
        graph = *given_graph;
        graph.validate();
        if (graph.n_nodes != spec.n_nodes)
            fail("synth", "given graph node count mismatch");
    } else {
        for (std::size_t attempt = 0;; ++attempt) {
            graph = random_connected_graph(spec.n_nodes, spec.avg_degree, rng);
            if (is_connected(graph)) break;
            if (attempt >= 10) fail("synth", "could not generate a connected graph");
        }
    }
    const NeighborTable table = build_neighbor_table(graph);

    const std::size_t F = spec.n_factors == 0 ? spec.n_nodes : spec.n_factors;
    Vector z(F, 0.0);
    Panel panel;
    panel.node_ids.reserve(spec.n_nodes);
    for (std::size_t i = 0; i < spec.n_nodes; ++i)
        panel.node_ids.push_back("n" + std::to_string(i));
    panel.timestamps.resize(spec.n_steps);
    for (std::size_t t = 0; t < spec.n_steps; ++t)
        panel.timestamps[t] = static_cast<std::int64_t>(t);
    panel.values = Matrix(spec.n_nodes, spec.n_steps);
    panel.mask = Mask(spec.n_nodes, spec.n_steps, 1);
    panel.labels = Mask(spec.n_nodes, spec.n_steps);

    Matrix signal_prev(spec.n_nodes, 1);
    Matrix signal(spec.n_nodes, 1);
    for (std::size_t t = 0; t < spec.n_steps; ++t) {
        for (std::size_t f = 0; f < F; ++f) z[f] = rng.normal();
        const double season =
            spec.seasonal_period == 0
                ? 0.0
                : spec.seasonal_amplitude *
                      std::sin(6.283185307179586 * static_cast<double>(t) /
                               static_cast<double>(spec.seasonal_period));
        for (std::size_t i = 0; i < spec.n_nodes; ++i) {
            double diffused = signal_prev(i, 0);
            if (spec.alpha > 0.0) {
                const Vector nb = neighbor_mean(signal_prev, table, i);
                diffused = (1.0 - spec.alpha) * signal_prev(i, 0) +
                           spec.alpha * nb[0];
            }
            signal(i, 0) = 0.9 * diffused + z[i % F];
            panel.values(i, t) = signal(i, 0) + season + spec.sigma * rng.normal();
        }
        std::swap(signal, signal_prev);
    }
    panel.validate();
    return {std::move(panel), std::move(graph)};
}

} // namespace tsad
