// Acceptance suite: end-to-end checks of the detection toolkit, one
// pass/fail line per criterion. Exit code is the number of failures.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "tsad/experiment.hpp"
#include "tsad/tsad.hpp"

using namespace tsad;
namespace fs = std::filesystem;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

double elapsed_s(const std::chrono::steady_clock::time_point& start) {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() -
                                         start)
        .count();
}

std::string fmt(double v, int digits = 4) { return format_g(v, digits); }

// ---- shared fixtures -----------------------------------------------------

// The scaled-down comparison experiment: 20 nodes, T=3000, alpha=0.6,
// sigma=0.5, two 2-step drop events on 30% of the nodes.
ExperimentConfig analogue_config(std::uint64_t seed) {
    ExperimentConfig cfg;
    cfg.seed = seed;
    cfg.source = ExperimentConfig::Source::Synthetic;
    cfg.synth.n_nodes = 20;
    cfg.synth.n_steps = 3000;
    cfg.synth.alpha = 0.6;
    cfg.synth.sigma = 0.5;
    cfg.synth.avg_degree = 2.0;
    cfg.models = {"graph-lstm", "lstm-only", "arima", "decomp"};
    cfg.train.hidden_size = 16;
    cfg.train.bptt_len = 32;
    cfg.train.learning_rate = 0.01;
    cfg.train.epochs = 40;
    cfg.train.patience = 6;
    cfg.tolerance = 0;
    InjectionSpec inj;
    inj.n_affected_nodes = 6; // 30% of 20
    inj.events_per_node = 2;
    inj.mode = InjectionSpec::DropMode::SubtractStd;
    inj.std_multiple = 4.5;
    inj.duration = 2;
    inj.min_separation = 50;
    cfg.inject = inj;
    return cfg;
}

constexpr std::uint64_t kAnalogueSeedBase = 20260808;

struct AnalogueRuns {
    std::vector<double> graph_f1;
    std::vector<double> lstm_f1;
    std::vector<double> arima_f1;
    std::vector<double> decomp_f1;
};

AnalogueRuns g_runs; // filled by criterion 3, reused by criterion 10

double mean(const std::vector<double>& xs) {
    double sum = 0.0;
    for (double x : xs) sum += x;
    return sum / static_cast<double>(xs.size());
}

// ---- criteria ------------------------------------------------------------

// 1. Analytic BPTT gradients vs central finite differences.
Outcome criterion_gradients() {
    SeededRng meta(1234);
    double worst = 0.0;
    for (int rep = 0; rep < 10; ++rep) {
        const std::size_t n = 1 + meta.uniform_int(3);
        const std::size_t hidden = 1 + meta.uniform_int(4);
        const std::size_t len = 2 + meta.uniform_int(5);
        const bool augmented = rep % 3 != 2;
        Graph graph;
        graph.n_nodes = n;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                if (meta.uniform() < 0.7) graph.add_edge(a, b);
        TrainConfig tc;
        tc.hidden_size = hidden;
        tc.seed = meta.next_u64();
        tc.per_node_params = rep == 4;
        GraphLstmModel model =
            make_graph_lstm(n, build_neighbor_table(graph), tc, augmented);

        Matrix inputs(n, len), targets(n, len);
        Mask valid(n, len);
        for (std::size_t k = 0; k < inputs.size(); ++k) {
            inputs.data()[k] = meta.normal();
            targets.data()[k] = meta.normal();
            valid.data()[k] = meta.uniform() < 0.9;
        }
        auto loss_of = [&]() {
            WindowCache cache;
            graph_forward(model, inputs, ModelState::zeros(n, hidden), cache);
            double sq = 0.0;
            std::size_t m = 0;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t s = 0; s < len; ++s)
                    if (valid(i, s)) {
                        const double e = cache.yhat(i, s) - targets(i, s);
                        sq += e * e;
                        ++m;
                    }
            return m == 0 ? 0.0 : sq / static_cast<double>(m);
        };

        WindowCache cache;
        graph_forward(model, inputs, ModelState::zeros(n, hidden), cache);
        std::vector<ParamGrads> grads;
        for (const auto& p : model.params) grads.push_back(ParamGrads::zeros_like(p));
        backward_window(model, cache, targets, valid, grads);

        std::vector<double*> ptrs;
        for_each_param_span(model, [&](double* p, std::size_t count) {
            for (std::size_t k = 0; k < count; ++k) ptrs.push_back(p + k);
        });
        std::vector<double> analytic;
        for_each_grad_span(grads, [&](double* gptr, std::size_t count) {
            for (std::size_t k = 0; k < count; ++k) analytic.push_back(gptr[k]);
        });

        const double h = 1e-5;
        for (std::size_t k = 0; k < ptrs.size(); ++k) {
            const double saved = *ptrs[k];
            *ptrs[k] = saved + h;
            const double lp = loss_of();
            *ptrs[k] = saved - h;
            const double lm = loss_of();
            *ptrs[k] = saved;
            const double numeric = (lp - lm) / (2.0 * h);
            const double rel =
                std::fabs(analytic[k] - numeric) /
                std::max(std::fabs(analytic[k]) + std::fabs(numeric), 1e-8);
            worst = std::max(worst, rel);
        }
    }
    return {worst < 1e-4, "max rel err " + fmt(worst, 3) + " over 10 configs"};
}

// 2. Augmentation disabled == independent per-node runs, bit-exact.
Outcome criterion_degeneracy() {
    SeededRng rng(555);
    for (int rep = 0; rep < 5; ++rep) {
        const std::size_t n = 2 + rng.uniform_int(4);
        const std::size_t T = 50 + rng.uniform_int(50);
        std::vector<std::vector<double>> rows(n, std::vector<double>(T));
        for (auto& row : rows)
            for (auto& v : row) v = rng.normal();
        Panel panel;
        for (std::size_t i = 0; i < n; ++i)
            panel.node_ids.push_back("n" + std::to_string(i));
        for (std::size_t t = 0; t < T; ++t)
            panel.timestamps.push_back(static_cast<std::int64_t>(t));
        panel.values = Matrix(n, T);
        panel.mask = Mask(n, T, 1);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t t = 0; t < T; ++t) panel.values(i, t) = rows[i][t];

        Graph graph;
        graph.n_nodes = n;
        for (std::size_t a = 0; a < n; ++a)
            for (std::size_t b = a + 1; b < n; ++b)
                if (rng.uniform() < 0.5) graph.add_edge(a, b);
        TrainConfig tc;
        tc.hidden_size = 4;
        tc.seed = rng.next_u64();
        GraphLstmModel multi =
            make_graph_lstm(n, build_neighbor_table(graph), tc, false);
        const ForecastSet joint = forecast_one_step(multi, panel, {T / 2, T});

        for (std::size_t i = 0; i < n; ++i) {
            Graph lone;
            lone.n_nodes = 1;
            GraphLstmModel solo =
                make_graph_lstm(1, build_neighbor_table(lone), tc, false);
            solo.params[0] = multi.params[0];
            Panel one;
            one.node_ids = {panel.node_ids[i]};
            one.timestamps = panel.timestamps;
            one.values = Matrix(1, T);
            one.mask = Mask(1, T, 1);
            for (std::size_t t = 0; t < T; ++t) one.values(0, t) = rows[i][t];
            const ForecastSet alone = forecast_one_step(solo, one, {T / 2, T});
            for (std::size_t t = 0; t < joint.predictions.cols(); ++t)
                if (joint.predictions(i, t) != alone.predictions(0, t))
                    return {false, "forecast mismatch on panel " +
                                       std::to_string(rep) + " node " +
                                       std::to_string(i)};
        }
    }
    return {true, "bit-identical on 5 random panels"};
}

// 3. Graph benefit analogue: mean micro-F1 gap >= 0.03 over 5 seeds.
Outcome criterion_graph_benefit() {
    for (std::uint64_t s = 0; s < 5; ++s) {
        const ExperimentConfig cfg = analogue_config(kAnalogueSeedBase + s);
        const Dataset ds = prepare_dataset(cfg);
        g_runs.graph_f1.push_back(run_model("graph-lstm", ds, cfg).scores.micro.f1);
        g_runs.lstm_f1.push_back(run_model("lstm-only", ds, cfg).scores.micro.f1);
        g_runs.arima_f1.push_back(run_model("arima", ds, cfg).scores.micro.f1);
        g_runs.decomp_f1.push_back(run_model("decomp", ds, cfg).scores.micro.f1);
    }
    const double gap = mean(g_runs.graph_f1) - mean(g_runs.lstm_f1);
    return {gap >= 0.03, "mean F1 graph " + fmt(mean(g_runs.graph_f1)) +
                             " vs lstm " + fmt(mean(g_runs.lstm_f1)) + ", gap " +
                             fmt(gap) + " (need >= 0.03)"};
}

// 4. Random-graph ablation: mean random F1 <= real - 0.02 and within
//    +-0.05 of the lstm-only baseline.
Outcome criterion_random_graph() {
    ExperimentConfig cfg = analogue_config(kAnalogueSeedBase);
    cfg.n_random_seeds = 5;
    const auto rows = run_ablation(cfg);
    const double real_f1 = rows[0].micro.f1;
    std::vector<double> random_f1;
    for (std::size_t k = 1; k < rows.size(); ++k)
        random_f1.push_back(rows[k].micro.f1);
    const double rnd = mean(random_f1);
    const double plain = g_runs.lstm_f1.empty() ? 0.0 : g_runs.lstm_f1[0];
    const bool drop_ok = rnd <= real_f1 - 0.02;
    const bool par_ok = std::fabs(rnd - plain) <= 0.05;
    return {drop_ok && par_ok,
            "real " + fmt(real_f1) + ", mean random " + fmt(rnd) + ", lstm " +
                fmt(plain) + " (need random <= real-0.02, |random-lstm| <= 0.05)"};
}

// 5. Degree sequence preserved exactly under rewiring.
Outcome criterion_rewiring() {
    SeededRng outer(4242);
    for (int rep = 0; rep < 100; ++rep) {
        const std::size_t n = 4 + outer.uniform_int(27);
        Graph g;
        g.n_nodes = n;
        std::set<std::pair<std::size_t, std::size_t>> edges;
        const std::size_t target = 2 + outer.uniform_int(2 * n);
        std::size_t guard = 0;
        while (edges.size() < target && ++guard < 50 * target) {
            const std::size_t a = outer.uniform_int(n);
            const std::size_t b = outer.uniform_int(n);
            if (a != b)
                edges.insert(a < b ? std::make_pair(a, b) : std::make_pair(b, a));
        }
        if (edges.size() < 2) continue;
        g.edges.assign(edges.begin(), edges.end());
        SeededRng rng(outer.next_u64());
        const Graph out = degree_preserving_rewire(g, rng);
        try {
            out.validate();
        } catch (const Error& e) {
            return {false, std::string("invalid rewired graph: ") + e.what()};
        }
        if (out.degree_sequence() != g.degree_sequence())
            return {false, "degree sequence changed at rep " + std::to_string(rep)};
    }
    return {true, "degree sequences exact over 100 seeds, no loops/duplicates"};
}

// 6. Greedy tolerance matcher equals brute-force maximum matching.
Outcome criterion_matcher() {
    struct Brute {
        std::vector<std::vector<std::size_t>> adj;
        std::vector<int> owner;
        bool augment(std::size_t t, std::vector<bool>& seen) {
            for (std::size_t p : adj[t]) {
                if (seen[p]) continue;
                seen[p] = true;
                if (owner[p] < 0 ||
                    augment(static_cast<std::size_t>(owner[p]), seen)) {
                    owner[p] = static_cast<int>(t);
                    return true;
                }
            }
            return false;
        }
    };
    SeededRng rng(777);
    for (int rep = 0; rep < 1000; ++rep) {
        const std::size_t w = rng.uniform_int(4);
        std::set<std::size_t> ps, ts;
        const std::size_t np = rng.uniform_int(21);
        const std::size_t nt = rng.uniform_int(21);
        for (std::size_t k = 0; k < np; ++k) ps.insert(rng.uniform_int(60));
        for (std::size_t k = 0; k < nt; ++k) ts.insert(rng.uniform_int(60));
        const std::vector<std::size_t> preds(ps.begin(), ps.end());
        const std::vector<std::size_t> truths(ts.begin(), ts.end());

        Brute brute;
        brute.adj.resize(truths.size());
        brute.owner.assign(preds.size(), -1);
        for (std::size_t t = 0; t < truths.size(); ++t)
            for (std::size_t p = 0; p < preds.size(); ++p) {
                const std::size_t d = truths[t] > preds[p] ? truths[t] - preds[p]
                                                           : preds[p] - truths[t];
                if (d <= w) brute.adj[t].push_back(p);
            }
        std::size_t best = 0;
        for (std::size_t t = 0; t < truths.size(); ++t) {
            std::vector<bool> seen(preds.size(), false);
            if (brute.augment(t, seen)) ++best;
        }
        const NodeMatch m = match_events(preds, truths, w);
        if (m.matched.size() != best)
            return {false, "greedy " + std::to_string(m.matched.size()) +
                               " vs brute " + std::to_string(best) + " at rep " +
                               std::to_string(rep)};
    }
    return {true, "greedy TP equals maximum matching on 1000 instances"};
}

// 7. Swept threshold attains the maximum over exhaustive candidates.
Outcome criterion_sweep() {
    SeededRng rng(888);
    for (int rep = 0; rep < 200; ++rep) {
        const std::size_t len = 4 + rng.uniform_int(12);
        ResidualSet r;
        r.start = 0;
        r.errors = Matrix(1, len);
        r.valid = Mask(1, len, 1);
        std::vector<double> errors(len);
        for (std::size_t t = 0; t < len; ++t) {
            errors[t] = rng.uniform();
            r.errors(0, t) = errors[t];
        }
        Mask labels(1, len);
        std::vector<std::size_t> truths;
        for (std::size_t t = 0; t < len; ++t)
            if (rng.uniform() < 0.3) {
                labels(0, t) = 1;
                truths.push_back(t);
            }
        const std::size_t w = rng.uniform_int(3);
        const ThresholdMap map = sweep_thresholds(
            r, labels, {.tolerance = w, .pooled_fallback = false});

        auto f1_at = [&](double tau) {
            std::vector<std::size_t> preds;
            for (std::size_t t = 0; t < len; ++t)
                if (errors[t] > tau) preds.push_back(t);
            const NodeMatch m = match_events(preds, truths, w);
            return score_counts(m.matched.size(), m.false_pos.size(),
                                m.false_neg.size())
                .f1;
        };
        double best = 0.0;
        for (double tau : detail::threshold_candidates(errors))
            best = std::max(best, f1_at(tau));
        for (double tau = 0.005; tau <= 1.05; tau += 0.005)
            best = std::max(best, f1_at(tau));
        if (map.val_f1[0] + 1e-12 < best)
            return {false, "sweep F1 " + fmt(map.val_f1[0]) + " below best " +
                               fmt(best) + " at rep " + std::to_string(rep)};
    }
    return {true, "swept threshold optimal on 200 instances"};
}

// 8. Hannan-Rissanen AR(1) recovery and AIC selection. The recovered
// coefficient is read from the AR(1)-order fit; richer best-AIC orders
// (e.g. ARMA(2,1)) carry compensating terms whose lag-1 slot is not the
// identified AR(1) coefficient.
Outcome criterion_arima() {
    int phi_hits = 0;
    int aic_wins = 0;
    int autoregressive = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        SeededRng rng(3000 + seed);
        Vector y(2000);
        double v = 0.0;
        for (auto& x : y) {
            v = 0.6 * v + rng.normal();
            x = v;
        }
        bool singular = false;
        const ArimaFit ar1 =
            arima_fit_order(y, {1, 0, 0, 0, 0, 0, 0}, singular);
        if (!singular && std::fabs(ar1.ar_coef[0] - 0.6) <= 0.05) ++phi_hits;
        const ArimaFit best = arima_fit(y, default_arima_grid());
        if (best.order.p >= 1) ++autoregressive;
        const ArimaFit white = arima_fit_order(y, ArimaOrder{}, singular);
        if (best.aic < white.aic) ++aic_wins;
    }
    return {phi_hits >= 18 && aic_wins >= 18 && autoregressive >= 18,
            "phi within 0.05 in " + std::to_string(phi_hits) +
                "/20, AIC beats white noise in " + std::to_string(aic_wins) +
                "/20, selected p>=1 in " + std::to_string(autoregressive) +
                "/20 (need >= 18 each)"};
}

// 9. Decomposition forecaster on sine + trend + 1% noise.
Outcome criterion_decomp() {
    SeededRng rng(99);
    const double amplitude = 2.0;
    Vector y(500);
    for (std::size_t t = 0; t < y.size(); ++t)
        y[t] = 0.01 * static_cast<double>(t) +
               amplitude *
                   std::sin(6.283185307179586 * static_cast<double>(t) / 50.0) +
               rng.normal(0.0, 0.01 * amplitude);
    const DecompFit fit = decomp_fit(y, {0, 400}, {50}, 3);
    const ForecastSet f = decomp_forecast(fit, {400, 500});
    double mae = 0.0;
    for (std::size_t t = 400; t < 500; ++t)
        mae += std::fabs(f.predictions(0, t - 400) - y[t]);
    mae /= 100.0;
    return {mae < 0.05 * amplitude,
            "one-step test MAE " + fmt(mae) + " vs bound " + fmt(0.05 * amplitude)};
}

// 10. Both classical baselines below graph-lstm in >= 4/5 seeds.
Outcome criterion_ordering() {
    if (g_runs.graph_f1.size() != 5)
        return {false, "criterion 3 runs unavailable"};
    int wins = 0;
    for (std::size_t s = 0; s < 5; ++s)
        if (g_runs.arima_f1[s] < g_runs.graph_f1[s] &&
            g_runs.decomp_f1[s] < g_runs.graph_f1[s])
            ++wins;
    return {wins >= 4, "classical below graph-lstm in " + std::to_string(wins) +
                           "/5 seeds (need >= 4)"};
}

// 11. Two runs of the demo config produce byte-identical report trees.
Outcome criterion_determinism() {
    const fs::path out = fs::temp_directory_path() / "tsad_accept_demo";
    auto run_once = [&]() {
        fs::remove_all(out);
        ExperimentConfig cfg = load_config(TSAD_DEMO_CONFIG);
        cfg.output_dir = out.string();
        run_experiment(cfg);
        std::map<std::string, std::string> tree;
        for (const auto& entry : fs::recursive_directory_iterator(out)) {
            if (!entry.is_regular_file()) continue;
            std::ifstream in(entry.path(), std::ios::binary);
            std::stringstream ss;
            ss << in.rdbuf();
            tree[fs::relative(entry.path(), out).string()] = ss.str();
        }
        return tree;
    };
    const auto first = run_once();
    const auto second = run_once();
    fs::remove_all(out);
    if (first.size() != second.size())
        return {false, "file counts differ: " + std::to_string(first.size()) +
                           " vs " + std::to_string(second.size())};
    for (const auto& [name, bytes] : first) {
        const auto it = second.find(name);
        if (it == second.end()) return {false, name + " missing on rerun"};
        if (it->second != bytes) return {false, name + " differs between runs"};
    }
    return {true, std::to_string(first.size()) + " files byte-identical"};
}

} // namespace

int main() {
    struct Criterion {
        const char* name;
        double time_limit_s;
        std::function<Outcome()> run;
    };
    const std::vector<Criterion> criteria{
        {"gradient correctness", 10.0, criterion_gradients},
        {"ablation-degeneracy equivalence", 30.0, criterion_degeneracy},
        {"graph benefit analogue", 300.0, criterion_graph_benefit},
        {"random-graph ablation analogue", 600.0, criterion_random_graph},
        {"rewiring invariant", 5.0, criterion_rewiring},
        {"metric oracle", 10.0, criterion_matcher},
        {"threshold-sweep optimality", 10.0, criterion_sweep},
        {"arima recovery", 30.0, criterion_arima},
        {"decomposition forecaster", 5.0, criterion_decomp},
        {"classical-vs-neural ordering", 60.0, criterion_ordering},
        {"end-to-end determinism", 120.0, criterion_determinism},
    };

    int failures = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        const auto start = std::chrono::steady_clock::now();
        Outcome outcome;
        try {
            outcome = criteria[k].run();
        } catch (const std::exception& e) {
            outcome = {false, std::string("exception: ") + e.what()};
        }
        const double secs = elapsed_s(start);
        const bool in_time = secs < criteria[k].time_limit_s;
        const bool pass = outcome.pass && in_time;
        std::printf("[%s] %2zu. %s: %s (%.1fs/%.0fs)\n", pass ? "PASS" : "FAIL",
                    k + 1, criteria[k].name, outcome.detail.c_str(), secs,
                    criteria[k].time_limit_s);
        std::fflush(stdout);
        if (!pass) ++failures;
    }
    if (failures == 0)
        std::printf("acceptance: all %zu criteria passed\n", criteria.size());
    else
        std::printf("acceptance: %d criteria FAILED\n", failures);
    return failures;
}
