#pragma once

#include <algorithm>
#include <array>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsad/arima.hpp"
#include "tsad/data.hpp"
#include "tsad/decomp.hpp"
#include "tsad/detection.hpp"
#include "tsad/error.hpp"
#include "tsad/eval.hpp"
#include "tsad/format.hpp"
#include "tsad/graph.hpp"
#include "tsad/lstm.hpp"
#include "tsad/model_io.hpp"
#include "tsad/panel.hpp"
#include "tsad/plot.hpp"
#include "tsad/version.hpp"

namespace tsad {

// Seed streams derived from the master seed, one per role, so every stage
// is reproducible and the ablation can retrain from the same model
// initialization while only the graph changes.
inline constexpr std::uint64_t kSeedStreamSynth = 1;
inline constexpr std::uint64_t kSeedStreamInject = 2;
inline constexpr std::uint64_t kSeedStreamTrain = 3;
inline constexpr std::uint64_t kSeedStreamRewire = 100;

inline const std::vector<std::string>& known_models() {
    static const std::vector<std::string> names{"graph-lstm", "lstm-only",
                                                "arima", "decomp"};
    return names;
}

struct ExperimentConfig {
    std::uint64_t seed = 42;

    enum class Source { Synthetic, Yahoo, Wide };
    Source source = Source::Synthetic;
    std::string yahoo_dir;
    std::size_t knn_k = 2;
    std::string panel_csv;
    std::string edge_csv;
    std::optional<double> missing_sentinel;
    bool directed = false;
    SynthSpec synth;

    double train_frac = 0.6;
    double val_frac = 0.2;

    std::vector<std::string> models;
    std::size_t arima_seasonal_period = 0;
    std::vector<std::size_t> decomp_periods;
    std::size_t decomp_fourier_order = 3;

    TrainConfig train;

    std::size_t tolerance = 0;
    bool pooled_fallback = true;
    std::string detect_rule = "sweep";

    std::optional<InjectionSpec> inject;

    bool ablation_enabled = false;
    double swap_factor = 10.0;
    std::size_t n_random_seeds = 5;

    std::string output_dir = "report";

    bool has_model(const std::string& name) const {
        return std::find(models.begin(), models.end(), name) != models.end();
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j,
                       const std::set<std::string>& allowed,
                       const std::string& where) {
    if (!j.is_object()) fail("config", where + " must be an object");
    for (const auto& [key, value] : j.items())
        if (!allowed.count(key))
            fail("config", "unknown key '" + key + "' in " + where);
}

inline std::string resolve_path(const std::filesystem::path& base,
                                const std::string& path) {
    std::filesystem::path p(path);
    if (p.is_absolute()) return p.string();
    return (base / p).lexically_normal().string();
}

} // namespace detail

// Parses and validates a config document. Unknown keys are rejected;
// relative paths resolve against `base_dir` (the config file's directory).
inline ExperimentConfig parse_config(const nlohmann::json& j,
                                     const std::filesystem::path& base_dir) {
    detail::check_keys(j,
                       {"seed", "data", "split", "models", "train", "detect",
                        "inject", "ablation", "output"},
                       "config");
    ExperimentConfig cfg;
    cfg.seed = j.value("seed", std::uint64_t{42});

    if (!j.contains("data")) fail("config", "missing required section 'data'");
    const auto& data = j.at("data");
    detail::check_keys(data,
                       {"source", "yahoo_dir", "knn_k", "panel_csv", "edge_csv",
                        "missing_sentinel", "directed", "synthetic"},
                       "data");
    const std::string source = data.value("source", "");
    if (source == "synthetic") {
        cfg.source = ExperimentConfig::Source::Synthetic;
        if (data.contains("synthetic")) {
            const auto& s = data.at("synthetic");
            detail::check_keys(s,
                               {"n_nodes", "n_steps", "n_factors", "alpha",
                                "sigma", "seasonal_period", "seasonal_amplitude",
                                "avg_degree"},
                               "data.synthetic");
            cfg.synth.n_nodes = s.value("n_nodes", cfg.synth.n_nodes);
            cfg.synth.n_steps = s.value("n_steps", cfg.synth.n_steps);
            cfg.synth.n_factors = s.value("n_factors", cfg.synth.n_factors);
            cfg.synth.alpha = s.value("alpha", cfg.synth.alpha);
            cfg.synth.sigma = s.value("sigma", cfg.synth.sigma);
            cfg.synth.seasonal_period =
                s.value("seasonal_period", cfg.synth.seasonal_period);
            cfg.synth.seasonal_amplitude =
                s.value("seasonal_amplitude", cfg.synth.seasonal_amplitude);
            cfg.synth.avg_degree = s.value("avg_degree", cfg.synth.avg_degree);
        }
        cfg.synth.validate();
    } else if (source == "yahoo") {
        cfg.source = ExperimentConfig::Source::Yahoo;
        if (!data.contains("yahoo_dir"))
            fail("config", "data.yahoo_dir required for yahoo source");
        cfg.yahoo_dir = detail::resolve_path(base_dir, data.at("yahoo_dir"));
        cfg.knn_k = data.value("knn_k", cfg.knn_k);
    } else if (source == "wide") {
        cfg.source = ExperimentConfig::Source::Wide;
        if (!data.contains("panel_csv") || !data.contains("edge_csv"))
            fail("config", "data.panel_csv and data.edge_csv required for wide source");
        cfg.panel_csv = detail::resolve_path(base_dir, data.at("panel_csv"));
        cfg.edge_csv = detail::resolve_path(base_dir, data.at("edge_csv"));
        if (data.contains("missing_sentinel") &&
            !data.at("missing_sentinel").is_null())
            cfg.missing_sentinel = data.at("missing_sentinel").get<double>();
        cfg.directed = data.value("directed", false);
    } else {
        fail("config", "data.source must be synthetic, yahoo, or wide");
    }

    if (j.contains("split")) {
        const auto& split = j.at("split");
        detail::check_keys(split, {"train_frac", "val_frac"}, "split");
        cfg.train_frac = split.value("train_frac", cfg.train_frac);
        cfg.val_frac = split.value("val_frac", cfg.val_frac);
    }

    if (!j.contains("models")) fail("config", "missing required section 'models'");
    const auto& models = j.at("models");
    detail::check_keys(models, {"run", "arima", "decomp"}, "models");
    if (!models.contains("run") || !models.at("run").is_array() ||
        models.at("run").empty())
        fail("config", "models.run must be a non-empty list");
    for (const auto& name : models.at("run")) {
        const std::string m = name.get<std::string>();
        const auto& known = known_models();
        if (std::find(known.begin(), known.end(), m) == known.end())
            fail("config", "unknown model '" + m + "'");
        if (cfg.has_model(m)) fail("config", "model '" + m + "' listed twice");
        cfg.models.push_back(m);
    }
    if (models.contains("arima")) {
        detail::check_keys(models.at("arima"), {"seasonal_period"}, "models.arima");
        cfg.arima_seasonal_period =
            models.at("arima").value("seasonal_period", std::size_t{0});
    }
    if (models.contains("decomp")) {
        detail::check_keys(models.at("decomp"), {"periods", "fourier_order"},
                           "models.decomp");
        if (models.at("decomp").contains("periods"))
            cfg.decomp_periods =
                models.at("decomp").at("periods").get<std::vector<std::size_t>>();
        cfg.decomp_fourier_order =
            models.at("decomp").value("fourier_order", cfg.decomp_fourier_order);
    }
    if (cfg.decomp_periods.empty() && cfg.arima_seasonal_period >= 2)
        cfg.decomp_periods = {cfg.arima_seasonal_period};

    if (j.contains("train")) {
        const auto& train = j.at("train");
        detail::check_keys(train,
                           {"hidden_size", "bptt_len", "learning_rate", "epochs",
                            "grad_clip", "patience", "per_node_params"},
                           "train");
        cfg.train.hidden_size = train.value("hidden_size", cfg.train.hidden_size);
        cfg.train.bptt_len = train.value("bptt_len", cfg.train.bptt_len);
        cfg.train.learning_rate =
            train.value("learning_rate", cfg.train.learning_rate);
        cfg.train.epochs = train.value("epochs", cfg.train.epochs);
        cfg.train.grad_clip = train.value("grad_clip", cfg.train.grad_clip);
        cfg.train.patience = train.value("patience", cfg.train.patience);
        cfg.train.per_node_params =
            train.value("per_node_params", cfg.train.per_node_params);
        cfg.train.validate();
    }

    if (j.contains("detect")) {
        const auto& detect = j.at("detect");
        detail::check_keys(detect, {"tolerance", "rule", "pooled_fallback"},
                           "detect");
        cfg.tolerance = detect.value("tolerance", cfg.tolerance);
        cfg.detect_rule = detect.value("rule", cfg.detect_rule);
        cfg.pooled_fallback = detect.value("pooled_fallback", cfg.pooled_fallback);
        if (cfg.detect_rule != "sweep" && cfg.detect_rule != "interval")
            fail("config", "detect.rule must be 'sweep' or 'interval'");
        if (cfg.detect_rule == "interval" &&
            (cfg.has_model("graph-lstm") || cfg.has_model("lstm-only")))
            fail("config", "interval rule needs forecast intervals; "
                           "neural models provide none");
    }

    if (j.contains("inject") && !j.at("inject").is_null()) {
        const auto& inject = j.at("inject");
        detail::check_keys(inject,
                           {"n_affected_nodes", "events_per_node", "mode",
                            "factor", "std_multiple", "duration",
                            "min_separation"},
                           "inject");
        InjectionSpec spec;
        spec.n_affected_nodes = inject.value("n_affected_nodes", std::size_t{0});
        spec.events_per_node = inject.value("events_per_node", std::size_t{0});
        const std::string mode = inject.value("mode", "multiply");
        if (mode == "multiply")
            spec.mode = InjectionSpec::DropMode::MultiplyFactor;
        else if (mode == "subtract")
            spec.mode = InjectionSpec::DropMode::SubtractStd;
        else
            fail("config", "inject.mode must be 'multiply' or 'subtract'");
        spec.factor = inject.value("factor", spec.factor);
        spec.std_multiple = inject.value("std_multiple", spec.std_multiple);
        spec.duration = inject.value("duration", spec.duration);
        spec.min_separation = inject.value("min_separation", spec.min_separation);
        spec.validate();
        cfg.inject = spec;
    }

    if (j.contains("ablation")) {
        const auto& ablation = j.at("ablation");
        detail::check_keys(ablation, {"enabled", "swap_factor", "n_random_seeds"},
                           "ablation");
        cfg.ablation_enabled = ablation.value("enabled", false);
        cfg.swap_factor = ablation.value("swap_factor", cfg.swap_factor);
        cfg.n_random_seeds = ablation.value("n_random_seeds", cfg.n_random_seeds);
    }

    if (j.contains("output")) {
        const auto& output = j.at("output");
        detail::check_keys(output, {"dir"}, "output");
        if (output.contains("dir"))
            cfg.output_dir = detail::resolve_path(base_dir, output.at("dir"));
    } else {
        cfg.output_dir = detail::resolve_path(base_dir, cfg.output_dir);
    }
    return cfg;
}

inline ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot read config " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail("config", std::string(path) + ": " + e.what());
    }
    return parse_config(j, std::filesystem::path(path).parent_path());
}

// The fully-resolved config (defaults filled in) emitted beside results.
inline nlohmann::json config_to_json(const ExperimentConfig& cfg) {
    nlohmann::json j;
    j["seed"] = cfg.seed;
    nlohmann::json data;
    switch (cfg.source) {
        case ExperimentConfig::Source::Synthetic:
            data["source"] = "synthetic";
            data["synthetic"] = {{"n_nodes", cfg.synth.n_nodes},
                                 {"n_steps", cfg.synth.n_steps},
                                 {"n_factors", cfg.synth.n_factors},
                                 {"alpha", cfg.synth.alpha},
                                 {"sigma", cfg.synth.sigma},
                                 {"seasonal_period", cfg.synth.seasonal_period},
                                 {"seasonal_amplitude", cfg.synth.seasonal_amplitude},
                                 {"avg_degree", cfg.synth.avg_degree}};
            break;
        case ExperimentConfig::Source::Yahoo:
            data["source"] = "yahoo";
            data["yahoo_dir"] = cfg.yahoo_dir;
            data["knn_k"] = cfg.knn_k;
            break;
        case ExperimentConfig::Source::Wide:
            data["source"] = "wide";
            data["panel_csv"] = cfg.panel_csv;
            data["edge_csv"] = cfg.edge_csv;
            data["directed"] = cfg.directed;
            if (cfg.missing_sentinel) data["missing_sentinel"] = *cfg.missing_sentinel;
            break;
    }
    j["data"] = data;
    j["split"] = {{"train_frac", cfg.train_frac}, {"val_frac", cfg.val_frac}};
    j["models"] = {{"run", cfg.models},
                   {"arima", {{"seasonal_period", cfg.arima_seasonal_period}}},
                   {"decomp", {{"periods", cfg.decomp_periods},
                               {"fourier_order", cfg.decomp_fourier_order}}}};
    j["train"] = {{"hidden_size", cfg.train.hidden_size},
                  {"bptt_len", cfg.train.bptt_len},
                  {"learning_rate", cfg.train.learning_rate},
                  {"epochs", cfg.train.epochs},
                  {"grad_clip", cfg.train.grad_clip},
                  {"patience", cfg.train.patience},
                  {"per_node_params", cfg.train.per_node_params}};
    j["detect"] = {{"tolerance", cfg.tolerance},
                   {"rule", cfg.detect_rule},
                   {"pooled_fallback", cfg.pooled_fallback}};
    if (cfg.inject) {
        j["inject"] = {{"n_affected_nodes", cfg.inject->n_affected_nodes},
                       {"events_per_node", cfg.inject->events_per_node},
                       {"mode", cfg.inject->mode ==
                                        InjectionSpec::DropMode::MultiplyFactor
                                    ? "multiply"
                                    : "subtract"},
                       {"factor", cfg.inject->factor},
                       {"std_multiple", cfg.inject->std_multiple},
                       {"duration", cfg.inject->duration},
                       {"min_separation", cfg.inject->min_separation}};
    }
    j["ablation"] = {{"enabled", cfg.ablation_enabled},
                     {"swap_factor", cfg.swap_factor},
                     {"n_random_seeds", cfg.n_random_seeds}};
    j["output"] = {{"dir", cfg.output_dir}};
    return j;
}

struct Dataset {
    Panel panel;  // normalized, injected
    Panel raw;    // injected, raw units
    Graph graph;
    NeighborTable table;
    SplitRanges split;
    NormalizationParams norm;
};

// Load or generate the panel+graph, inject anomalies into the validation
// and test ranges (so thresholds can be tuned on labeled validation data),
// and normalize on training statistics.
inline Dataset prepare_dataset(const ExperimentConfig& cfg) {
    Dataset ds;
    switch (cfg.source) {
        case ExperimentConfig::Source::Synthetic: {
            SynthSpec spec = cfg.synth;
            spec.seed = child_seed(cfg.seed, kSeedStreamSynth);
            auto [panel, graph] = generate_synthetic(spec);
            ds.raw = std::move(panel);
            ds.graph = std::move(graph);
            break;
        }
        case ExperimentConfig::Source::Wide: {
            auto [panel, graph] = load_wide_csv(cfg.panel_csv, cfg.edge_csv,
                                                cfg.missing_sentinel, cfg.directed);
            ds.raw = std::move(panel);
            ds.graph = std::move(graph);
            break;
        }
        case ExperimentConfig::Source::Yahoo: {
            const std::vector<Panel> series = load_yahoo_csv(cfg.yahoo_dir);
            // Assemble the largest same-length group into one panel.
            std::map<std::size_t, std::size_t> length_counts;
            for (const auto& p : series) ++length_counts[p.n_steps()];
            std::size_t best_len = 0, best_count = 0;
            for (const auto& [len, count] : length_counts)
                if (count > best_count) {
                    best_count = count;
                    best_len = len;
                }
            Panel panel;
            for (const auto& p : series) {
                if (p.n_steps() != best_len) continue;
                panel.node_ids.push_back(p.node_ids[0]);
            }
            panel.timestamps.resize(best_len);
            for (std::size_t t = 0; t < best_len; ++t)
                panel.timestamps[t] = static_cast<std::int64_t>(t);
            panel.values = Matrix(panel.node_ids.size(), best_len);
            panel.mask = Mask(panel.node_ids.size(), best_len, 1);
            panel.labels = Mask(panel.node_ids.size(), best_len);
            std::size_t row = 0;
            for (const auto& p : series) {
                if (p.n_steps() != best_len) continue;
                for (std::size_t t = 0; t < best_len; ++t) {
                    panel.values(row, t) = p.values(0, t);
                    panel.mask(row, t) = p.mask(0, t);
                    (*panel.labels)(row, t) = p.labeled(0, t);
                }
                ++row;
            }
            panel.validate();
            ds.raw = std::move(panel);
            break;
        }
    }

    ds.split = split_panel(ds.raw.n_steps(), cfg.train_frac, cfg.val_frac);

    if (cfg.inject) {
        InjectionSpec spec = *cfg.inject;
        spec.seed = child_seed(cfg.seed, kSeedStreamInject);
        ds.raw = inject_anomalies(ds.raw, spec, ds.split.val);
        ds.raw = inject_anomalies(ds.raw, spec, ds.split.test);
    }

    auto [normed, params] = normalize_panel(ds.raw, ds.split.train.end);
    ds.panel = std::move(normed);
    ds.norm = std::move(params);

    // The synthetic correlation graph for datasets without a native one.
    if (cfg.source == ExperimentConfig::Source::Yahoo)
        ds.graph = correlation_knn_graph(ds.panel, ds.split.train, cfg.knn_k);

    ds.table = build_neighbor_table(ds.graph);
    return ds;
}

namespace detail {

inline ForecastSet slice_forecasts(const ForecastSet& f, TimeRange range) {
    if (range.begin < f.start || range.end > f.start + f.predictions.cols())
        fail("experiment", "forecast slice out of range");
    ForecastSet out;
    out.start = range.begin;
    out.predictions = Matrix(f.predictions.rows(), range.length());
    if (f.half_width) out.half_width = Matrix(f.predictions.rows(), range.length());
    for (std::size_t i = 0; i < f.predictions.rows(); ++i)
        for (std::size_t t = range.begin; t < range.end; ++t) {
            out.predictions(i, t - range.begin) = f.predictions(i, t - f.start);
            if (f.half_width)
                (*out.half_width)(i, t - range.begin) =
                    (*f.half_width)(i, t - f.start);
        }
    return out;
}

inline Mask labels_in(const Panel& panel, TimeRange range) {
    Mask out(panel.n_nodes(), range.length());
    for (std::size_t i = 0; i < panel.n_nodes(); ++i)
        for (std::size_t t = range.begin; t < range.end; ++t)
            out(i, t - range.begin) = panel.labeled(i, t);
    return out;
}

} // namespace detail

struct ModelArtifacts {
    std::string name;
    ThresholdMap thresholds;
    Mask test_flags;
    ScoreTable scores;
    Matrix test_predictions; // normalized units
    std::optional<Checkpoint> checkpoint;
};

// Threshold sweep on the validation slice, flags and scores on the test
// slice, given forecasts covering validation plus test.
inline ModelArtifacts artifacts_from_forecasts(const std::string& name,
                                               const Dataset& ds,
                                               const ExperimentConfig& cfg,
                                               const ForecastSet& forecasts) {
    ModelArtifacts art;
    art.name = name;
    const ForecastSet val_f = detail::slice_forecasts(forecasts, ds.split.val);
    const ForecastSet test_f = detail::slice_forecasts(forecasts, ds.split.test);
    art.test_predictions = test_f.predictions;

    const ResidualSet val_r = residuals(ds.panel, val_f, ds.split.val);
    art.thresholds = sweep_thresholds(
        val_r, detail::labels_in(ds.panel, ds.split.val),
        {.tolerance = cfg.tolerance, .pooled_fallback = cfg.pooled_fallback});

    if (cfg.detect_rule == "interval") {
        art.test_flags = interval_flag(ds.panel, test_f);
    } else {
        const ResidualSet test_r = residuals(ds.panel, test_f, ds.split.test);
        art.test_flags = flag(test_r, art.thresholds);
    }
    art.scores = score(match(art.test_flags,
                             detail::labels_in(ds.panel, ds.split.test),
                             cfg.tolerance));
    return art;
}

// Trains/fits one model, tunes thresholds on the validation range, flags
// and scores on the test range.
inline ModelArtifacts run_model(const std::string& name, const Dataset& ds,
                                const ExperimentConfig& cfg,
                                const NeighborTable* table_override = nullptr) {
    const TimeRange eval{ds.split.val.begin, ds.split.test.end};
    const NeighborTable& table = table_override ? *table_override : ds.table;

    std::optional<Checkpoint> checkpoint;
    ForecastSet forecasts;
    if (name == "graph-lstm" || name == "lstm-only") {
        TrainConfig tc = cfg.train;
        tc.seed = child_seed(cfg.seed, kSeedStreamTrain);
        GraphLstmModel model = make_graph_lstm(ds.panel.n_nodes(), table, tc,
                                               name == "graph-lstm");
        train(model, ds.panel, ds.split.train, tc, ds.split.val);
        forecasts = forecast_one_step(model, ds.panel, eval);
        checkpoint = Checkpoint{std::move(model), ds.norm, tc, ds.panel.node_ids};
    } else if (name == "arima") {
        const Matrix filled = fill_forward(ds.panel);
        const auto grid = default_arima_grid(cfg.arima_seasonal_period);
        forecasts.start = eval.begin;
        forecasts.predictions = Matrix(ds.panel.n_nodes(), eval.length());
        forecasts.half_width = Matrix(ds.panel.n_nodes(), eval.length());
        for (std::size_t i = 0; i < ds.panel.n_nodes(); ++i) {
            Vector series(filled.row_ptr(i), filled.row_ptr(i) + filled.cols());
            const Vector train_slice(series.begin(),
                                     series.begin() + ds.split.train.end);
            const ArimaFit fit = arima_fit(train_slice, grid);
            const ForecastSet f = arima_forecast(fit, series, eval);
            for (std::size_t t = 0; t < eval.length(); ++t) {
                forecasts.predictions(i, t) = f.predictions(0, t);
                (*forecasts.half_width)(i, t) = (*f.half_width)(0, t);
            }
        }
    } else if (name == "decomp") {
        forecasts.start = eval.begin;
        forecasts.predictions = Matrix(ds.panel.n_nodes(), eval.length());
        forecasts.half_width = Matrix(ds.panel.n_nodes(), eval.length());
        for (std::size_t i = 0; i < ds.panel.n_nodes(); ++i) {
            Vector series(ds.panel.values.row_ptr(i),
                          ds.panel.values.row_ptr(i) + ds.panel.n_steps());
            std::vector<std::uint8_t> usable(ds.panel.n_steps(), 0);
            for (std::size_t t = 0; t < ds.panel.n_steps(); ++t)
                usable[t] = ds.panel.observed(i, t) && !ds.panel.labeled(i, t);
            const DecompFit fit =
                decomp_fit(series, ds.split.train, cfg.decomp_periods,
                           cfg.decomp_fourier_order, usable);
            const ForecastSet f = decomp_forecast(fit, eval);
            for (std::size_t t = 0; t < eval.length(); ++t) {
                forecasts.predictions(i, t) = f.predictions(0, t);
                (*forecasts.half_width)(i, t) = (*f.half_width)(0, t);
            }
        }
    } else {
        fail("experiment", "unknown model '" + name + "'");
    }

    ModelArtifacts art = artifacts_from_forecasts(name, ds, cfg, forecasts);
    art.checkpoint = std::move(checkpoint);
    return art;
}

struct RunReport {
    std::vector<std::string> node_ids;
    std::vector<std::int64_t> test_timestamps;
    SplitRanges split;
    Graph graph;
    std::vector<ModelArtifacts> models;
    std::optional<DegreeImprovement> improvement;
    std::vector<plotdata::CountRow> anomaly_counts;
    std::vector<plotdata::ForecastRow> forecast_rows;
    std::string forecast_node;
    std::uint64_t seed = 0;
};

inline RunReport run_comparison(const ExperimentConfig& cfg) {
    const Dataset ds = prepare_dataset(cfg);
    RunReport report;
    report.node_ids = ds.panel.node_ids;
    report.split = ds.split;
    report.graph = ds.graph;
    report.seed = cfg.seed;
    for (std::size_t t = ds.split.test.begin; t < ds.split.test.end; ++t)
        report.test_timestamps.push_back(ds.panel.timestamps[t]);

    for (const auto& name : cfg.models) {
        try {
            report.models.push_back(run_model(name, ds, cfg));
        } catch (const Error& e) {
            fail(e.category(), std::string("model ") + name + ": " + e.what());
        }
    }

    const auto find = [&](const std::string& name) -> const ModelArtifacts* {
        for (const auto& m : report.models)
            if (m.name == name) return &m;
        return nullptr;
    };
    const ModelArtifacts* glstm = find("graph-lstm");
    const ModelArtifacts* lstm = find("lstm-only");
    if (glstm && lstm)
        report.improvement =
            degree_improvement(glstm->scores, lstm->scores, ds.graph);

    for (std::size_t i = 0; i < ds.panel.n_nodes(); ++i) {
        plotdata::CountRow row;
        row.node_id = ds.panel.node_ids[i];
        for (std::size_t t = 0; t < ds.panel.n_steps(); ++t) {
            if (!ds.panel.labeled(i, t)) continue;
            if (ds.split.train.contains(t)) ++row.train;
            else if (ds.split.val.contains(t)) ++row.val;
            else ++row.test;
        }
        report.anomaly_counts.push_back(row);
    }

    // Forecast-vs-actual extract: lead model, first node with a test label.
    if (!report.models.empty()) {
        const ModelArtifacts& lead = report.models.front();
        std::size_t node = 0;
        for (std::size_t i = 0; i < ds.panel.n_nodes(); ++i) {
            bool any = false;
            for (std::size_t t = ds.split.test.begin; t < ds.split.test.end; ++t)
                if (ds.panel.labeled(i, t)) any = true;
            if (any) {
                node = i;
                break;
            }
        }
        report.forecast_node = ds.panel.node_ids[node];
        for (std::size_t t = ds.split.test.begin; t < ds.split.test.end; ++t) {
            plotdata::ForecastRow row;
            row.t = ds.panel.timestamps[t];
            row.actual = ds.raw.values(node, t);
            row.forecast = ds.norm.denormalize(
                node, lead.test_predictions(node, t - ds.split.test.begin));
            row.flagged = lead.test_flags(node, t - ds.split.test.begin);
            row.labeled = ds.panel.labeled(node, t);
            report.forecast_rows.push_back(row);
        }
    }
    return report;
}

struct AblationRow {
    std::string graph_name; // "real" or "random_<k>"
    NodeScore micro;
};

// Retrains the graph model on degree-preserving rewirings of the real
// graph, from the same parameter initialization, and compares micro scores.
inline std::vector<AblationRow> run_ablation(const ExperimentConfig& cfg) {
    if (!cfg.has_model("graph-lstm"))
        fail("experiment", "ablation requires graph-lstm in models.run");
    const Dataset ds = prepare_dataset(cfg);
    if (ds.graph.directed)
        fail("unsupported-ablation", "ablation requires an undirected graph");

    std::vector<AblationRow> rows;
    rows.push_back({"real", run_model("graph-lstm", ds, cfg).scores.micro});
    for (std::size_t k = 0; k < cfg.n_random_seeds; ++k) {
        SeededRng rng(child_seed(cfg.seed, kSeedStreamRewire + k));
        const Graph rewired =
            degree_preserving_rewire(ds.graph, rng, cfg.swap_factor);
        const NeighborTable table = build_neighbor_table(rewired);
        rows.push_back({"random_" + std::to_string(k),
                        run_model("graph-lstm", ds, cfg, &table).scores.micro});
    }
    return rows;
}

// ---- report emission ----------------------------------------------------

namespace detail {

inline void write_text(const std::string& path, const std::string& content) {
    std::ofstream out(path);
    if (!out) fail("io", "cannot write " + path);
    out << content;
}

} // namespace detail

inline void write_score_table_csv(const RunReport& report,
                                  const std::string& path) {
    std::ostringstream out;
    out << "model,precision,recall,f1,tp,fp,fn\n";
    for (const auto& m : report.models)
        out << m.name << ',' << format_g(m.scores.micro.precision) << ','
            << format_g(m.scores.micro.recall) << ','
            << format_g(m.scores.micro.f1) << ',' << m.scores.micro.tp << ','
            << m.scores.micro.fp << ',' << m.scores.micro.fn << '\n';
    detail::write_text(path, out.str());
}

inline void write_score_table_txt(const RunReport& report,
                                  const std::string& path) {
    std::ostringstream out;
    out << "Model                 Precision  Recall  F1\n";
    for (const auto& m : report.models) {
        out << m.name;
        for (std::size_t pad = m.name.size(); pad < 22; ++pad) out << ' ';
        out << format_fixed(m.scores.micro.precision, 2) << "       "
            << format_fixed(m.scores.micro.recall, 2) << "    "
            << format_fixed(m.scores.micro.f1, 2) << '\n';
    }
    if (report.improvement) {
        out << "\nfraction of nodes with non-negative F1 improvement "
               "(graph-lstm vs lstm-only): "
            << format_fixed(report.improvement->fraction_non_negative, 2) << '\n';
    }
    detail::write_text(path, out.str());
}

inline void write_report(const RunReport& report,
                         const std::vector<AblationRow>* ablation,
                         const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    fs::create_directories(fs::path(dir) / "plots");
    const auto at = [&](const std::string& name) {
        return (fs::path(dir) / name).string();
    };

    write_score_table_csv(report, at("table.csv"));
    write_score_table_txt(report, at("table.txt"));

    for (const auto& m : report.models) {
        write_thresholds_csv(at("thresholds_" + m.name + ".csv"),
                             report.node_ids, m.thresholds);
        write_flags_csv(m.test_flags, report.node_ids, report.test_timestamps,
                        at("flags_" + m.name + ".csv"));
        if (m.checkpoint)
            save_checkpoint(*m.checkpoint, at("model_" + m.name + ".json"));
    }
    if (!report.models.empty())
        write_thresholds_csv(at("thresholds.csv"), report.node_ids,
                             report.models.front().thresholds);

    {
        std::ostringstream out;
        out << "node_id,degree,f1_graph_lstm,f1_lstm_only,delta_f1\n";
        if (report.improvement)
            for (const auto& r : report.improvement->records)
                out << report.node_ids[r.node] << ',' << r.degree << ','
                    << format_g(r.f1_a) << ',' << format_g(r.f1_b) << ','
                    << format_g(r.delta_f1) << '\n';
        detail::write_text(at("delta_f1_vs_degree.csv"), out.str());
    }
    {
        std::ostringstream out;
        out << "node_id,train,val,test\n";
        for (const auto& r : report.anomaly_counts)
            out << r.node_id << ',' << r.train << ',' << r.val << ',' << r.test
                << '\n';
        detail::write_text(at("anomaly_counts.csv"), out.str());
    }
    {
        std::ostringstream out;
        out << "t,actual,forecast,flag,label\n";
        for (const auto& r : report.forecast_rows)
            out << r.t << ',' << format_g(r.actual) << ','
                << format_g(r.forecast) << ',' << (r.flagged ? 1 : 0) << ','
                << (r.labeled ? 1 : 0) << '\n';
        detail::write_text(at("forecast_vs_actual.csv"), out.str());
    }
    if (ablation) {
        std::ostringstream out;
        out << "graph,precision,recall,f1\n";
        for (const auto& row : *ablation)
            out << row.graph_name << ',' << format_g(row.micro.precision) << ','
                << format_g(row.micro.recall) << ',' << format_g(row.micro.f1)
                << '\n';
        detail::write_text(at("ablation.csv"), out.str());
    }
    detail::write_text(at("fingerprint.txt"),
                       std::string("tsad ") + kVersion + "\nmaster_seed " +
                           std::to_string(report.seed) + "\n");
}

// ---- plot re-rendering from the emitted CSVs ----------------------------

namespace detail {

inline std::vector<std::vector<std::string>> read_csv_rows(
    const std::string& path, const std::string& expected_header) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot read " + path);
    std::string line;
    if (!std::getline(in, line) || strip(line) != expected_header)
        fail("format", path + ": expected header " + expected_header);
    std::vector<std::vector<std::string>> rows;
    while (std::getline(in, line)) {
        if (strip(line).empty()) continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

} // namespace detail

// Renders the four SVGs from the CSVs in a report directory; plots are a
// pure function of the CSV data.
inline void emit_plots(const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(fs::path(dir) / "plots");
    const auto at = [&](const std::string& name) {
        return (fs::path(dir) / name).string();
    };

    if (fs::exists(at("thresholds.csv"))) {
        std::vector<plotdata::ThresholdRow> rows;
        for (const auto& cells :
             detail::read_csv_rows(at("thresholds.csv"), "node_id,threshold,val_f1"))
            rows.push_back({cells[0], std::stod(cells[1]), std::stod(cells[2])});
        plot_threshold_tuning(rows, at("plots/threshold_tuning.svg"));
    }
    if (fs::exists(at("delta_f1_vs_degree.csv"))) {
        std::vector<plotdata::DegreeRow> rows;
        for (const auto& cells : detail::read_csv_rows(
                 at("delta_f1_vs_degree.csv"),
                 "node_id,degree,f1_graph_lstm,f1_lstm_only,delta_f1"))
            rows.push_back({cells[0], static_cast<std::size_t>(std::stoul(cells[1])),
                            std::stod(cells[2]), std::stod(cells[3]),
                            std::stod(cells[4])});
        plot_f1_vs_degree(rows, at("plots/f1_vs_degree.svg"));
    }
    if (fs::exists(at("anomaly_counts.csv"))) {
        std::vector<plotdata::CountRow> rows;
        for (const auto& cells : detail::read_csv_rows(at("anomaly_counts.csv"),
                                                       "node_id,train,val,test"))
            rows.push_back({cells[0], static_cast<std::size_t>(std::stoul(cells[1])),
                            static_cast<std::size_t>(std::stoul(cells[2])),
                            static_cast<std::size_t>(std::stoul(cells[3]))});
        plot_anomaly_counts(rows, at("plots/anomaly_counts.svg"));
    }
    if (fs::exists(at("forecast_vs_actual.csv"))) {
        std::vector<plotdata::ForecastRow> rows;
        for (const auto& cells : detail::read_csv_rows(
                 at("forecast_vs_actual.csv"), "t,actual,forecast,flag,label"))
            rows.push_back({std::stoll(cells[0]), std::stod(cells[1]),
                            std::stod(cells[2]), cells[3] == "1",
                            cells[4] == "1"});
        std::string node = "n/a";
        plot_forecast_vs_actual(rows, node, at("plots/forecast_vs_actual.svg"));
    }
}

// Full pipeline for the `run` subcommand; returns the report directory.
inline std::string run_experiment(const ExperimentConfig& cfg) {
    const RunReport report = run_comparison(cfg);
    std::vector<AblationRow> ablation;
    if (cfg.ablation_enabled) ablation = run_ablation(cfg);
    write_report(report, cfg.ablation_enabled ? &ablation : nullptr,
                 cfg.output_dir);
    {
        std::ofstream out(
            (std::filesystem::path(cfg.output_dir) / "config_resolved.json")
                .string());
        out << config_to_json(cfg).dump(2) << '\n';
    }
    emit_plots(cfg.output_dir);
    return cfg.output_dir;
}

} // namespace tsad
