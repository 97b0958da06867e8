#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "tsad/model_io.hpp"
#include "tsad/tsad.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct GlobalFlags {
    bool quiet = false;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
};

// Info lines go to stdout unless --quiet; the final result line always
// prints.
void info(const GlobalFlags& g, const std::string& line) {
    if (!g.quiet) std::cout << line << '\n';
}

std::string pick_output_dir(const GlobalFlags& g, const std::string& from_config) {
    if (g.out) return *g.out;
    if (const char* env = std::getenv("TSAD_OUT_DIR")) return env;
    return from_config;
}

tsad::ExperimentConfig load_cfg(const std::string& path, const GlobalFlags& g) {
    tsad::ExperimentConfig cfg = tsad::load_config(path);
    if (g.seed) cfg.seed = *g.seed;
    cfg.output_dir = pick_output_dir(g, cfg.output_dir);
    return cfg;
}

json load_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) tsad::fail("io", "cannot read " + path);
    json j;
    try {
        in >> j;
    } catch (const json::exception& e) {
        tsad::fail("format", path + ": " + e.what());
    }
    return j;
}

int cmd_run(const std::string& config_path, const GlobalFlags& g) {
    const tsad::ExperimentConfig cfg = load_cfg(config_path, g);
    info(g, "master_seed " + std::to_string(cfg.seed));
    for (const auto& name : cfg.models) info(g, "running model " + name);
    const std::string dir = tsad::run_experiment(cfg);
    std::cout << dir << '\n';
    return 0;
}

int cmd_train(const std::string& config_path, const GlobalFlags& g) {
    const tsad::ExperimentConfig cfg = load_cfg(config_path, g);
    info(g, "master_seed " + std::to_string(cfg.seed));
    const tsad::Dataset ds = tsad::prepare_dataset(cfg);
    fs::create_directories(cfg.output_dir);
    bool any = false;
    for (const auto& name : cfg.models) {
        if (name != "graph-lstm" && name != "lstm-only") continue;
        any = true;
        tsad::TrainConfig tc = cfg.train;
        tc.seed = tsad::child_seed(cfg.seed, tsad::kSeedStreamTrain);
        tsad::GraphLstmModel model = tsad::make_graph_lstm(
            ds.panel.n_nodes(), ds.table, tc, name == "graph-lstm");
        tsad::train(model, ds.panel, ds.split.train, tc, ds.split.val);
        const std::string path =
            (fs::path(cfg.output_dir) / ("model_" + name + ".json")).string();
        tsad::save_checkpoint({std::move(model), ds.norm, tc, ds.panel.node_ids},
                              path);
        info(g, "saved " + path);
    }
    if (!any) tsad::fail("config", "no trainable model in models.run");
    std::cout << cfg.output_dir << '\n';
    return 0;
}

int cmd_detect(const std::string& config_path, const std::string& model_name,
               const GlobalFlags& g) {
    const tsad::ExperimentConfig cfg = load_cfg(config_path, g);
    if (!cfg.has_model(model_name))
        tsad::fail("config", "model '" + model_name + "' not in models.run");
    info(g, "master_seed " + std::to_string(cfg.seed));
    const tsad::Dataset ds = tsad::prepare_dataset(cfg);
    fs::create_directories(cfg.output_dir);

    tsad::ModelArtifacts art;
    const std::string ckpt_path =
        (fs::path(cfg.output_dir) / ("model_" + model_name + ".json")).string();
    const bool neural = model_name == "graph-lstm" || model_name == "lstm-only";
    if (neural && fs::exists(ckpt_path)) {
        info(g, "loading checkpoint " + ckpt_path);
        const tsad::Checkpoint ckpt = tsad::load_checkpoint(ckpt_path);
        if (ckpt.node_ids != ds.panel.node_ids)
            tsad::fail("checkpoint", "node ids do not match the dataset");
        const tsad::TimeRange eval{ds.split.val.begin, ds.split.test.end};
        const tsad::ForecastSet forecasts =
            tsad::forecast_one_step(ckpt.model, ds.panel, eval);
        art = tsad::artifacts_from_forecasts(model_name, ds, cfg, forecasts);
    } else {
        art = tsad::run_model(model_name, ds, cfg);
        if (art.checkpoint) tsad::save_checkpoint(*art.checkpoint, ckpt_path);
    }

    const std::vector<std::int64_t> test_ts(
        ds.panel.timestamps.begin() + ds.split.test.begin,
        ds.panel.timestamps.begin() + ds.split.test.end);
    tsad::write_thresholds_csv(
        (fs::path(cfg.output_dir) / ("thresholds_" + model_name + ".csv")).string(),
        ds.panel.node_ids, art.thresholds);
    tsad::write_flags_csv(
        art.test_flags, ds.panel.node_ids, test_ts,
        (fs::path(cfg.output_dir) / ("flags_" + model_name + ".csv")).string());
    info(g, "micro precision=" + tsad::format_g(art.scores.micro.precision) +
                " recall=" + tsad::format_g(art.scores.micro.recall) +
                " f1=" + tsad::format_g(art.scores.micro.f1));
    std::cout << cfg.output_dir << '\n';
    return 0;
}

int cmd_ablate(const std::string& config_path, const GlobalFlags& g) {
    const tsad::ExperimentConfig cfg = load_cfg(config_path, g);
    info(g, "master_seed " + std::to_string(cfg.seed));
    const auto rows = tsad::run_ablation(cfg);
    fs::create_directories(cfg.output_dir);
    const std::string path = (fs::path(cfg.output_dir) / "ablation.csv").string();
    std::ofstream out(path);
    out << "graph,precision,recall,f1\n";
    for (const auto& row : rows) {
        out << row.graph_name << ',' << tsad::format_g(row.micro.precision) << ','
            << tsad::format_g(row.micro.recall) << ','
            << tsad::format_g(row.micro.f1) << '\n';
        info(g, row.graph_name + " f1=" + tsad::format_g(row.micro.f1));
    }
    std::cout << path << '\n';
    return 0;
}

int cmd_gen_synth(const std::string& spec_path, const std::string& out_dir,
                  const GlobalFlags& g) {
    const json j = load_json_file(spec_path);
    tsad::detail::check_keys(j,
                             {"n_nodes", "n_steps", "n_factors", "alpha", "sigma",
                              "seasonal_period", "seasonal_amplitude",
                              "avg_degree", "seed"},
                             "synth spec");
    tsad::SynthSpec spec;
    spec.n_nodes = j.value("n_nodes", spec.n_nodes);
    spec.n_steps = j.value("n_steps", spec.n_steps);
    spec.n_factors = j.value("n_factors", spec.n_factors);
    spec.alpha = j.value("alpha", spec.alpha);
    spec.sigma = j.value("sigma", spec.sigma);
    spec.seasonal_period = j.value("seasonal_period", spec.seasonal_period);
    spec.seasonal_amplitude = j.value("seasonal_amplitude", spec.seasonal_amplitude);
    spec.avg_degree = j.value("avg_degree", spec.avg_degree);
    spec.seed = g.seed ? *g.seed : j.value("seed", spec.seed);
    info(g, "master_seed " + std::to_string(spec.seed));

    auto [panel, graph] = tsad::generate_synthetic(spec);
    const std::string dir = g.out ? *g.out : out_dir;
    fs::create_directories(dir);
    tsad::write_wide_csv(panel, (fs::path(dir) / "panel.csv").string());
    tsad::write_labels_csv(panel, (fs::path(dir) / "labels.csv").string());
    tsad::write_edges_csv(graph, panel.node_ids,
                          (fs::path(dir) / "edges.csv").string());
    std::cout << dir << '\n';
    return 0;
}

int cmd_inject(const std::string& panel_path, const std::string& spec_path,
               const std::string& out_dir, const GlobalFlags& g) {
    const json j = load_json_file(spec_path);
    tsad::detail::check_keys(j,
                             {"n_affected_nodes", "events_per_node", "mode",
                              "factor", "std_multiple", "duration",
                              "min_separation", "seed", "range"},
                             "inject spec");
    tsad::InjectionSpec spec;
    spec.n_affected_nodes = j.value("n_affected_nodes", std::size_t{0});
    spec.events_per_node = j.value("events_per_node", std::size_t{0});
    const std::string mode = j.value("mode", "multiply");
    if (mode == "multiply")
        spec.mode = tsad::InjectionSpec::DropMode::MultiplyFactor;
    else if (mode == "subtract")
        spec.mode = tsad::InjectionSpec::DropMode::SubtractStd;
    else
        tsad::fail("format", "inject mode must be 'multiply' or 'subtract'");
    spec.factor = j.value("factor", spec.factor);
    spec.std_multiple = j.value("std_multiple", spec.std_multiple);
    spec.duration = j.value("duration", spec.duration);
    spec.min_separation = j.value("min_separation", spec.min_separation);
    spec.seed = g.seed ? *g.seed : j.value("seed", spec.seed);
    info(g, "master_seed " + std::to_string(spec.seed));

    const tsad::Panel panel = tsad::load_wide_csv(panel_path);
    tsad::TimeRange range{0, panel.n_steps()};
    if (j.contains("range")) {
        const auto r = j.at("range").get<std::vector<std::size_t>>();
        if (r.size() != 2 || r[0] >= r[1])
            tsad::fail("format", "inject range must be [begin, end)");
        range = {r[0], r[1]};
    }
    const tsad::Panel injected = tsad::inject_anomalies(panel, spec, range);
    const std::string dir = g.out ? *g.out : out_dir;
    fs::create_directories(dir);
    tsad::write_wide_csv(injected, (fs::path(dir) / "panel.csv").string());
    tsad::write_labels_csv(injected, (fs::path(dir) / "labels.csv").string());
    std::cout << dir << '\n';
    return 0;
}

int cmd_score(const std::string& pred_path, const std::string& truth_path,
              std::size_t tolerance, const GlobalFlags& g) {
    std::vector<std::string> pred_ids, truth_ids;
    const tsad::Mask pred = tsad::load_flags_csv(pred_path, &pred_ids);
    const tsad::Mask truth = tsad::load_flags_csv(truth_path, &truth_ids);
    if (pred_ids != truth_ids)
        tsad::fail("format", "prediction and truth node ids differ");
    const tsad::ScoreTable table =
        tsad::score(tsad::match(pred, truth, tolerance));
    info(g, "nodes " + std::to_string(pred_ids.size()) + ", tolerance " +
                std::to_string(tolerance));
    std::cout << "precision=" << tsad::format_g(table.micro.precision)
              << " recall=" << tsad::format_g(table.micro.recall)
              << " f1=" << tsad::format_g(table.micro.f1) << '\n';
    return 0;
}

int cmd_plot(const std::string& report_dir, const GlobalFlags&) {
    tsad::emit_plots(report_dir);
    std::cout << (fs::path(report_dir) / "plots").string() << '\n';
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"forecasting-based anomaly detection for graph-structured "
                 "time series"};
    app.require_subcommand(1);

    GlobalFlags g;
    std::uint64_t seed_arg = 0;
    std::string out_arg;
    auto* seed_opt = app.add_option("--seed", seed_arg, "override master seed");
    auto* out_opt = app.add_option("--out", out_arg, "override output directory");
    app.add_flag("--quiet", g.quiet, "print only the final result line");

    std::string config_path, model_name, spec_path, panel_path, pred_path,
        truth_path, report_dir;
    std::string gen_out = "synth";
    std::string inject_out = "injected";
    std::size_t tolerance = 0;

    auto* run = app.add_subcommand("run", "full comparison experiment from a config");
    run->add_option("config", config_path, "experiment config (json)")->required();

    auto* train = app.add_subcommand("train", "train neural models, save checkpoints");
    train->add_option("config", config_path, "experiment config (json)")->required();

    auto* detect = app.add_subcommand("detect", "detect with a single model");
    detect->add_option("config", config_path, "experiment config (json)")->required();
    detect->add_option("--model", model_name, "model name")->required();

    auto* ablate = app.add_subcommand("ablate", "real-vs-random-graph ablation");
    ablate->add_option("config", config_path, "experiment config (json)")->required();

    auto* gen = app.add_subcommand("gen-synth", "generate a synthetic panel+graph");
    gen->add_option("spec", spec_path, "synth spec (json)")->required();
    gen->add_option("--out", gen_out, "output directory");

    auto* inject = app.add_subcommand("inject", "inject drop anomalies into a panel");
    inject->add_option("panel", panel_path, "wide panel csv")->required();
    inject->add_option("spec", spec_path, "injection spec (json)")->required();
    inject->add_option("--out", inject_out, "output directory");

    auto* score = app.add_subcommand("score", "score flags against labels");
    score->add_option("pred", pred_path, "predicted flags csv")->required();
    score->add_option("truth", truth_path, "true labels csv")->required();
    score->add_option("--tolerance", tolerance, "matching tolerance (steps)");

    auto* plot = app.add_subcommand("plot", "re-render SVG plots from a report");
    plot->add_option("report_dir", report_dir, "report directory")->required();

    // Global flags (--seed/--out/--quiet) are accepted after a subcommand.
    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: usage: " << e.what() << '\n';
        std::cerr << app.help() << '\n';
        return 2;
    }
    if (seed_opt->count()) g.seed = seed_arg;
    if (out_opt->count()) g.out = out_arg;

    try {
        if (run->parsed()) return cmd_run(config_path, g);
        if (train->parsed()) return cmd_train(config_path, g);
        if (detect->parsed()) return cmd_detect(config_path, model_name, g);
        if (ablate->parsed()) return cmd_ablate(config_path, g);
        if (gen->parsed()) return cmd_gen_synth(spec_path, gen_out, g);
        if (inject->parsed()) return cmd_inject(panel_path, spec_path, inject_out, g);
        if (score->parsed()) return cmd_score(pred_path, truth_path, tolerance, g);
        if (plot->parsed()) return cmd_plot(report_dir, g);
    } catch (const tsad::Error& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: internal: " << e.what() << '\n';
        return 1;
    }
    return 2;
}
