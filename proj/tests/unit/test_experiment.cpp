#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "tsad/experiment.hpp"

using namespace tsad;
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct TempDir {
    fs::path path;
    TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
    std::string file(const std::string& name) const {
        return (path / name).string();
    }
};

std::string read_file(const std::string& path) {
    std::ifstream in(path);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

json tiny_synth_config(const std::string& out_dir) {
    return json{
        {"seed", 7},
        {"data",
         {{"source", "synthetic"},
          {"synthetic",
           {{"n_nodes", 6}, {"n_steps", 400}, {"alpha", 0.5}, {"sigma", 0.4}}}}},
        {"split", {{"train_frac", 0.6}, {"val_frac", 0.2}}},
        {"models", {{"run", {"graph-lstm", "lstm-only"}}}},
        {"train",
         {{"hidden_size", 6},
          {"bptt_len", 24},
          {"learning_rate", 0.005},
          {"epochs", 4},
          {"patience", 2}}},
        {"detect", {{"tolerance", 3}}},
        {"inject",
         {{"n_affected_nodes", 2},
          {"events_per_node", 2},
          {"mode", "subtract"},
          {"std_multiple", 3.5},
          {"min_separation", 20}}},
        {"output", {{"dir", out_dir}}}};
}

} // namespace

TEST_CASE("config: unknown keys are rejected at every level") {
    json j = tiny_synth_config("out");
    SUBCASE("top level") {
        j["extra"] = 1;
        CHECK_THROWS_WITH_AS(parse_config(j, "."), doctest::Contains("extra"),
                             Error);
    }
    SUBCASE("data section") {
        j["data"]["typo_key"] = 1;
        CHECK_THROWS_WITH_AS(parse_config(j, "."), doctest::Contains("typo_key"),
                             Error);
    }
    SUBCASE("train section") {
        j["train"]["lr"] = 0.1;
        CHECK_THROWS_WITH_AS(parse_config(j, "."), doctest::Contains("lr"), Error);
    }
    SUBCASE("synthetic spec") {
        j["data"]["synthetic"]["nodes"] = 3;
        CHECK_THROWS_WITH_AS(parse_config(j, "."), doctest::Contains("nodes"),
                             Error);
    }
}

TEST_CASE("config: validation errors") {
    json j = tiny_synth_config("out");
    SUBCASE("unknown model name") {
        j["models"]["run"] = {"graph-lstm", "transformer"};
        CHECK_THROWS_WITH_AS(parse_config(j, "."), doctest::Contains("transformer"),
                             Error);
    }
    SUBCASE("duplicate model") {
        j["models"]["run"] = {"arima", "arima"};
        CHECK_THROWS_AS(parse_config(j, "."), Error);
    }
    SUBCASE("missing data section") {
        j.erase("data");
        CHECK_THROWS_WITH_AS(parse_config(j, "."), doctest::Contains("data"),
                             Error);
    }
    SUBCASE("interval rule with a neural model") {
        j["detect"]["rule"] = "interval";
        CHECK_THROWS_WITH_AS(parse_config(j, "."), doctest::Contains("interval"),
                             Error);
    }
    SUBCASE("relative paths resolve against the config directory") {
        json wide = tiny_synth_config("out");
        wide["data"] = {{"source", "wide"},
                        {"panel_csv", "panel.csv"},
                        {"edge_csv", "edges.csv"}};
        const ExperimentConfig cfg = parse_config(wide, "/some/base");
        CHECK(cfg.panel_csv == "/some/base/panel.csv");
        CHECK(cfg.output_dir == "/some/base/out");
    }
}

TEST_CASE("prepare_dataset: injection lands in val and test, train stays clean") {
    TempDir dir("tsad_prep");
    const ExperimentConfig cfg =
        parse_config(tiny_synth_config(dir.file("out")), dir.path);
    const Dataset ds = prepare_dataset(cfg);
    std::size_t train_labels = 0, val_labels = 0, test_labels = 0;
    for (std::size_t i = 0; i < ds.panel.n_nodes(); ++i)
        for (std::size_t t = 0; t < ds.panel.n_steps(); ++t) {
            if (!ds.panel.labeled(i, t)) continue;
            if (ds.split.train.contains(t)) ++train_labels;
            else if (ds.split.val.contains(t)) ++val_labels;
            else ++test_labels;
        }
    CHECK(train_labels == 0);
    CHECK(val_labels == 4);  // 2 nodes x 2 events
    CHECK(test_labels == 4);

    // Normalization comes from the training range only.
    for (std::size_t i = 0; i < ds.panel.n_nodes(); ++i) {
        double sum = 0.0;
        for (std::size_t t = 0; t < ds.split.train.end; ++t)
            sum += ds.panel.values(i, t);
        CHECK(std::fabs(sum / static_cast<double>(ds.split.train.end)) < 1e-9);
    }
}

TEST_CASE("run_comparison: report structure and vacuous constant case") {
    TempDir dir("tsad_constant");
    // Constant wide panel: no anomalies anywhere.
    {
        std::ofstream panel(dir.file("panel.csv"));
        panel << "timestamp,A,B\n";
        for (int t = 0; t < 200; ++t)
            panel << t << ",5,5\n";
        std::ofstream edges(dir.file("edges.csv"));
        edges << "src,dst\nA,B\n";
    }
    json j{{"seed", 3},
           {"data",
            {{"source", "wide"},
             {"panel_csv", "panel.csv"},
             {"edge_csv", "edges.csv"}}},
           {"split", {{"train_frac", 0.6}, {"val_frac", 0.2}}},
           {"models", {{"run", {"lstm-only"}}}},
           {"train",
            {{"hidden_size", 4}, {"bptt_len", 16}, {"epochs", 2}, {"patience", 1}}},
           {"output", {{"dir", "out"}}}};
    const ExperimentConfig cfg = parse_config(j, dir.path);
    const RunReport report = run_comparison(cfg);
    REQUIRE(report.models.size() == 1);
    const auto& m = report.models[0];
    CHECK(m.scores.micro.tp == 0);
    CHECK(m.scores.micro.fp == 0);
    CHECK(m.scores.micro.fn == 0);
    for (std::size_t k = 0; k < m.test_flags.size(); ++k)
        CHECK(m.test_flags.data()[k] == 0);
    for (const auto& node : m.scores.per_node) CHECK(node.f1 == 1.0); // vacuous
}

TEST_CASE("run_comparison: edgeless graph makes graph-lstm equal lstm-only") {
    TempDir dir("tsad_edgeless");
    {
        std::ofstream panel(dir.file("panel.csv"));
        panel << "timestamp,A,B,C\n";
        SeededRng rng(5);
        double a = 0, b = 0, c = 0;
        for (int t = 0; t < 300; ++t) {
            a = 0.8 * a + rng.normal();
            b = 0.8 * b + rng.normal();
            c = 0.8 * c + rng.normal();
            panel << t << ',' << format_g(a) << ',' << format_g(b) << ','
                  << format_g(c) << '\n';
        }
        std::ofstream edges(dir.file("edges.csv"));
        edges << "src,dst\n";
    }
    json j{{"seed", 11},
           {"data",
            {{"source", "wide"},
             {"panel_csv", "panel.csv"},
             {"edge_csv", "edges.csv"}}},
           {"split", {{"train_frac", 0.6}, {"val_frac", 0.2}}},
           {"models", {{"run", {"graph-lstm", "lstm-only"}}}},
           {"train",
            {{"hidden_size", 4}, {"bptt_len", 16}, {"epochs", 3}, {"patience", 2}}},
           {"detect", {{"tolerance", 1}}},
           {"output", {{"dir", "out"}}}};
    const ExperimentConfig cfg = parse_config(j, dir.path);
    const RunReport report = run_comparison(cfg);
    REQUIRE(report.models.size() == 2);
    // Without edges the augmentation term is identically zero, so both
    // models are the same computation from the same seed.
    CHECK(report.models[0].test_predictions == report.models[1].test_predictions);
    CHECK(report.models[0].thresholds.tau == report.models[1].thresholds.tau);
    CHECK(report.models[0].test_flags == report.models[1].test_flags);
}

TEST_CASE("write_report emits the full deterministic tree") {
    TempDir dir("tsad_report");
    json j = tiny_synth_config(dir.file("out"));
    j["models"]["run"].push_back("arima");
    j["models"]["run"].push_back("decomp");
    const ExperimentConfig cfg = parse_config(j, dir.path);
    const RunReport report = run_comparison(cfg);
    write_report(report, nullptr, cfg.output_dir);
    emit_plots(cfg.output_dir);

    for (const char* name :
         {"table.csv", "table.txt", "thresholds.csv", "anomaly_counts.csv",
          "delta_f1_vs_degree.csv", "forecast_vs_actual.csv", "fingerprint.txt",
          "thresholds_graph-lstm.csv", "thresholds_arima.csv",
          "flags_graph-lstm.csv", "model_graph-lstm.json",
          "plots/threshold_tuning.svg", "plots/f1_vs_degree.svg",
          "plots/anomaly_counts.svg", "plots/forecast_vs_actual.svg"})
        CHECK_MESSAGE(fs::exists(fs::path(cfg.output_dir) / name), name);

    const std::string table = read_file(
        (fs::path(cfg.output_dir) / "table.csv").string());
    CHECK(table.rfind("model,precision,recall,f1,tp,fp,fn\n", 0) == 0);
    CHECK(table.find("graph-lstm") != std::string::npos);
    CHECK(table.find("arima") != std::string::npos);

    // A second full pass is byte-identical.
    const std::string first_table = table;
    const std::string first_fvsa = read_file(
        (fs::path(cfg.output_dir) / "forecast_vs_actual.csv").string());
    const RunReport again = run_comparison(cfg);
    TempDir dir2("tsad_report2");
    write_report(again, nullptr, dir2.file("out"));
    CHECK(read_file((fs::path(dir2.file("out")) / "table.csv").string()) ==
          first_table);
    CHECK(read_file(
              (fs::path(dir2.file("out")) / "forecast_vs_actual.csv").string()) ==
          first_fvsa);

    // SVGs are well-formed enough to start with the svg element.
    const std::string svg = read_file(
        (fs::path(cfg.output_dir) / "plots" / "f1_vs_degree.svg").string());
    CHECK(svg.rfind("<svg", 0) == 0);
}

TEST_CASE("run_ablation: swap_factor 0 reproduces the real-graph row") {
    TempDir dir("tsad_ablation");
    json j = tiny_synth_config(dir.file("out"));
    j["ablation"] = {{"enabled", true}, {"swap_factor", 0.0}, {"n_random_seeds", 2}};
    const ExperimentConfig cfg = parse_config(j, dir.path);
    const auto rows = run_ablation(cfg);
    REQUIRE(rows.size() == 3);
    CHECK(rows[0].graph_name == "real");
    for (std::size_t k = 1; k < rows.size(); ++k) {
        CHECK(rows[k].micro.precision == rows[0].micro.precision);
        CHECK(rows[k].micro.recall == rows[0].micro.recall);
        CHECK(rows[k].micro.f1 == rows[0].micro.f1);
    }
}

TEST_CASE("run_ablation requires graph-lstm") {
    TempDir dir("tsad_ablation_bad");
    json j = tiny_synth_config(dir.file("out"));
    j["models"]["run"] = {"lstm-only"};
    const ExperimentConfig cfg = parse_config(j, dir.path);
    CHECK_THROWS_WITH_AS(run_ablation(cfg), doctest::Contains("graph-lstm"),
                         Error);
}

TEST_CASE("checkpoint round-trip preserves the model bit-exactly") {
    TempDir dir("tsad_ckpt");
    TrainConfig tc;
    tc.hidden_size = 5;
    tc.seed = 31;
    Graph g;
    g.n_nodes = 3;
    g.add_edge(0, 1);
    g.add_edge(1, 2);
    GraphLstmModel model =
        make_graph_lstm(3, build_neighbor_table(g), tc, true);
    NormalizationParams norm;
    norm.mean = {1.0, 2.0, 3.0};
    norm.stddev = {0.5, 1.5, 2.5};
    const std::string path = dir.file("model.json");
    save_checkpoint({model, norm, tc, {"a", "b", "c"}}, path);
    const Checkpoint back = load_checkpoint(path);
    CHECK(back.model.params[0].w_input == model.params[0].w_input);
    CHECK(back.model.params[0].u_recurrent == model.params[0].u_recurrent);
    CHECK(back.model.params[0].bias == model.params[0].bias);
    CHECK(back.model.params[0].v_output == model.params[0].v_output);
    CHECK(back.model.params[0].output_bias == model.params[0].output_bias);
    CHECK(back.model.table.neighbors == model.table.neighbors);
    CHECK(back.norm.mean == norm.mean);
    CHECK(back.norm.stddev == norm.stddev);
    CHECK(back.config.seed == tc.seed);
    CHECK(back.node_ids == std::vector<std::string>{"a", "b", "c"});

    SUBCASE("format header is checked") {
        std::ofstream out(dir.file("bad.json"));
        out << "{\"format\": \"something-else\"}\n";
        out.close();
        CHECK_THROWS_WITH_AS(load_checkpoint(dir.file("bad.json")),
                             doctest::Contains("format"), Error);
    }
}
