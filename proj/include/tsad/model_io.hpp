#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "tsad/error.hpp"
#include "tsad/lstm.hpp"
#include "tsad/panel.hpp"

namespace tsad {

// Versioned JSON checkpoint: shapes, gate ordering tag, parameters,
// normalization, and the training config. JSON doubles round-trip
// losslessly, so save/load reproduces the model bit-exactly.
inline constexpr const char* kCheckpointFormat = "tsad-checkpoint-v1";
inline constexpr const char* kGateOrder = "ifgo";

namespace detail {

inline nlohmann::json params_to_json(const LstmParams& p) {
    nlohmann::json j;
    j["hidden"] = p.hidden;
    j["input"] = p.input;
    j["w_input"] = std::vector<double>(p.w_input.data(),
                                       p.w_input.data() + p.w_input.size());
    j["u_recurrent"] = std::vector<double>(
        p.u_recurrent.data(), p.u_recurrent.data() + p.u_recurrent.size());
    j["bias"] = p.bias;
    j["v_output"] = p.v_output;
    j["output_bias"] = p.output_bias;
    return j;
}

inline LstmParams params_from_json(const nlohmann::json& j) {
    LstmParams p;
    p.hidden = j.at("hidden").get<std::size_t>();
    p.input = j.at("input").get<std::size_t>();
    const auto w = j.at("w_input").get<std::vector<double>>();
    const auto u = j.at("u_recurrent").get<std::vector<double>>();
    if (w.size() != 4 * p.hidden * p.input ||
        u.size() != 4 * p.hidden * p.hidden)
        fail("checkpoint", "parameter shapes inconsistent with hidden size");
    p.w_input = Matrix(4 * p.hidden, p.input);
    std::copy(w.begin(), w.end(), p.w_input.data());
    p.u_recurrent = Matrix(4 * p.hidden, p.hidden);
    std::copy(u.begin(), u.end(), p.u_recurrent.data());
    p.bias = j.at("bias").get<std::vector<double>>();
    p.v_output = j.at("v_output").get<std::vector<double>>();
    p.output_bias = j.at("output_bias").get<double>();
    if (p.bias.size() != 4 * p.hidden || p.v_output.size() != p.hidden)
        fail("checkpoint", "bias/output shapes inconsistent with hidden size");
    return p;
}

} // namespace detail

struct Checkpoint {
    GraphLstmModel model;
    NormalizationParams norm;
    TrainConfig config;
    std::vector<std::string> node_ids;
};

inline void save_checkpoint(const Checkpoint& ckpt, const std::string& path) {
    nlohmann::json j;
    j["format"] = kCheckpointFormat;
    j["gate_order"] = kGateOrder;
    j["augmented"] = ckpt.model.augmented;
    j["per_node_params"] = ckpt.model.per_node_params;
    j["hidden"] = ckpt.model.hidden;
    j["n_nodes"] = ckpt.model.n_nodes;
    j["node_ids"] = ckpt.node_ids;
    j["params"] = nlohmann::json::array();
    for (const auto& p : ckpt.model.params)
        j["params"].push_back(detail::params_to_json(p));
    nlohmann::json edges = nlohmann::json::array();
    for (std::size_t i = 0; i < ckpt.model.table.n_nodes(); ++i)
        edges.push_back(ckpt.model.table.neighbors[i]);
    j["neighbors"] = edges;
    j["normalization"] = {{"mean", ckpt.norm.mean}, {"stddev", ckpt.norm.stddev}};
    j["train_config"] = {{"hidden_size", ckpt.config.hidden_size},
                         {"bptt_len", ckpt.config.bptt_len},
                         {"learning_rate", ckpt.config.learning_rate},
                         {"epochs", ckpt.config.epochs},
                         {"grad_clip", ckpt.config.grad_clip},
                         {"patience", ckpt.config.patience},
                         {"per_node_params", ckpt.config.per_node_params},
                         {"seed", ckpt.config.seed}};
    std::ofstream out(path);
    if (!out) fail("io", "cannot write " + path);
    out << j.dump(2) << '\n';
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path);
    if (!in) fail("io", "cannot read " + path);
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        fail("checkpoint", path + ": " + e.what());
    }
    if (j.value("format", "") != kCheckpointFormat)
        fail("checkpoint", path + ": unsupported format header");
    if (j.value("gate_order", "") != kGateOrder)
        fail("checkpoint", path + ": unexpected gate ordering tag");

    Checkpoint ckpt;
    ckpt.model.augmented = j.at("augmented").get<bool>();
    ckpt.model.per_node_params = j.at("per_node_params").get<bool>();
    ckpt.model.hidden = j.at("hidden").get<std::size_t>();
    ckpt.model.n_nodes = j.at("n_nodes").get<std::size_t>();
    ckpt.node_ids = j.at("node_ids").get<std::vector<std::string>>();
    for (const auto& pj : j.at("params"))
        ckpt.model.params.push_back(detail::params_from_json(pj));
    const std::size_t expected = ckpt.model.per_node_params ? ckpt.model.n_nodes : 1;
    if (ckpt.model.params.size() != expected)
        fail("checkpoint", path + ": wrong parameter set count");
    ckpt.model.table.neighbors =
        j.at("neighbors").get<std::vector<std::vector<std::size_t>>>();
    if (ckpt.model.table.n_nodes() != ckpt.model.n_nodes)
        fail("checkpoint", path + ": neighbor table node count mismatch");
    ckpt.norm.mean = j.at("normalization").at("mean").get<std::vector<double>>();
    ckpt.norm.stddev =
        j.at("normalization").at("stddev").get<std::vector<double>>();
    const auto& tc = j.at("train_config");
    ckpt.config.hidden_size = tc.at("hidden_size").get<std::size_t>();
    ckpt.config.bptt_len = tc.at("bptt_len").get<std::size_t>();
    ckpt.config.learning_rate = tc.at("learning_rate").get<double>();
    ckpt.config.epochs = tc.at("epochs").get<std::size_t>();
    ckpt.config.grad_clip = tc.at("grad_clip").get<double>();
    ckpt.config.patience = tc.at("patience").get<std::size_t>();
    ckpt.config.per_node_params = tc.at("per_node_params").get<bool>();
    ckpt.config.seed = tc.at("seed").get<std::uint64_t>();
    return ckpt;
}

} // namespace tsad
