#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tsad/error.hpp"
#include "tsad/forecast.hpp"
#include "tsad/graph.hpp"
#include "tsad/matrix.hpp"
#include "tsad/panel.hpp"
#include "tsad/rng.hpp"

namespace tsad {

// Recurrent forecaster with optional graph augmentation.
//
// Per node i at step t (teacher forcing, input x = y_{i,t-1}):
//   z        = W x + U h_{i,t-1} + b          gate order [i, f, g, o]
//   i,f,o    = logistic(z slices), g = tanh(z slice)
//   c_{i,t}  = f * c_{i,t-1} + i * g
//   h_{i,t}  = o * tanh(c_{i,t})
//   h~_{i,t} = h_{i,t} + mean_{j in N(i)} h_{j,t-1}   (augmented hidden)
//   yhat_i,t = v . h~_{i,t} + c_out
//
// The recurrent state passed to t+1 is the raw h_{i,t}, not h~. The neighbor
// term averages raw previous hidden states, so influence propagates one hop
// per step and nodes without neighbors reduce exactly to the plain LSTM.
// Disabling augmentation gives the per-node baseline model.

inline double logistic(double z) { return 1.0 / (1.0 + std::exp(-z)); }

struct LstmParams {
    std::size_t hidden = 0;
    std::size_t input = 1;
    Matrix w_input;     // [4H x D]
    Matrix u_recurrent; // [4H x H]
    Vector bias;        // [4H]
    Vector v_output;    // [H]
    double output_bias = 0.0;
};

struct LstmState {
    Vector h;
    Vector c;
};

struct TrainConfig {
    std::size_t hidden_size = 32;
    std::size_t bptt_len = 64;
    double learning_rate = 1e-3;
    std::size_t epochs = 50;
    double grad_clip = 5.0;
    std::size_t patience = 5;
    bool per_node_params = false;
    std::uint64_t seed = 0;
    double adam_beta1 = 0.9;
    double adam_beta2 = 0.999;
    double adam_eps = 1e-8;

    void validate() const {
        if (hidden_size == 0 || bptt_len == 0 || epochs == 0 ||
            !(learning_rate > 0.0) || !(grad_clip > 0.0))
            fail("config", "train settings must be positive");
    }
};

// Xavier-uniform weights, zero biases except the forget-gate block at +1.
inline LstmParams init_lstm_params(std::size_t hidden, SeededRng& rng,
                                   std::size_t input = 1) {
    LstmParams p;
    p.hidden = hidden;
    p.input = input;
    p.w_input = Matrix(4 * hidden, input);
    p.u_recurrent = Matrix(4 * hidden, hidden);
    p.bias.assign(4 * hidden, 0.0);
    p.v_output.assign(hidden, 0.0);

    const double lw = std::sqrt(6.0 / static_cast<double>(input + hidden));
    for (std::size_t k = 0; k < p.w_input.size(); ++k)
        p.w_input.data()[k] = rng.uniform(-lw, lw);
    const double lu = std::sqrt(6.0 / static_cast<double>(2 * hidden));
    for (std::size_t k = 0; k < p.u_recurrent.size(); ++k)
        p.u_recurrent.data()[k] = rng.uniform(-lu, lu);
    const double lv = std::sqrt(6.0 / static_cast<double>(hidden + 1));
    for (std::size_t k = 0; k < hidden; ++k) p.v_output[k] = rng.uniform(-lv, lv);
    for (std::size_t k = hidden; k < 2 * hidden; ++k) p.bias[k] = 1.0;
    return p;
}

// One cell update. `gates` receives the four post-activation slices and the
// caller keeps it for the backward pass.
inline void lstm_cell_forward_raw(const LstmParams& p, const double* x,
                                  const double* h_prev, const double* c_prev,
                                  double* gates, double* c_new, double* tanh_c,
                                  double* h_new) {
    const std::size_t H = p.hidden;
    std::copy(p.bias.begin(), p.bias.end(), gates);
    gemv_add(p.w_input, x, gates);
    gemv_add(p.u_recurrent, h_prev, gates);
    for (std::size_t k = 0; k < H; ++k) gates[k] = logistic(gates[k]);
    for (std::size_t k = H; k < 2 * H; ++k) gates[k] = logistic(gates[k]);
    for (std::size_t k = 2 * H; k < 3 * H; ++k) gates[k] = std::tanh(gates[k]);
    for (std::size_t k = 3 * H; k < 4 * H; ++k) gates[k] = logistic(gates[k]);
    for (std::size_t k = 0; k < H; ++k) {
        c_new[k] = gates[H + k] * c_prev[k] + gates[k] * gates[2 * H + k];
        tanh_c[k] = std::tanh(c_new[k]);
        h_new[k] = gates[3 * H + k] * tanh_c[k];
    }
}

inline LstmState lstm_cell_forward(const LstmParams& p, const Vector& x,
                                   const LstmState& prev) {
    if (x.size() != p.input || prev.h.size() != p.hidden ||
        prev.c.size() != p.hidden)
        fail("numeric", "lstm cell shape mismatch");
    for (double v : x)
        if (!std::isfinite(v)) fail("numeric", "non-finite cell input");
    LstmState next;
    next.h.assign(p.hidden, 0.0);
    next.c.assign(p.hidden, 0.0);
    Vector gates(4 * p.hidden), tanh_c(p.hidden);
    lstm_cell_forward_raw(p, x.data(), prev.h.data(), prev.c.data(),
                          gates.data(), next.c.data(), tanh_c.data(),
                          next.h.data());
    return next;
}

struct GraphLstmModel {
    std::size_t n_nodes = 0;
    std::size_t hidden = 0;
    bool augmented = true;        // false => independent per-node baseline
    bool per_node_params = false; // one parameter set per node instead of shared
    std::vector<LstmParams> params; // size 1 (shared) or n_nodes
    NeighborTable table;

    const LstmParams& params_for(std::size_t node) const {
        return per_node_params ? params[node] : params[0];
    }
    LstmParams& params_for(std::size_t node) {
        return per_node_params ? params[node] : params[0];
    }
};

inline GraphLstmModel make_graph_lstm(std::size_t n_nodes,
                                      const NeighborTable& table,
                                      const TrainConfig& cfg, bool augmented) {
    cfg.validate();
    if (table.n_nodes() != n_nodes)
        fail("model", "neighbor table does not match node count");
    GraphLstmModel model;
    model.n_nodes = n_nodes;
    model.hidden = cfg.hidden_size;
    model.augmented = augmented;
    model.per_node_params = cfg.per_node_params;
    model.table = table;
    SeededRng rng(child_seed(cfg.seed, 0x1457u));
    const std::size_t sets = cfg.per_node_params ? n_nodes : 1;
    model.params.reserve(sets);
    for (std::size_t s = 0; s < sets; ++s)
        model.params.push_back(init_lstm_params(cfg.hidden_size, rng));
    return model;
}

// Hidden/cell states for every node.
struct ModelState {
    Matrix h; // [n x H]
    Matrix c;

    static ModelState zeros(std::size_t n, std::size_t hidden) {
        return ModelState{Matrix(n, hidden), Matrix(n, hidden)};
    }
};

// Everything the backward pass needs from one forward window.
struct WindowCache {
    std::size_t len = 0;
    std::size_t n = 0;
    std::size_t hidden = 0;
    Matrix inputs;               // [n x L]
    std::vector<Matrix> gates;   // per step [n x 4H]
    std::vector<Matrix> c;       // per step [n x H]
    std::vector<Matrix> tanh_c;  // per step [n x H]
    std::vector<Matrix> h;       // per step [n x H] raw hidden
    std::vector<Matrix> h_aug;   // per step [n x H] augmented hidden
    Matrix yhat;                 // [n x L]
    ModelState init;
};

// Teacher-forced forward over a window of inputs. inputs(i, s) is the value
// fed to node i at window step s (i.e. y_{i, t0+s-1}); yhat(i, s) predicts
// y_{i, t0+s}. Returns the final raw states for carrying into the next
// window.
inline ModelState graph_forward(const GraphLstmModel& model,
                                const Matrix& inputs, const ModelState& init,
                                WindowCache& cache) {
    const std::size_t n = model.n_nodes;
    const std::size_t H = model.hidden;
    const std::size_t len = inputs.cols();
    if (inputs.rows() != n) fail("model", "window node count mismatch");

    cache.len = len;
    cache.n = n;
    cache.hidden = H;
    cache.inputs = inputs;
    cache.gates.assign(len, Matrix(n, 4 * H));
    cache.c.assign(len, Matrix(n, H));
    cache.tanh_c.assign(len, Matrix(n, H));
    cache.h.assign(len, Matrix(n, H));
    cache.h_aug.assign(len, Matrix(n, H));
    cache.yhat = Matrix(n, len);
    cache.init = init;

    const Matrix* h_prev = &init.h;
    const Matrix* c_prev = &init.c;
    Vector nb(H);
    for (std::size_t s = 0; s < len; ++s) {
        Matrix& h_s = cache.h[s];
        Matrix& c_s = cache.c[s];
        for (std::size_t i = 0; i < n; ++i) {
            const LstmParams& p = model.params_for(i);
            const double x = inputs(i, s);
            if (!std::isfinite(x))
                fail("numeric", "non-finite input at window step " + std::to_string(s));
            lstm_cell_forward_raw(p, &x, h_prev->row_ptr(i), c_prev->row_ptr(i),
                                  cache.gates[s].row_ptr(i), c_s.row_ptr(i),
                                  cache.tanh_c[s].row_ptr(i), h_s.row_ptr(i));
        }
        for (std::size_t i = 0; i < n; ++i) {
            const LstmParams& p = model.params_for(i);
            double* aug = cache.h_aug[s].row_ptr(i);
            const double* raw = h_s.row_ptr(i);
            if (model.augmented) {
                neighbor_mean(*h_prev, model.table, i, aug);
                for (std::size_t k = 0; k < H; ++k) aug[k] += raw[k];
            } else {
                std::copy(raw, raw + H, aug);
            }
            cache.yhat(i, s) = dot(p.v_output.data(), aug, H) + p.output_bias;
        }
        h_prev = &cache.h[s];
        c_prev = &cache.c[s];
    }
    if (len == 0) return init;
    return ModelState{cache.h[len - 1], cache.c[len - 1]};
}

// Convenience overload when the caller only needs predictions.
inline std::pair<Matrix, ModelState> graph_forward(const GraphLstmModel& model,
                                                   const Matrix& inputs,
                                                   const ModelState& init) {
    WindowCache cache;
    ModelState st = graph_forward(model, inputs, init, cache);
    return {std::move(cache.yhat), std::move(st)};
}

struct ParamGrads {
    Matrix w_input;
    Matrix u_recurrent;
    Vector bias;
    Vector v_output;
    double output_bias = 0.0;

    static ParamGrads zeros_like(const LstmParams& p) {
        ParamGrads g;
        g.w_input = Matrix(p.w_input.rows(), p.w_input.cols());
        g.u_recurrent = Matrix(p.u_recurrent.rows(), p.u_recurrent.cols());
        g.bias.assign(p.bias.size(), 0.0);
        g.v_output.assign(p.v_output.size(), 0.0);
        return g;
    }
};

// Mean squared error over valid cells of the window; valid(i, s) pairs with
// yhat(i, s). Returns the loss and accumulates parameter gradients through
// time, including the path through the neighbor-mean term into the
// neighbors' previous states. Gradients are truncated at the window start.
// Accumulation order is fixed (time backward, node index ascending) so runs
// are bit-reproducible.
inline double backward_window(const GraphLstmModel& model,
                              const WindowCache& cache, const Matrix& targets,
                              const Mask& valid,
                              std::vector<ParamGrads>& grads) {
    const std::size_t n = cache.n;
    const std::size_t H = cache.hidden;
    const std::size_t len = cache.len;

    std::size_t m_valid = 0;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t s = 0; s < len; ++s)
            if (valid(i, s)) ++m_valid;
    if (m_valid == 0) return 0.0;

    double loss = 0.0;
    const double inv_m = 1.0 / static_cast<double>(m_valid);

    Matrix dh_next(n, H);
    Matrix dc_next(n, H);
    Vector dz(4 * H);
    Vector dhnew(H);

    for (std::size_t s = len; s-- > 0;) {
        const Matrix& h_prev = (s == 0) ? cache.init.h : cache.h[s - 1];
        const Matrix& c_prev = (s == 0) ? cache.init.c : cache.c[s - 1];
        Matrix dh_prev(n, H);
        Matrix dc_prev(n, H);

        for (std::size_t i = 0; i < n; ++i) {
            const LstmParams& p = model.params_for(i);
            ParamGrads& g = grads[model.per_node_params ? i : 0];

            double dy = 0.0;
            if (valid(i, s)) {
                const double err = cache.yhat(i, s) - targets(i, s);
                loss += err * err * inv_m;
                dy = 2.0 * err * inv_m;
            }

            // Output layer: yhat = v . h_aug + c_out
            const double* aug = cache.h_aug[s].row_ptr(i);
            for (std::size_t k = 0; k < H; ++k) {
                g.v_output[k] += dy * aug[k];
                dhnew[k] = dy * p.v_output[k];
            }
            g.output_bias += dy;

            // Augmented hidden feeds only the output; the raw state recurs.
            double* dh = dh_next.row_ptr(i);
            for (std::size_t k = 0; k < H; ++k) dh[k] += dhnew[k];

            // Neighbor-mean path into the previous step's raw states.
            if (model.augmented) {
                const auto& nbrs = model.table.neighbors[i];
                if (!nbrs.empty()) {
                    const double inv_deg = 1.0 / static_cast<double>(nbrs.size());
                    for (std::size_t j : nbrs) {
                        double* row = dh_prev.row_ptr(j);
                        for (std::size_t k = 0; k < H; ++k)
                            row[k] += dhnew[k] * inv_deg;
                    }
                }
            }

            // Cell backward.
            const double* gates = cache.gates[s].row_ptr(i);
            const double* tanh_c = cache.tanh_c[s].row_ptr(i);
            const double* cp = c_prev.row_ptr(i);
            const double* dcn = dc_next.row_ptr(i);
            double* dcp = dc_prev.row_ptr(i);
            for (std::size_t k = 0; k < H; ++k) {
                const double gi = gates[k];
                const double gf = gates[H + k];
                const double gg = gates[2 * H + k];
                const double go = gates[3 * H + k];
                const double d_o = dh[k] * tanh_c[k];
                const double dc = dh[k] * go * (1.0 - tanh_c[k] * tanh_c[k]) + dcn[k];
                const double d_i = dc * gg;
                const double d_f = dc * cp[k];
                const double d_g = dc * gi;
                dz[k] = d_i * gi * (1.0 - gi);
                dz[H + k] = d_f * gf * (1.0 - gf);
                dz[2 * H + k] = d_g * (1.0 - gg * gg);
                dz[3 * H + k] = d_o * go * (1.0 - go);
                dcp[k] = dc * gf;
            }
            const double x = cache.inputs(i, s);
            for (std::size_t k = 0; k < 4 * H; ++k) {
                g.w_input(k, 0) += dz[k] * x;
                g.bias[k] += dz[k];
            }
            outer_add(g.u_recurrent, dz.data(), h_prev.row_ptr(i));
            gemv_t_add(p.u_recurrent, dz.data(), dh_prev.row_ptr(i));
        }
        dh_next = std::move(dh_prev);
        dc_next = std::move(dc_prev);
    }
    return loss;
}

// Applies fn to every parameter tensor of the model, in a fixed order.
template <typename Fn>
inline void for_each_param_span(GraphLstmModel& model, Fn&& fn) {
    for (auto& p : model.params) {
        fn(p.w_input.data(), p.w_input.size());
        fn(p.u_recurrent.data(), p.u_recurrent.size());
        fn(p.bias.data(), p.bias.size());
        fn(p.v_output.data(), p.v_output.size());
        fn(&p.output_bias, std::size_t{1});
    }
}

template <typename Fn>
inline void for_each_grad_span(std::vector<ParamGrads>& grads, Fn&& fn) {
    for (auto& g : grads) {
        fn(g.w_input.data(), g.w_input.size());
        fn(g.u_recurrent.data(), g.u_recurrent.size());
        fn(g.bias.data(), g.bias.size());
        fn(g.v_output.data(), g.v_output.size());
        fn(&g.output_bias, std::size_t{1});
    }
}

namespace detail {

struct AdamState {
    std::vector<ParamGrads> m;
    std::vector<ParamGrads> v;
    std::size_t step = 0;
};

inline std::vector<ParamGrads> zero_grads(const GraphLstmModel& model) {
    std::vector<ParamGrads> grads;
    grads.reserve(model.params.size());
    for (const auto& p : model.params) grads.push_back(ParamGrads::zeros_like(p));
    return grads;
}

inline void adam_update(GraphLstmModel& model, std::vector<ParamGrads>& grads,
                        AdamState& adam, const TrainConfig& cfg) {
    // Global-norm gradient clipping.
    double sq = 0.0;
    for_each_grad_span(grads, [&](double* g, std::size_t len) {
        for (std::size_t k = 0; k < len; ++k) sq += g[k] * g[k];
    });
    const double norm = std::sqrt(sq);
    if (norm > cfg.grad_clip) {
        const double scale = cfg.grad_clip / norm;
        for_each_grad_span(grads, [&](double* g, std::size_t len) {
            for (std::size_t k = 0; k < len; ++k) g[k] *= scale;
        });
    }

    ++adam.step;
    const double bc1 = 1.0 - std::pow(cfg.adam_beta1, static_cast<double>(adam.step));
    const double bc2 = 1.0 - std::pow(cfg.adam_beta2, static_cast<double>(adam.step));

    for (std::size_t set = 0; set < grads.size(); ++set) {
        auto update = [&](double* theta, double* g, double* m, double* v,
                          std::size_t len) {
            for (std::size_t k = 0; k < len; ++k) {
                m[k] = cfg.adam_beta1 * m[k] + (1.0 - cfg.adam_beta1) * g[k];
                v[k] = cfg.adam_beta2 * v[k] + (1.0 - cfg.adam_beta2) * g[k] * g[k];
                const double mhat = m[k] / bc1;
                const double vhat = v[k] / bc2;
                theta[k] -= cfg.learning_rate * mhat / (std::sqrt(vhat) + cfg.adam_eps);
            }
        };
        LstmParams& p = model.params[set];
        ParamGrads& g = grads[set];
        ParamGrads& m = adam.m[set];
        ParamGrads& v = adam.v[set];
        update(p.w_input.data(), g.w_input.data(), m.w_input.data(),
               v.w_input.data(), p.w_input.size());
        update(p.u_recurrent.data(), g.u_recurrent.data(), m.u_recurrent.data(),
               v.u_recurrent.data(), p.u_recurrent.size());
        update(p.bias.data(), g.bias.data(), m.bias.data(), v.bias.data(),
               p.bias.size());
        update(p.v_output.data(), g.v_output.data(), m.v_output.data(),
               v.v_output.data(), p.v_output.size());
        update(&p.output_bias, &g.output_bias, &m.output_bias, &v.output_bias, 1);
    }
}

} // namespace detail

// Teacher-forced pass over [1, end). Emits yhat for t in [emit.begin,
// emit.end) through `sink(node, t, yhat)`. Prediction at t consumes only
// values strictly before t.
template <typename Sink>
inline void run_forward(const GraphLstmModel& model, const Matrix& filled,
                        TimeRange emit, Sink&& sink) {
    const std::size_t n = model.n_nodes;
    const std::size_t H = model.hidden;
    if (emit.begin < 1) fail("model", "cannot predict t=0: no history");
    ModelState state = ModelState::zeros(n, H);
    Matrix h_prev = state.h;
    Matrix c_prev = state.c;
    Matrix h_now(n, H), c_now(n, H);
    Vector gates(4 * H), tanh_c(H), aug(H);
    for (std::size_t t = 1; t < emit.end; ++t) {
        for (std::size_t i = 0; i < n; ++i) {
            const LstmParams& p = model.params_for(i);
            const double x = filled(i, t - 1);
            lstm_cell_forward_raw(p, &x, h_prev.row_ptr(i), c_prev.row_ptr(i),
                                  gates.data(), c_now.row_ptr(i), tanh_c.data(),
                                  h_now.row_ptr(i));
        }
        if (t >= emit.begin) {
            for (std::size_t i = 0; i < n; ++i) {
                const LstmParams& p = model.params_for(i);
                const double* raw = h_now.row_ptr(i);
                if (model.augmented) {
                    neighbor_mean(h_prev, model.table, i, aug.data());
                    for (std::size_t k = 0; k < H; ++k) aug[k] += raw[k];
                    sink(i, t, dot(p.v_output.data(), aug.data(), H) + p.output_bias);
                } else {
                    sink(i, t, dot(p.v_output.data(), raw, H) + p.output_bias);
                }
            }
        }
        std::swap(h_prev, h_now);
        std::swap(c_prev, c_now);
    }
}

struct EpochStats {
    double train_mse = 0.0;
    double val_mse = 0.0;
};

struct TrainResult {
    std::vector<EpochStats> curve;
    std::size_t best_epoch = 0;
};

namespace detail {

// Validation MSE of the current parameters, teacher-forced from t=1.
inline double eval_mse(const GraphLstmModel& model, const Panel& panel,
                       const Matrix& filled, TimeRange range) {
    double sq = 0.0;
    std::size_t count = 0;
    TimeRange emit{std::max<std::size_t>(range.begin, 1), range.end};
    run_forward(model, filled, emit, [&](std::size_t i, std::size_t t, double yhat) {
        if (!panel.observed(i, t) || panel.labeled(i, t)) return;
        const double err = yhat - panel.values(i, t);
        sq += err * err;
        ++count;
    });
    return count == 0 ? 0.0 : sq / static_cast<double>(count);
}

} // namespace detail

// Truncated BPTT with Adam. Windows advance sequentially over the training
// range with carried state; each window is one optimizer step. Loss counts
// observed positions that are not labeled anomalous ("train on mostly
// anomaly-free history"). Early stopping tracks validation MSE with the
// configured patience and restores the best parameters.
inline TrainResult train(GraphLstmModel& model, const Panel& panel,
                         TimeRange train_range, const TrainConfig& cfg,
                         TimeRange val_range = {0, 0}) {
    cfg.validate();
    if (train_range.length() < cfg.bptt_len + 1)
        fail("training", "train range shorter than one BPTT window");

    const Matrix filled = fill_forward(panel);
    const std::size_t n = model.n_nodes;
    const std::size_t first_target = std::max<std::size_t>(train_range.begin + 1, 1);

    detail::AdamState adam;
    adam.m = detail::zero_grads(model);
    adam.v = detail::zero_grads(model);

    TrainResult result;
    double best_val = std::numeric_limits<double>::infinity();
    std::vector<LstmParams> best_params = model.params;
    std::size_t since_best = 0;
    const bool use_val = val_range.length() > 0;

    WindowCache cache;
    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        ModelState state = ModelState::zeros(n, model.hidden);
        double epoch_sq = 0.0;
        std::size_t epoch_count = 0;

        for (std::size_t t0 = first_target; t0 < train_range.end;
             t0 += cfg.bptt_len) {
            const std::size_t t1 = std::min(t0 + cfg.bptt_len, train_range.end);
            const std::size_t len = t1 - t0;
            Matrix inputs(n, len);
            Matrix targets(n, len);
            Mask valid(n, len);
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t s = 0; s < len; ++s) {
                    inputs(i, s) = filled(i, t0 + s - 1);
                    targets(i, s) = filled(i, t0 + s);
                    valid(i, s) = panel.observed(i, t0 + s) &&
                                  !panel.labeled(i, t0 + s);
                    if (valid(i, s)) ++epoch_count;
                }
            ModelState next = graph_forward(model, inputs, state, cache);
            auto grads = detail::zero_grads(model);
            const double window_loss = backward_window(model, cache, targets,
                                                       valid, grads);
            if (!std::isfinite(window_loss))
                fail("training", "loss diverged at epoch " + std::to_string(epoch));
            std::size_t window_valid = 0;
            for (std::size_t k = 0; k < valid.size(); ++k)
                if (valid.data()[k]) ++window_valid;
            epoch_sq += window_loss * static_cast<double>(window_valid);
            detail::adam_update(model, grads, adam, cfg);
            state = std::move(next);
        }

        EpochStats stats;
        stats.train_mse =
            epoch_count == 0 ? 0.0 : epoch_sq / static_cast<double>(epoch_count);
        if (use_val) {
            stats.val_mse = detail::eval_mse(model, panel, filled, val_range);
            if (stats.val_mse < best_val) {
                best_val = stats.val_mse;
                best_params = model.params;
                result.best_epoch = epoch;
                since_best = 0;
            } else if (++since_best > cfg.patience) {
                result.curve.push_back(stats);
                break;
            }
        } else {
            result.best_epoch = epoch;
        }
        result.curve.push_back(stats);
    }
    if (use_val) model.params = std::move(best_params);
    return result;
}

// One prediction per (node, t) for t in eval_range, warmed up over all
// history before it; uses only values strictly before t.
inline ForecastSet forecast_one_step(const GraphLstmModel& model,
                                     const Panel& panel, TimeRange eval_range) {
    if (eval_range.begin < 1)
        fail("model", "eval range must start at t >= 1 for one-step forecasts");
    if (eval_range.end > panel.n_steps())
        fail("model", "eval range exceeds panel length");
    const Matrix filled = fill_forward(panel);
    ForecastSet out;
    out.start = eval_range.begin;
    out.predictions = Matrix(model.n_nodes, eval_range.length());
    run_forward(model, filled, eval_range,
                [&](std::size_t i, std::size_t t, double yhat) {
                    out.predictions(i, t - eval_range.begin) = yhat;
                });
    return out;
}

} // namespace tsad
