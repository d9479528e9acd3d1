#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <utility>
#include <vector>

#include "dovs/errors.hpp"
#include "dovs/rng.hpp"
#include "dovs/velocity_grid.hpp"

namespace dovs {

/// Layer sizes of the Q-network. The topology is fixed: a conv stream over
/// the 20x20 grid (3x3x16 stride 1, 3x3x32 stride 2), a dense stream over the
/// 8 situation scalars, a concatenated linear trunk, and dueling value /
/// advantage heads. All arithmetic is 64-bit.
struct NetConfig {
    int conv1_filters = 16;
    int conv2_filters = 32;
    int situation_dense = 64;
    int trunk_size = 256;
    int head_hidden = 128;
    int num_actions = 8;
};

inline std::uint64_t fnv1a64(const void* data, size_t len, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::uint64_t architecture_hash(const NetConfig& cfg) {
    const std::string desc = "grid20x20;conv3x3x" + std::to_string(cfg.conv1_filters) +
                             "s1;conv3x3x" + std::to_string(cfg.conv2_filters) + "s2;sit8x" +
                             std::to_string(cfg.situation_dense) + ";trunk" +
                             std::to_string(cfg.trunk_size) + ";head" +
                             std::to_string(cfg.head_hidden) + ";act" +
                             std::to_string(cfg.num_actions) + ";f64";
    return fnv1a64(desc.data(), desc.size());
}

/// Dueling aggregation: Q_a = V + A_a - mean(A).
inline std::array<double, 8> dueling_aggregate(double value, const std::array<double, 8>& adv) {
    double mean = 0.0;
    for (double a : adv) mean += a;
    mean /= 8.0;
    std::array<double, 8> q;
    for (int i = 0; i < 8; ++i) q[i] = value + adv[i] - mean;
    return q;
}

/// Huber loss and its derivative; the gradient is clamped to [-delta, delta].
inline std::pair<double, double> huber_loss(double error, double delta = 1.0) {
    const double a = std::abs(error);
    if (a <= delta) return {0.5 * error * error, error};
    return {delta * (a - 0.5 * delta), error > 0.0 ? delta : -delta};
}

namespace detail {

// Y[b][o] = bias[o] + sum_k X[b][k] * WT[k][o], accumulated in ascending k for
// every code path, so results are identical for any batch size or blocking.
inline void affine_forward(const double* X, const double* WT, const double* bias, double* Y,
                           int B, int K, int O) {
    int b = 0;
    for (; b + 4 <= B; b += 4) {
        const double* x0 = X + static_cast<size_t>(b) * K;
        const double* x1 = x0 + K;
        const double* x2 = x1 + K;
        const double* x3 = x2 + K;
        double* y0 = Y + static_cast<size_t>(b) * O;
        double* y1 = y0 + O;
        double* y2 = y1 + O;
        double* y3 = y2 + O;
        for (int o = 0; o < O; ++o) {
            const double bo = bias ? bias[o] : 0.0;
            y0[o] = bo; y1[o] = bo; y2[o] = bo; y3[o] = bo;
        }
        for (int k = 0; k < K; ++k) {
            const double a0 = x0[k], a1 = x1[k], a2 = x2[k], a3 = x3[k];
            const double* w = WT + static_cast<size_t>(k) * O;
            for (int o = 0; o < O; ++o) {
                const double wv = w[o];
                y0[o] += a0 * wv;
                y1[o] += a1 * wv;
                y2[o] += a2 * wv;
                y3[o] += a3 * wv;
            }
        }
    }
    for (; b < B; ++b) {
        const double* x = X + static_cast<size_t>(b) * K;
        double* y = Y + static_cast<size_t>(b) * O;
        for (int o = 0; o < O; ++o) y[o] = bias ? bias[o] : 0.0;
        for (int k = 0; k < K; ++k) {
            const double xk = x[k];
            const double* w = WT + static_cast<size_t>(k) * O;
            for (int o = 0; o < O; ++o) y[o] += xk * w[o];
        }
    }
}

// dX[b][k] = sum_o dY[b][o] * W[o][k]   (W row-major [O][K])
inline void affine_backward_data(const double* dY, const double* W, double* dX, int B, int K,
                                 int O) {
    for (int b = 0; b < B; ++b) {
        const double* dy = dY + static_cast<size_t>(b) * O;
        double* dx = dX + static_cast<size_t>(b) * K;
        std::fill(dx, dx + K, 0.0);
        for (int o = 0; o < O; ++o) {
            const double g = dy[o];
            if (g == 0.0) continue;
            const double* w = W + static_cast<size_t>(o) * K;
            for (int k = 0; k < K; ++k) dx[k] += g * w[k];
        }
    }
}

// dW[o][k] += sum_b dY[b][o] * X[b][k];  db[o] += sum_b dY[b][o]
inline void affine_backward_param(const double* dY, const double* X, double* dW, double* db,
                                  int B, int K, int O) {
    for (int b = 0; b < B; ++b) {
        const double* dy = dY + static_cast<size_t>(b) * O;
        const double* x = X + static_cast<size_t>(b) * K;
        for (int o = 0; o < O; ++o) {
            const double g = dy[o];
            db[o] += g;
            if (g == 0.0) continue;
            double* w = dW + static_cast<size_t>(o) * K;
            for (int k = 0; k < K; ++k) w[k] += g * x[k];
        }
    }
}

inline void relu_inplace(double* x, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (x[i] < 0.0) x[i] = 0.0;
}

// d[i] = act[i] > 0 ? d[i] : 0  (post-activation mask)
inline void relu_backward_inplace(double* d, const double* act, size_t n) {
    for (size_t i = 0; i < n; ++i)
        if (act[i] <= 0.0) d[i] = 0.0;
}

}  // namespace detail

/// Activation cache for one forward pass; reused across steps to avoid
/// reallocation. All post-ReLU activations are retained for the backward
/// pass.
struct Workspace {
    int batch = 0;
    std::vector<double> col1, a1, col2, a2;
    std::vector<double> in_sit, a_sit, concat, a_trunk;
    std::vector<double> a_v1, v_out, a_a1, adv_out, q;
    // backward scratch
    std::vector<double> d_v, d_adv, d_av1, d_aa1, d_trunk, d_trunk2, d_concat, d_a2, d_col2,
        d_a1;
};

/// The Q-network parameter container. Parameters live in one flat 64-bit
/// vector; dense/conv weights additionally keep a transposed copy used by the
/// forward kernels, refreshed lazily whenever the canonical parameters are
/// touched.
class QNetwork {
public:
    struct ParamEntry {
        std::string name;
        size_t offset;  // into the flat parameter vector
        std::vector<int> shape;
        size_t size() const {
            size_t n = 1;
            for (int d : shape) n *= static_cast<size_t>(d);
            return n;
        }
    };

    explicit QNetwork(NetConfig cfg = {}) : cfg_(cfg) {
        conv1_ = add_layer("conv1", cfg.conv1_filters, 9);
        conv2_ = add_layer("conv2", cfg.conv2_filters, 9 * cfg.conv1_filters);
        sit_ = add_layer("situation", cfg.situation_dense, kSituationSize);
        const int conv_out = 8 * 8 * cfg.conv2_filters;
        trunk_ = add_layer("trunk", cfg.trunk_size, conv_out + cfg.situation_dense);
        value1_ = add_layer("value1", cfg.head_hidden, cfg.trunk_size);
        value2_ = add_layer("value2", 1, cfg.head_hidden);
        adv1_ = add_layer("advantage1", cfg.head_hidden, cfg.trunk_size);
        adv2_ = add_layer("advantage2", cfg.num_actions, cfg.head_hidden);
        params_.assign(total_, 0.0);
        derived_.assign(derived_total_, 0.0);
        dirty_ = true;
    }

    const NetConfig& config() const { return cfg_; }
    std::uint64_t arch_hash() const { return architecture_hash(cfg_); }
    size_t param_count() const { return total_; }
    const std::vector<ParamEntry>& manifest() const { return manifest_; }

    const std::vector<double>& params() const { return params_; }
    std::vector<double>& params() {
        dirty_ = true;
        return params_;
    }

    /// He-style uniform fan-in initialization; biases start at zero.
    void init_weights(Rng& rng) {
        for (const auto& layer : layers_) {
            const double limit = std::sqrt(6.0 / layer.in);
            double* w = params_.data() + layer.w_off;
            for (size_t i = 0; i < static_cast<size_t>(layer.out) * layer.in; ++i)
                w[i] = rng.uniform(-limit, limit);
            std::fill_n(params_.data() + layer.b_off, layer.out, 0.0);
        }
        dirty_ = true;
    }

    /// Batched forward pass; states is batch x 408 row-major. Q-values land
    /// in ws.q (batch x num_actions).
    void forward(const double* states, int batch, Workspace& ws) const {
        if (batch <= 0) throw ShapeMismatch("QNetwork::forward: empty batch");
        if (dirty_) refresh_derived();
        resize_ws(ws, batch);
        const int c1 = cfg_.conv1_filters;
        const int c2 = cfg_.conv2_filters;

        // conv1: 20x20x1 -> 18x18xc1 (valid, stride 1), via im2col rows.
        for (int b = 0; b < batch; ++b) {
            const double* grid = states + static_cast<size_t>(b) * kStateSize;
            double* col = ws.col1.data() + static_cast<size_t>(b) * 324 * 9;
            for (int y = 0; y < 18; ++y)
                for (int x = 0; x < 18; ++x) {
                    double* row = col + (static_cast<size_t>(y) * 18 + x) * 9;
                    for (int dy = 0; dy < 3; ++dy)
                        std::memcpy(row + dy * 3, grid + (y + dy) * 20 + x, 3 * sizeof(double));
                }
        }
        affine(conv1_, ws.col1.data(), ws.a1.data(), batch * 324);
        detail::relu_inplace(ws.a1.data(), ws.a1.size());

        // conv2: 18x18xc1 -> 8x8xc2 (valid, stride 2). HWC layout keeps each
        // kernel row contiguous (3 pixels x c1 channels).
        const int krow = 3 * c1;
        for (int b = 0; b < batch; ++b) {
            const double* a1 = ws.a1.data() + static_cast<size_t>(b) * 324 * c1;
            double* col = ws.col2.data() + static_cast<size_t>(b) * 64 * (9 * c1);
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    double* row = col + (static_cast<size_t>(y) * 8 + x) * (9 * c1);
                    for (int dy = 0; dy < 3; ++dy)
                        std::memcpy(row + dy * krow,
                                    a1 + (static_cast<size_t>(2 * y + dy) * 18 + 2 * x) * c1,
                                    krow * sizeof(double));
                }
        }
        affine(conv2_, ws.col2.data(), ws.a2.data(), batch * 64);
        detail::relu_inplace(ws.a2.data(), ws.a2.size());

        // situation stream
        for (int b = 0; b < batch; ++b)
            std::memcpy(ws.in_sit.data() + static_cast<size_t>(b) * kSituationSize,
                        states + static_cast<size_t>(b) * kStateSize + kGridCells,
                        kSituationSize * sizeof(double));
        affine(sit_, ws.in_sit.data(), ws.a_sit.data(), batch);
        detail::relu_inplace(ws.a_sit.data(), ws.a_sit.size());

        // concat -> trunk
        const int conv_out = 64 * c2;
        const int cat = conv_out + cfg_.situation_dense;
        for (int b = 0; b < batch; ++b) {
            double* dst = ws.concat.data() + static_cast<size_t>(b) * cat;
            std::memcpy(dst, ws.a2.data() + static_cast<size_t>(b) * conv_out,
                        conv_out * sizeof(double));
            std::memcpy(dst + conv_out,
                        ws.a_sit.data() + static_cast<size_t>(b) * cfg_.situation_dense,
                        cfg_.situation_dense * sizeof(double));
        }
        affine(trunk_, ws.concat.data(), ws.a_trunk.data(), batch);
        detail::relu_inplace(ws.a_trunk.data(), ws.a_trunk.size());

        // dueling heads
        affine(value1_, ws.a_trunk.data(), ws.a_v1.data(), batch);
        detail::relu_inplace(ws.a_v1.data(), ws.a_v1.size());
        affine(value2_, ws.a_v1.data(), ws.v_out.data(), batch);
        affine(adv1_, ws.a_trunk.data(), ws.a_a1.data(), batch);
        detail::relu_inplace(ws.a_a1.data(), ws.a_a1.size());
        affine(adv2_, ws.a_a1.data(), ws.adv_out.data(), batch);

        const int na = cfg_.num_actions;
        for (int b = 0; b < batch; ++b) {
            const double* adv = ws.adv_out.data() + static_cast<size_t>(b) * na;
            double mean = 0.0;
            for (int a = 0; a < na; ++a) mean += adv[a];
            mean /= na;
            const double v = ws.v_out[b];
            double* q = ws.q.data() + static_cast<size_t>(b) * na;
            for (int a = 0; a < na; ++a) q[a] = v + adv[a] - mean;
        }
    }

    /// Accumulates parameter gradients for the given output gradient
    /// (batch x num_actions) into grads, which must be param_count() long.
    /// Requires the workspace of the matching forward pass.
    void backward(const Workspace& ws, const double* dq, std::vector<double>& grads) const {
        if (grads.size() != total_) throw ShapeMismatch("QNetwork::backward: bad grads size");
        const int batch = ws.batch;
        const int na = cfg_.num_actions;
        const int c1 = cfg_.conv1_filters;
        const int c2 = cfg_.conv2_filters;
        auto& w = const_cast<Workspace&>(ws);  // backward scratch buffers only

        // dueling split: dV[b] = sum_a dQ, dA[b][a] = dQ[b][a] - mean_a dQ.
        for (int b = 0; b < batch; ++b) {
            const double* g = dq + static_cast<size_t>(b) * na;
            double sum = 0.0;
            for (int a = 0; a < na; ++a) sum += g[a];
            w.d_v[b] = sum;
            const double mean = sum / na;
            double* da = w.d_adv.data() + static_cast<size_t>(b) * na;
            for (int a = 0; a < na; ++a) da[a] = g[a] - mean;
        }

        // value head
        param_grads(value2_, w.d_v.data(), ws.a_v1.data(), grads, batch);
        data_grad(value2_, w.d_v.data(), w.d_av1.data(), batch);
        detail::relu_backward_inplace(w.d_av1.data(), ws.a_v1.data(),
                                      static_cast<size_t>(batch) * cfg_.head_hidden);
        param_grads(value1_, w.d_av1.data(), ws.a_trunk.data(), grads, batch);
        data_grad(value1_, w.d_av1.data(), w.d_trunk.data(), batch);

        // advantage head (accumulated onto the trunk gradient)
        param_grads(adv2_, w.d_adv.data(), ws.a_a1.data(), grads, batch);
        data_grad(adv2_, w.d_adv.data(), w.d_aa1.data(), batch);
        detail::relu_backward_inplace(w.d_aa1.data(), ws.a_a1.data(),
                                      static_cast<size_t>(batch) * cfg_.head_hidden);
        param_grads(adv1_, w.d_aa1.data(), ws.a_trunk.data(), grads, batch);
        data_grad(adv1_, w.d_aa1.data(), w.d_trunk2.data(), batch);
        for (size_t i = 0; i < static_cast<size_t>(batch) * cfg_.trunk_size; ++i)
            w.d_trunk[i] += w.d_trunk2[i];

        detail::relu_backward_inplace(w.d_trunk.data(), ws.a_trunk.data(),
                                      static_cast<size_t>(batch) * cfg_.trunk_size);
        param_grads(trunk_, w.d_trunk.data(), ws.concat.data(), grads, batch);
        const int conv_out = 64 * c2;
        const int cat = conv_out + cfg_.situation_dense;
        data_grad(trunk_, w.d_trunk.data(), w.d_concat.data(), batch);

        // situation stream
        {
            std::vector<double> d_sit(static_cast<size_t>(batch) * cfg_.situation_dense);
            for (int b = 0; b < batch; ++b)
                std::memcpy(d_sit.data() + static_cast<size_t>(b) * cfg_.situation_dense,
                            w.d_concat.data() + static_cast<size_t>(b) * cat + conv_out,
                            cfg_.situation_dense * sizeof(double));
            detail::relu_backward_inplace(d_sit.data(), ws.a_sit.data(), d_sit.size());
            param_grads(sit_, d_sit.data(), ws.in_sit.data(), grads, batch);
        }

        // conv stream
        for (int b = 0; b < batch; ++b)
            std::memcpy(w.d_a2.data() + static_cast<size_t>(b) * conv_out,
                        w.d_concat.data() + static_cast<size_t>(b) * cat,
                        conv_out * sizeof(double));
        detail::relu_backward_inplace(w.d_a2.data(), ws.a2.data(),
                                      static_cast<size_t>(batch) * conv_out);
        param_grads(conv2_, w.d_a2.data(), ws.col2.data(), grads, batch * 64);
        data_grad(conv2_, w.d_a2.data(), w.d_col2.data(), batch * 64);

        // col2im scatter for conv2 (stride 2), then conv1 parameter gradients.
        std::fill(w.d_a1.begin(), w.d_a1.end(), 0.0);
        const int krow = 3 * c1;
        for (int b = 0; b < batch; ++b) {
            const double* dcol = w.d_col2.data() + static_cast<size_t>(b) * 64 * (9 * c1);
            double* da1 = w.d_a1.data() + static_cast<size_t>(b) * 324 * c1;
            for (int y = 0; y < 8; ++y)
                for (int x = 0; x < 8; ++x) {
                    const double* row = dcol + (static_cast<size_t>(y) * 8 + x) * (9 * c1);
                    for (int dy = 0; dy < 3; ++dy) {
                        double* dst =
                            da1 + (static_cast<size_t>(2 * y + dy) * 18 + 2 * x) * c1;
                        const double* src = row + dy * krow;
                        for (int k = 0; k < krow; ++k) dst[k] += src[k];
                    }
                }
        }
        detail::relu_backward_inplace(w.d_a1.data(), ws.a1.data(),
                                      static_cast<size_t>(batch) * 324 * c1);
        param_grads(conv1_, w.d_a1.data(), ws.col1.data(), grads, batch * 324);
    }

    /// Rebuilds the transposed weight copies from the canonical parameters.
    void refresh_derived() const {
        for (const auto& layer : layers_) {
            const double* w = params_.data() + layer.w_off;
            double* wt = derived_.data() + layer.wt_off;
            for (int o = 0; o < layer.out; ++o)
                for (int k = 0; k < layer.in; ++k)
                    wt[static_cast<size_t>(k) * layer.out + o] =
                        w[static_cast<size_t>(o) * layer.in + k];
        }
        dirty_ = false;
    }

private:
    struct Layer {
        size_t w_off, b_off, wt_off;
        int in, out;
    };

    Layer add_layer(const std::string& name, int out, int in) {
        Layer layer{total_, total_ + static_cast<size_t>(out) * in, derived_total_, in, out};
        manifest_.push_back({name + ".weight", layer.w_off, {out, in}});
        manifest_.push_back({name + ".bias", layer.b_off, {out}});
        total_ += static_cast<size_t>(out) * in + out;
        derived_total_ += static_cast<size_t>(out) * in;
        layers_.push_back(layer);
        return layer;
    }

    void affine(const Layer& layer, const double* X, double* Y, int rows) const {
        detail::affine_forward(X, derived_.data() + layer.wt_off, params_.data() + layer.b_off,
                               Y, rows, layer.in, layer.out);
    }
    void data_grad(const Layer& layer, const double* dY, double* dX, int rows) const {
        detail::affine_backward_data(dY, params_.data() + layer.w_off, dX, rows, layer.in,
                                     layer.out);
    }
    void param_grads(const Layer& layer, const double* dY, const double* X,
                     std::vector<double>& grads, int rows) const {
        detail::affine_backward_param(dY, X, grads.data() + layer.w_off,
                                      grads.data() + layer.b_off, rows, layer.in, layer.out);
    }

    void resize_ws(Workspace& ws, int batch) const {
        const int c1 = cfg_.conv1_filters;
        const int c2 = cfg_.conv2_filters;
        const size_t b = static_cast<size_t>(batch);
        ws.batch = batch;
        ws.col1.resize(b * 324 * 9);
        ws.a1.resize(b * 324 * c1);
        ws.col2.resize(b * 64 * 9 * c1);
        ws.a2.resize(b * 64 * c2);
        ws.in_sit.resize(b * kSituationSize);
        ws.a_sit.resize(b * cfg_.situation_dense);
        ws.concat.resize(b * (64 * c2 + cfg_.situation_dense));
        ws.a_trunk.resize(b * cfg_.trunk_size);
        ws.a_v1.resize(b * cfg_.head_hidden);
        ws.v_out.resize(b);
        ws.a_a1.resize(b * cfg_.head_hidden);
        ws.adv_out.resize(b * cfg_.num_actions);
        ws.q.resize(b * cfg_.num_actions);
        ws.d_v.resize(b);
        ws.d_adv.resize(b * cfg_.num_actions);
        ws.d_av1.resize(b * cfg_.head_hidden);
        ws.d_aa1.resize(b * cfg_.head_hidden);
        ws.d_trunk.resize(b * cfg_.trunk_size);
        ws.d_trunk2.resize(b * cfg_.trunk_size);
        ws.d_concat.resize(b * (64 * c2 + cfg_.situation_dense));
        ws.d_a2.resize(b * 64 * c2);
        ws.d_col2.resize(b * 64 * 9 * c1);
        ws.d_a1.resize(b * 324 * c1);
    }

    NetConfig cfg_;
    std::vector<Layer> layers_;
    std::vector<ParamEntry> manifest_;
    size_t total_ = 0;
    size_t derived_total_ = 0;
    std::vector<double> params_;
    mutable std::vector<double> derived_;
    mutable bool dirty_ = true;

    Layer conv1_, conv2_, sit_, trunk_, value1_, value2_, adv1_, adv2_;
};

/// Single-state forward pass returning the 8 Q-values; ws carries the
/// activation cache for a subsequent backward call.
inline std::array<double, 8> qnet_forward(const QNetwork& net, const StateVector& state,
                                          Workspace& ws) {
    net.forward(state.data.data(), 1, ws);
    std::array<double, 8> q{};
    std::copy_n(ws.q.begin(), 8, q.begin());
    return q;
}

/// Single-state backward pass; returns the full parameter gradient.
inline std::vector<double> qnet_backward(const QNetwork& net, const Workspace& ws,
                                         const std::array<double, 8>& dq) {
    std::vector<double> grads(net.param_count(), 0.0);
    net.backward(ws, dq.data(), grads);
    return grads;
}

// --- Adam ------------------------------------------------------------------

/// Adam with a linear learning-rate schedule (lr_start -> lr_end over
/// lr_decay_steps updates, then constant).
struct OptimizerState {
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double lr_start = 3e-4;
    double lr_end = 1e-4;
    long long lr_decay_steps = 200000;
    long long step = 0;
    std::vector<double> m, v;

    explicit OptimizerState(size_t n = 0) : m(n, 0.0), v(n, 0.0) {}

    double learning_rate() const {
        const double frac =
            lr_decay_steps > 0
                ? std::min(1.0, static_cast<double>(step) / static_cast<double>(lr_decay_steps))
                : 1.0;
        return lr_start + (lr_end - lr_start) * frac;
    }
};

inline void adam_update(std::vector<double>& params, const std::vector<double>& grads,
                        OptimizerState& opt) {
    if (params.size() != grads.size() || params.size() != opt.m.size() ||
        params.size() != opt.v.size())
        throw ShapeMismatch("adam_update: size mismatch");
    const double lr = opt.learning_rate();
    opt.step += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(opt.step));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(opt.step));
    for (size_t i = 0; i < params.size(); ++i) {
        const double g = grads[i];
        opt.m[i] = opt.beta1 * opt.m[i] + (1.0 - opt.beta1) * g;
        opt.v[i] = opt.beta2 * opt.v[i] + (1.0 - opt.beta2) * g * g;
        const double mhat = opt.m[i] / bc1;
        const double vhat = opt.v[i] / bc2;
        params[i] -= lr * mhat / (std::sqrt(vhat) + opt.eps);
    }
}

// --- checkpoints -------------------------------------------------------------
//
// Binary layout (little-endian):
//   magic "DOVSCKPT" | u32 version | u64 arch hash | u64 optimizer step
//   | u32 entry count | entries { u32 name length, name bytes,
//   u32 rank, u64 dims..., u64 payload byte offset }
//   | u64 payload byte length | f64 payload | u64 fnv1a checksum of all
//   preceding bytes.

namespace detail {

inline constexpr char kCkptMagic[8] = {'D', 'O', 'V', 'S', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCkptVersion = 1;

struct ByteSink {
    std::string bytes;
    template <typename T>
    void put(const T& v) {
        bytes.append(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    void put_bytes(const void* p, size_t n) {
        bytes.append(static_cast<const char*>(p), n);
    }
};

struct ByteSource {
    const std::string& bytes;
    size_t pos = 0;
    template <typename T>
    T get() {
        if (pos + sizeof(T) > bytes.size())
            throw ChecksumMismatch("checkpoint truncated");
        T v;
        std::memcpy(&v, bytes.data() + pos, sizeof(T));
        pos += sizeof(T);
        return v;
    }
    void get_bytes(void* p, size_t n) {
        if (pos + n > bytes.size()) throw ChecksumMismatch("checkpoint truncated");
        std::memcpy(p, bytes.data() + pos, n);
        pos += n;
    }
};

}  // namespace detail

/// Serializes online/target parameters and optimizer moments. The round trip
/// is bit-exact.
inline void save_checkpoint(const std::string& path, const QNetwork& online,
                            const QNetwork& target, const OptimizerState& opt) {
    detail::ByteSink sink;
    sink.put_bytes(detail::kCkptMagic, 8);
    sink.put(detail::kCkptVersion);
    sink.put(online.arch_hash());
    sink.put(static_cast<std::uint64_t>(opt.step));

    struct Group {
        const char* prefix;
        const std::vector<double>* data;
    };
    const Group groups[] = {{"online/", &online.params()},
                            {"target/", &target.params()},
                            {"adam_m/", &opt.m},
                            {"adam_v/", &opt.v}};
    const auto& manifest = online.manifest();
    sink.put(static_cast<std::uint32_t>(manifest.size() * 4));
    std::uint64_t payload_off = 0;
    for (const auto& group : groups) {
        for (const auto& entry : manifest) {
            const std::string name = group.prefix + entry.name;
            sink.put(static_cast<std::uint32_t>(name.size()));
            sink.put_bytes(name.data(), name.size());
            sink.put(static_cast<std::uint32_t>(entry.shape.size()));
            for (int d : entry.shape) sink.put(static_cast<std::uint64_t>(d));
            sink.put(payload_off);
            payload_off += entry.size() * sizeof(double);
        }
    }
    sink.put(payload_off);
    for (const auto& group : groups)
        for (const auto& entry : manifest)
            sink.put_bytes(group.data->data() + entry.offset, entry.size() * sizeof(double));

    const std::uint64_t checksum = fnv1a64(sink.bytes.data(), sink.bytes.size());
    sink.put(checksum);

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("save_checkpoint: cannot open " + path);
    out.write(sink.bytes.data(), static_cast<std::streamsize>(sink.bytes.size()));
    if (!out) throw std::runtime_error("save_checkpoint: write failed for " + path);
}

/// Loads a checkpoint saved by save_checkpoint. Throws VersionMismatch for a
/// wrong magic/version/architecture and ChecksumMismatch for corrupt or
/// truncated files.
inline void load_checkpoint(const std::string& path, QNetwork& online, QNetwork& target,
                            OptimizerState& opt) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_checkpoint: cannot open " + path);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());

    if (bytes.size() < 8 + sizeof(std::uint64_t))
        throw ChecksumMismatch("checkpoint truncated");
    const std::uint64_t stored_sum =
        *reinterpret_cast<const std::uint64_t*>(bytes.data() + bytes.size() - 8);
    if (fnv1a64(bytes.data(), bytes.size() - 8) != stored_sum)
        throw ChecksumMismatch("checkpoint checksum mismatch");

    detail::ByteSource src{bytes};
    char magic[8];
    src.get_bytes(magic, 8);
    if (std::memcmp(magic, detail::kCkptMagic, 8) != 0)
        throw VersionMismatch("not a checkpoint file");
    if (src.get<std::uint32_t>() != detail::kCkptVersion)
        throw VersionMismatch("unsupported checkpoint version");
    if (src.get<std::uint64_t>() != online.arch_hash())
        throw VersionMismatch("checkpoint architecture differs from the constructed network");
    const auto step = src.get<std::uint64_t>();

    const auto n_entries = src.get<std::uint32_t>();
    struct Entry {
        std::string name;
        std::uint64_t offset;
        std::uint64_t count;
    };
    std::vector<Entry> entries;
    entries.reserve(n_entries);
    for (std::uint32_t i = 0; i < n_entries; ++i) {
        Entry e;
        const auto name_len = src.get<std::uint32_t>();
        e.name.resize(name_len);
        src.get_bytes(e.name.data(), name_len);
        const auto rank = src.get<std::uint32_t>();
        e.count = 1;
        for (std::uint32_t d = 0; d < rank; ++d) e.count *= src.get<std::uint64_t>();
        e.offset = src.get<std::uint64_t>();
        entries.push_back(std::move(e));
    }
    const auto payload_len = src.get<std::uint64_t>();
    const size_t payload_pos = src.pos;
    if (payload_pos + payload_len + 8 != bytes.size())
        throw ChecksumMismatch("checkpoint payload size mismatch");

    opt.m.assign(online.param_count(), 0.0);
    opt.v.assign(online.param_count(), 0.0);
    opt.step = static_cast<long long>(step);

    auto locate = [&](const std::string& prefix,
                      const QNetwork::ParamEntry& want) -> const Entry* {
        const std::string name = prefix + want.name;
        for (const auto& e : entries)
            if (e.name == name) return &e;
        return nullptr;
    };
    struct Group {
        const char* prefix;
        std::vector<double>* data;
    };
    const Group groups[] = {{"online/", &online.params()},
                            {"target/", &target.params()},
                            {"adam_m/", &opt.m},
                            {"adam_v/", &opt.v}};
    for (const auto& group : groups) {
        for (const auto& want : online.manifest()) {
            const Entry* e = locate(group.prefix, want);
            if (e == nullptr || e->count != want.size())
                throw VersionMismatch("checkpoint manifest incompatible: " + want.name);
            std::memcpy(group.data->data() + want.offset,
                        bytes.data() + payload_pos + e->offset, e->count * sizeof(double));
        }
    }
}

}  // namespace dovs
