#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <map>
#include <vector>

#include "dovs/net.hpp"
#include "dovs/rng.hpp"

using namespace dovs;

namespace {

StateVector random_state(Rng& rng) {
    StateVector s;
    for (int c = 0; c < kGridCells; ++c) s.data[c] = rng.uniform01() < 0.5 ? 1.0 : -1.0;
    for (int i = 0; i < kSituationSize; ++i) s.data[kGridCells + i] = rng.uniform(-1.0, 1.0);
    return s;
}

// Second, deliberately plain implementation of the forward pass, reading
// parameters through the public manifest. Used as the oracle.
std::array<double, 8> naive_forward(const QNetwork& net, const StateVector& state) {
    std::map<std::string, const double*> seg;
    for (const auto& e : net.manifest()) seg[e.name] = net.params().data() + e.offset;
    auto relu = [](double x) { return x > 0.0 ? x : 0.0; };

    // conv1: 20x20 -> 18x18x16, valid, stride 1
    std::vector<double> a1(18 * 18 * 16);
    for (int y = 0; y < 18; ++y)
        for (int x = 0; x < 18; ++x)
            for (int f = 0; f < 16; ++f) {
                double acc = seg["conv1.bias"][f];
                for (int dy = 0; dy < 3; ++dy)
                    for (int dx = 0; dx < 3; ++dx)
                        acc += state.data[(y + dy) * 20 + (x + dx)] *
                               seg["conv1.weight"][f * 9 + dy * 3 + dx];
                a1[(y * 18 + x) * 16 + f] = relu(acc);
            }

    // conv2: 18x18x16 -> 8x8x32, valid, stride 2
    std::vector<double> a2(8 * 8 * 32);
    for (int y = 0; y < 8; ++y)
        for (int x = 0; x < 8; ++x)
            for (int g = 0; g < 32; ++g) {
                double acc = seg["conv2.bias"][g];
                for (int dy = 0; dy < 3; ++dy)
                    for (int dx = 0; dx < 3; ++dx)
                        for (int c = 0; c < 16; ++c)
                            acc += a1[((2 * y + dy) * 18 + (2 * x + dx)) * 16 + c] *
                                   seg["conv2.weight"][g * 144 + dy * 48 + dx * 16 + c];
                a2[(y * 8 + x) * 32 + g] = relu(acc);
            }

    std::vector<double> sit(64);
    for (int o = 0; o < 64; ++o) {
        double acc = seg["situation.bias"][o];
        for (int i = 0; i < 8; ++i)
            acc += state.data[kGridCells + i] * seg["situation.weight"][o * 8 + i];
        sit[o] = relu(acc);
    }

    std::vector<double> cat(2048 + 64);
    for (int i = 0; i < 2048; ++i) cat[i] = a2[i];
    for (int i = 0; i < 64; ++i) cat[2048 + i] = sit[i];

    std::vector<double> trunk(256);
    for (int o = 0; o < 256; ++o) {
        double acc = seg["trunk.bias"][o];
        for (int i = 0; i < 2112; ++i) acc += cat[i] * seg["trunk.weight"][o * 2112 + i];
        trunk[o] = relu(acc);
    }

    auto head = [&](const char* w1, const char* b1, const char* w2, const char* b2, int out) {
        std::vector<double> hidden(128);
        for (int o = 0; o < 128; ++o) {
            double acc = seg[b1][o];
            for (int i = 0; i < 256; ++i) acc += trunk[i] * seg[w1][o * 256 + i];
            hidden[o] = relu(acc);
        }
        std::vector<double> result(out);
        for (int o = 0; o < out; ++o) {
            double acc = seg[b2][o];
            for (int i = 0; i < 128; ++i) acc += hidden[i] * seg[w2][o * 128 + i];
            result[o] = acc;
        }
        return result;
    };
    const auto value = head("value1.weight", "value1.bias", "value2.weight", "value2.bias", 1);
    const auto adv =
        head("advantage1.weight", "advantage1.bias", "advantage2.weight", "advantage2.bias", 8);

    std::array<double, 8> advarr{};
    for (int i = 0; i < 8; ++i) advarr[i] = adv[i];
    return dueling_aggregate(value[0], advarr);
}

}  // namespace

TEST(DuelingAggregate, HandCases) {
    {
        const auto q = dueling_aggregate(1.0, {0, 0, 0, 0, 0, 0, 0, 0});
        for (double v : q) EXPECT_DOUBLE_EQ(v, 1.0);
    }
    {
        const auto q = dueling_aggregate(0.0, {8, 0, 0, 0, 0, 0, 0, 0});
        EXPECT_DOUBLE_EQ(q[0], 7.0);
        for (int i = 1; i < 8; ++i) EXPECT_DOUBLE_EQ(q[i], -1.0);
    }
}

TEST(DuelingAggregate, ConstantShiftInvariance) {
    Rng rng(2);
    for (int trial = 0; trial < 100; ++trial) {
        std::array<double, 8> adv;
        for (double& a : adv) a = rng.uniform(-5, 5);
        const double v = rng.uniform(-5, 5);
        const double c = rng.uniform(-10, 10);
        const auto q0 = dueling_aggregate(v, adv);
        std::array<double, 8> shifted = adv;
        for (double& a : shifted) a += c;
        const auto q1 = dueling_aggregate(v, shifted);
        for (int i = 0; i < 8; ++i) EXPECT_NEAR(q0[i], q1[i], 1e-12);
    }
}

TEST(HuberLoss, BranchesAndContinuity) {
    {
        const auto [l, g] = huber_loss(0.5);
        EXPECT_DOUBLE_EQ(l, 0.125);
        EXPECT_DOUBLE_EQ(g, 0.5);
    }
    {
        const auto [l, g] = huber_loss(2.0);
        EXPECT_DOUBLE_EQ(l, 1.5);
        EXPECT_DOUBLE_EQ(g, 1.0);
    }
    {
        const auto [l, g] = huber_loss(0.0);
        EXPECT_DOUBLE_EQ(l, 0.0);
        EXPECT_DOUBLE_EQ(g, 0.0);
    }
    // continuity and matching one-sided derivatives at |e| = delta
    const double h = 1e-7;
    const double left = (huber_loss(1.0).first - huber_loss(1.0 - h).first) / h;
    const double right = (huber_loss(1.0 + h).first - huber_loss(1.0).first) / h;
    EXPECT_NEAR(left, right, 1e-6);
    EXPECT_NEAR(huber_loss(1.0 + 1e-12).first, huber_loss(1.0 - 1e-12).first, 1e-11);
    // negative side gradient clamps
    EXPECT_DOUBLE_EQ(huber_loss(-3.0).second, -1.0);
}

TEST(QNetworkForward, ZeroWeightsGiveZeroQ) {
    QNetwork net;
    Workspace ws;
    Rng rng(1);
    const auto q = qnet_forward(net, random_state(rng), ws);
    for (double v : q) EXPECT_DOUBLE_EQ(v, 0.0);
}

TEST(QNetworkForward, PureAndDeterministic) {
    QNetwork net;
    Rng rng(3);
    net.init_weights(rng);
    Workspace ws1, ws2;
    const StateVector s = random_state(rng);
    const auto a = qnet_forward(net, s, ws1);
    const auto b = qnet_forward(net, s, ws2);
    EXPECT_EQ(a, b);
}

TEST(QNetworkForward, MatchesIndependentImplementation) {
    Rng rng(5);
    for (int trial = 0; trial < 3; ++trial) {
        QNetwork net;
        net.init_weights(rng);
        Workspace ws;
        const StateVector s = random_state(rng);
        const auto fast = qnet_forward(net, s, ws);
        const auto slow = naive_forward(net, s);
        for (int i = 0; i < 8; ++i) EXPECT_NEAR(fast[i], slow[i], 1e-6);
    }
}

TEST(QNetworkForward, BatchMatchesSingleBitExact) {
    QNetwork net;
    Rng rng(7);
    net.init_weights(rng);
    const int batch = 5;
    std::vector<StateVector> states;
    std::vector<double> flat(batch * kStateSize);
    for (int b = 0; b < batch; ++b) {
        states.push_back(random_state(rng));
        std::copy(states[b].data.begin(), states[b].data.end(),
                  flat.begin() + b * kStateSize);
    }
    Workspace wsb;
    net.forward(flat.data(), batch, wsb);
    for (int b = 0; b < batch; ++b) {
        Workspace ws1;
        const auto q = qnet_forward(net, states[b], ws1);
        for (int a = 0; a < 8; ++a) EXPECT_EQ(q[a], wsb.q[b * 8 + a]);
    }
}

TEST(QNetworkBackward, ZeroOutputGradient) {
    QNetwork net;
    Rng rng(9);
    net.init_weights(rng);
    Workspace ws;
    qnet_forward(net, random_state(rng), ws);
    const auto grads = qnet_backward(net, ws, {0, 0, 0, 0, 0, 0, 0, 0});
    for (double g : grads) EXPECT_DOUBLE_EQ(g, 0.0);
}

TEST(QNetworkBackward, GradientOfSumIsSumOfGradients) {
    QNetwork net;
    Rng rng(11);
    net.init_weights(rng);
    const StateVector s1 = random_state(rng);
    const StateVector s2 = random_state(rng);
    std::array<double, 8> g1{}, g2{};
    for (int i = 0; i < 8; ++i) {
        g1[i] = rng.uniform(-1, 1);
        g2[i] = rng.uniform(-1, 1);
    }
    Workspace ws;
    qnet_forward(net, s1, ws);
    const auto grad1 = qnet_backward(net, ws, g1);
    qnet_forward(net, s2, ws);
    const auto grad2 = qnet_backward(net, ws, g2);

    // Batched two-sample backward accumulates both.
    std::vector<double> flat(2 * kStateSize);
    std::copy(s1.data.begin(), s1.data.end(), flat.begin());
    std::copy(s2.data.begin(), s2.data.end(), flat.begin() + kStateSize);
    Workspace wsb;
    net.forward(flat.data(), 2, wsb);
    std::vector<double> dq(16);
    for (int i = 0; i < 8; ++i) {
        dq[i] = g1[i];
        dq[8 + i] = g2[i];
    }
    std::vector<double> both(net.param_count(), 0.0);
    net.backward(wsb, dq.data(), both);
    double max_err = 0.0;
    for (size_t i = 0; i < both.size(); ++i)
        max_err = std::max(max_err, std::abs(both[i] - (grad1[i] + grad2[i])));
    EXPECT_LT(max_err, 1e-12);
}

// Central finite differences against the analytic gradient, sampled from
// every layer's weights and biases.
TEST(QNetworkBackward, FiniteDifferenceCheck) {
    QNetwork net;
    Rng rng(13);
    net.init_weights(rng);
    const StateVector s = random_state(rng);
    std::array<double, 8> out_grad{};
    for (double& g : out_grad) g = rng.uniform(-1.0, 1.0);

    Workspace ws;
    qnet_forward(net, s, ws);
    const auto analytic = qnet_backward(net, ws, out_grad);

    auto loss = [&]() {
        Workspace tmp;
        const auto q = qnet_forward(net, s, tmp);
        double l = 0.0;
        for (int i = 0; i < 8; ++i) l += out_grad[i] * q[i];
        return l;
    };

    const double h = 1e-5;
    double max_rel = 0.0;
    int checked = 0;
    for (const auto& entry : net.manifest()) {
        for (int k = 0; k < 13; ++k) {
            const size_t idx =
                entry.offset + static_cast<size_t>(rng.uniform01() * entry.size());
            const double saved = net.params()[idx];
            net.params()[idx] = saved + h;
            const double up = loss();
            net.params()[idx] = saved - h;
            const double down = loss();
            net.params()[idx] = saved;
            const double numeric = (up - down) / (2 * h);
            const double rel = std::abs(analytic[idx] - numeric) /
                               std::max({std::abs(analytic[idx]), std::abs(numeric), 1e-6});
            max_rel = std::max(max_rel, rel);
            ++checked;
        }
    }
    EXPECT_GE(checked, 200);
    EXPECT_LT(max_rel, 1e-4);
}

TEST(AdamUpdate, ZeroGradientIsNoOp) {
    std::vector<double> params = {1.0, -2.0, 3.0};
    const std::vector<double> grads = {0.0, 0.0, 0.0};
    OptimizerState opt(3);
    adam_update(params, grads, opt);
    EXPECT_DOUBLE_EQ(params[0], 1.0);
    EXPECT_DOUBLE_EQ(params[1], -2.0);
    EXPECT_DOUBLE_EQ(params[2], 3.0);
    EXPECT_EQ(opt.step, 1);
}

TEST(AdamUpdate, DescendsAgainstConstantGradient) {
    std::vector<double> params = {0.0};
    OptimizerState opt(1);
    for (int i = 0; i < 100; ++i) adam_update(params, {2.5}, opt);
    EXPECT_LT(params[0], 0.0);
}

TEST(AdamUpdate, FirstStepMagnitudeIsLearningRate) {
    std::vector<double> params = {0.0};
    OptimizerState opt(1);
    const double lr = opt.learning_rate();
    adam_update(params, {1.0}, opt);
    EXPECT_NEAR(std::abs(params[0]), lr, 1e-9);
}

TEST(AdamUpdate, ShapeMismatchThrows) {
    std::vector<double> params = {0.0, 1.0};
    OptimizerState opt(1);
    EXPECT_THROW(adam_update(params, {1.0, 1.0}, opt), ShapeMismatch);
}

TEST(AdamUpdate, LearningRateSchedule) {
    OptimizerState opt(0);
    opt.lr_start = 3e-4;
    opt.lr_end = 1e-4;
    opt.lr_decay_steps = 100;
    EXPECT_DOUBLE_EQ(opt.learning_rate(), 3e-4);
    opt.step = 50;
    EXPECT_NEAR(opt.learning_rate(), 2e-4, 1e-12);
    opt.step = 100;
    EXPECT_DOUBLE_EQ(opt.learning_rate(), 1e-4);
    opt.step = 1000;
    EXPECT_DOUBLE_EQ(opt.learning_rate(), 1e-4);
}

TEST(Checkpoint, RoundTripBitExact) {
    Rng rng(17);
    QNetwork online, target;
    online.init_weights(rng);
    target.init_weights(rng);
    OptimizerState opt(online.param_count());
    for (size_t i = 0; i < opt.m.size(); ++i) {
        opt.m[i] = rng.uniform(-1, 1);
        opt.v[i] = rng.uniform(0, 1);
    }
    opt.step = 1234;

    const std::string path = testing::TempDir() + "/ckpt_roundtrip.bin";
    save_checkpoint(path, online, target, opt);

    QNetwork online2, target2;
    OptimizerState opt2(0);
    load_checkpoint(path, online2, target2, opt2);
    EXPECT_EQ(online.params(), online2.params());
    EXPECT_EQ(target.params(), target2.params());
    EXPECT_EQ(opt.m, opt2.m);
    EXPECT_EQ(opt.v, opt2.v);
    EXPECT_EQ(opt2.step, 1234);
}

TEST(Checkpoint, TruncationDetected) {
    Rng rng(19);
    QNetwork net;
    net.init_weights(rng);
    OptimizerState opt(net.param_count());
    const std::string path = testing::TempDir() + "/ckpt_trunc.bin";
    save_checkpoint(path, net, net, opt);

    std::ifstream in(path, std::ios::binary);
    std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    in.close();
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size() / 2));
    out.close();

    QNetwork a, b;
    OptimizerState o(0);
    EXPECT_THROW(load_checkpoint(path, a, b, o), ChecksumMismatch);
}

TEST(Checkpoint, ArchitectureMismatchDetected) {
    Rng rng(23);
    QNetwork net;
    net.init_weights(rng);
    OptimizerState opt(net.param_count());
    const std::string path = testing::TempDir() + "/ckpt_arch.bin";
    save_checkpoint(path, net, net, opt);

    NetConfig other;
    other.trunk_size = 128;
    QNetwork a(other), b(other);
    OptimizerState o(0);
    EXPECT_THROW(load_checkpoint(path, a, b, o), VersionMismatch);
}

TEST(AffinePrimitive, FiniteDifferenceCheck) {
    Rng rng(29);
    const int B = 3, K = 7, O = 5;
    std::vector<double> X(B * K), W(O * K), WT(K * O), bias(O), dY(B * O);
    for (double& v : X) v = rng.uniform(-1, 1);
    for (double& v : W) v = rng.uniform(-1, 1);
    for (double& v : bias) v = rng.uniform(-1, 1);
    for (double& v : dY) v = rng.uniform(-1, 1);
    auto transpose = [&]() {
        for (int o = 0; o < O; ++o)
            for (int k = 0; k < K; ++k) WT[k * O + o] = W[o * K + k];
    };
    auto loss = [&]() {
        transpose();
        std::vector<double> Y(B * O);
        detail::affine_forward(X.data(), WT.data(), bias.data(), Y.data(), B, K, O);
        double l = 0.0;
        for (int i = 0; i < B * O; ++i) l += dY[i] * Y[i];
        return l;
    };

    std::vector<double> dW(O * K, 0.0), db(O, 0.0), dX(B * K, 0.0);
    detail::affine_backward_param(dY.data(), X.data(), dW.data(), db.data(), B, K, O);
    detail::affine_backward_data(dY.data(), W.data(), dX.data(), B, K, O);

    const double h = 1e-6;
    for (int i = 0; i < O * K; ++i) {
        const double saved = W[i];
        W[i] = saved + h;
        const double up = loss();
        W[i] = saved - h;
        const double down = loss();
        W[i] = saved;
        EXPECT_NEAR(dW[i], (up - down) / (2 * h), 1e-6);
    }
    for (int i = 0; i < B * K; ++i) {
        const double saved = X[i];
        X[i] = saved + h;
        const double up = loss();
        X[i] = saved - h;
        const double down = loss();
        X[i] = saved;
        EXPECT_NEAR(dX[i], (up - down) / (2 * h), 1e-6);
    }
    for (int i = 0; i < O; ++i) {
        const double saved = bias[i];
        bias[i] = saved + h;
        const double up = loss();
        bias[i] = saved - h;
        const double down = loss();
        bias[i] = saved;
        EXPECT_NEAR(db[i], (up - down) / (2 * h), 1e-6);
    }
}
