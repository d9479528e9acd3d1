#include <gtest/gtest.h>

#include <cmath>

#include "dovs/agent.hpp"
#include "dovs/rng.hpp"

using namespace dovs;

namespace {

StateVector tagged_state(double tag) {
    StateVector s;
    for (int c = 0; c < kGridCells; ++c) s.data[c] = (c % 3 == 0) ? -1.0 : 1.0;
    s.data[kGridCells] = tag;
    return s;
}

Transition chain_link(double tag, double reward, bool terminal = false) {
    Transition t;
    t.state = tagged_state(tag);
    t.next_state = tagged_state(tag + 1.0);
    t.action = 0;
    t.reward = reward;
    t.terminal = terminal;
    t.next_mask = {true, true, true, true, true, false, false, false};
    t.steps = 1;
    return t;
}

NetConfig tiny_net() {
    NetConfig cfg;
    cfg.conv1_filters = 4;
    cfg.conv2_filters = 4;
    cfg.situation_dense = 8;
    cfg.trunk_size = 32;
    cfg.head_hidden = 16;
    return cfg;
}

}  // namespace

TEST(SelectAction, MaskedArgmaxSkipsInvalid) {
    Rng rng(1);
    const std::array<double, 8> q = {1, 2, 3, 4, 5, 9, 0, 0};
    const ActionMask mask = {true, true, true, true, true, false, false, false};
    EXPECT_EQ(select_action(q, mask, 0.0, rng), 4);
}

TEST(SelectAction, ArgmaxTiesBreakLow) {
    Rng rng(2);
    const std::array<double, 8> q = {7, 3, 7, 7, 1, 0, 0, 0};
    const ActionMask mask = {true, true, true, true, true, true, true, true};
    EXPECT_EQ(select_action(q, mask, 0.0, rng), 0);
}

TEST(SelectAction, UniformExplorationOverValidOnly) {
    Rng rng(3);
    const std::array<double, 8> q = {0, 0, 0, 0, 0, 100, 100, 100};
    const ActionMask mask = {true, true, true, true, true, false, false, false};
    std::array<int, 8> counts{};
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) counts[select_action(q, mask, 1.0, rng)] += 1;
    for (int a = 0; a < 5; ++a)
        EXPECT_NEAR(counts[a] / static_cast<double>(draws), 0.2, 0.015);
    for (int a = 5; a < 8; ++a) EXPECT_EQ(counts[a], 0);
}

TEST(SelectAction, ShiftInvarianceAtZeroEpsilon) {
    Rng rng(4);
    std::array<double, 8> q;
    for (double& v : q) v = rng.uniform(-5, 5);
    const ActionMask mask = {true, false, true, true, true, true, false, true};
    const int base = select_action(q, mask, 0.0, rng);
    for (double& v : q) v += 123.25;
    EXPECT_EQ(select_action(q, mask, 0.0, rng), base);
}

TEST(SelectAction, NeverReturnsMaskedAction) {
    Rng rng(5);
    for (int trial = 0; trial < 100000; ++trial) {
        std::array<double, 8> q;
        for (double& v : q) v = rng.uniform(-10, 10);
        ActionMask mask{};
        int n_valid = 0;
        for (int a = 0; a < 8; ++a) {
            mask[a] = rng.uniform01() < 0.6;
            n_valid += mask[a] ? 1 : 0;
        }
        if (n_valid == 0) {
            EXPECT_THROW(select_action(q, mask, 0.5, rng), EmptyMask);
            continue;
        }
        const int a = select_action(q, mask, rng.uniform01(), rng);
        EXPECT_TRUE(mask[a]);
    }
}

TEST(NStepAccumulate, HandSum) {
    std::vector<Transition> window;
    Transition a = chain_link(0.0, 1.0);
    Transition b = chain_link(1.0, 1.0);
    window = {a, b};
    const NStepResult r = nstep_accumulate(window, 0.97);
    EXPECT_NEAR(r.reward, 1.97, 1e-12);
    EXPECT_EQ(r.steps, 2);
    EXPECT_FALSE(r.terminal);
    EXPECT_EQ(r.tail_state, b.next_state);
}

TEST(NStepAccumulate, TerminalCutsWindow) {
    std::vector<Transition> window = {chain_link(0.0, 5.0, true), chain_link(1.0, 99.0)};
    const NStepResult r = nstep_accumulate(window, 0.97);
    EXPECT_EQ(r.steps, 1);
    EXPECT_DOUBLE_EQ(r.reward, 5.0);
    EXPECT_TRUE(r.terminal);
}

TEST(NStepAccumulate, ZeroRewardsSumToZero) {
    std::vector<Transition> window;
    for (int i = 0; i < 5; ++i) window.push_back(chain_link(i, 0.0));
    const NStepResult r = nstep_accumulate(window, 0.97);
    EXPECT_DOUBLE_EQ(r.reward, 0.0);
    EXPECT_EQ(r.steps, 5);
}

TEST(NStepAccumulate, NonConsecutiveThrows) {
    std::vector<Transition> window = {chain_link(0.0, 1.0), chain_link(5.0, 1.0)};
    EXPECT_THROW(nstep_accumulate(window, 0.97), NonConsecutive);
}

TEST(NStepAccumulate, RecursionProperty) {
    Rng rng(6);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<Transition> window;
        for (int i = 0; i < 5; ++i) window.push_back(chain_link(i, rng.uniform(-2, 2)));
        const double gamma = 0.97;
        const NStepResult full = nstep_accumulate(window, gamma);
        const NStepResult tail =
            nstep_accumulate(std::span<const Transition>(window).subspan(1), gamma);
        EXPECT_NEAR(full.reward, window[0].reward + gamma * tail.reward, 1e-12);
    }
}

TEST(DoubleDqnTarget, HandComputation) {
    // y = 1.97 + 0.97^2 * 10 = 11.379
    const StateVector tail = tagged_state(9.0);
    const ActionMask mask = {true, true, true, true, true, false, false, false};
    const QValueFn online = [](const StateVector&) {
        return std::array<double, 8>{0, 1, 2, 3, 4, 99, 99, 99};  // argmax valid: 4
    };
    const QValueFn target = [](const StateVector&) {
        return std::array<double, 8>{0, 0, 0, 0, 10, -50, -50, -50};
    };
    const double y = double_dqn_target(1.97, tail, mask, false, 2, online, target, 0.97);
    EXPECT_NEAR(y, 11.379, 1e-9);
}

TEST(DoubleDqnTarget, TerminalIgnoresNetworks) {
    const StateVector tail = tagged_state(1.0);
    const ActionMask mask{};
    const QValueFn boom = [](const StateVector&) -> std::array<double, 8> {
        throw std::logic_error("must not be called");
    };
    EXPECT_DOUBLE_EQ(double_dqn_target(-15.0, tail, mask, true, 1, boom, boom, 0.97), -15.0);
}

TEST(DoubleDqnTarget, MaskChangesTheTarget) {
    // The online argmax over all actions lands on a masked action whose
    // target value differs; masking must change y.
    const StateVector tail = tagged_state(2.0);
    const QValueFn online = [](const StateVector&) {
        return std::array<double, 8>{1, 9, 0, 0, 0, 0, 0, 0};  // unmasked argmax: 1
    };
    const QValueFn target = [](const StateVector&) {
        return std::array<double, 8>{3, -7, 0, 0, 0, 0, 0, 0};
    };
    const ActionMask no_mask = {true, true, true, true, true, true, true, true};
    const ActionMask mask1 = {true, false, true, true, true, true, true, true};
    const double y_all = double_dqn_target(0.0, tail, no_mask, false, 1, online, target, 0.97);
    const double y_masked = double_dqn_target(0.0, tail, mask1, false, 1, online, target, 0.97);
    EXPECT_NEAR(y_all, 0.97 * -7.0, 1e-12);
    EXPECT_NEAR(y_masked, 0.97 * 3.0, 1e-12);
    EXPECT_NE(y_all, y_masked);
}

TEST(NStepAssemblerFlow, SlidingWindowAndFlush) {
    NStepAssembler asm5(3, 0.5);
    std::vector<Transition> emitted;
    for (int t = 0; t < 4; ++t) {
        const bool last = (t == 3);
        for (auto& tr : asm5.push(tagged_state(t), t, 1.0, tagged_state(t + 1),
                                  {true, true, true, true, true, false, false, false},
                                  last, last))
            emitted.push_back(tr);
    }
    // steps 0..3: window fills at t=2 (emits window [0,1,2]), t=3 emits
    // [1,2,3], then flush emits [2,3] and [3].
    ASSERT_EQ(emitted.size(), 4u);
    EXPECT_EQ(emitted[0].steps, 3);
    EXPECT_NEAR(emitted[0].reward, 1.0 + 0.5 + 0.25, 1e-12);
    EXPECT_EQ(emitted[0].next_state, tagged_state(3));  // tail at emission time
    EXPECT_FALSE(emitted[0].terminal);
    EXPECT_EQ(emitted[1].steps, 3);
    EXPECT_EQ(emitted[2].steps, 2);
    EXPECT_EQ(emitted[3].steps, 1);
    EXPECT_TRUE(emitted[3].terminal);
    EXPECT_EQ(emitted[3].state, tagged_state(3));
    for (size_t i = 1; i < emitted.size(); ++i)
        EXPECT_EQ(emitted[i].next_state, tagged_state(4));
}

TEST(TrainStep, WarmupGuard) {
    Hyperparams hp;
    hp.warmup = 10;
    hp.batch_size = 2;
    DqnAgent agent(tiny_net(), hp, 1);
    agent.remember(chain_link(0, 1.0));
    EXPECT_THROW(agent.train_step(), WarmupNotReached);
}

TEST(TrainStep, DuplicatedBatchEqualsScaledWeight) {
    // learn_batch uses a plain weighted sum, so k copies at weight w must
    // produce the same update as one copy at weight k*w.
    Hyperparams hp;
    hp.lr_decay_steps = 1000000;
    const Transition t = chain_link(0, 1.0, true);

    DqnAgent a(tiny_net(), hp, 7);
    DqnAgent b(tiny_net(), hp, 7);
    ASSERT_EQ(a.online().params(), b.online().params());

    const std::vector<Transition> dup = {t, t, t};
    const std::vector<double> w_each = {0.2, 0.2, 0.2};
    a.learn_batch(dup, w_each);

    const std::vector<Transition> once = {t};
    const std::vector<double> w_scaled = {0.6};
    b.learn_batch(once, w_scaled);

    double max_diff = 0.0;
    for (size_t i = 0; i < a.online().params().size(); ++i)
        max_diff = std::max(max_diff,
                            std::abs(a.online().params()[i] - b.online().params()[i]));
    EXPECT_LT(max_diff, 1e-12);
}

TEST(TrainStep, TargetSyncIsBitExact) {
    Hyperparams hp;
    hp.warmup = 4;
    hp.batch_size = 4;
    hp.target_sync_period = 3;
    DqnAgent agent(tiny_net(), hp, 11);
    for (int i = 0; i < 8; ++i) agent.remember(chain_link(i, 0.5, i % 3 == 0));
    for (int step = 0; step < 3; ++step) agent.train_step();
    EXPECT_EQ(agent.online().params(), agent.target().params());
    agent.train_step();
    EXPECT_NE(agent.online().params(), agent.target().params());
}

TEST(TrainStep, SingleTerminalTransitionRegressesToReward) {
    Hyperparams hp;
    hp.warmup = 1;
    hp.batch_size = 1;
    hp.lr_start = 3e-3;
    hp.lr_end = 3e-3;
    hp.target_sync_period = 50;
    DqnAgent agent(tiny_net(), hp, 13);
    const Transition t = chain_link(0, 4.0, true);
    agent.remember(t);
    double q = 0.0;
    for (int step = 0; step < 4000; ++step) {
        agent.train_step();
        q = agent.q_values(t.state)[t.action];
        if (std::abs(q - 4.0) < 0.01 && step > 50) break;
    }
    EXPECT_NEAR(q, 4.0, 0.01);
}

TEST(EpsilonSchedule, DecayAndFixedStages) {
    CurriculumStage decay;
    decay.episodes = 1000;
    decay.epsilon_decay = true;
    EXPECT_DOUBLE_EQ(epsilon_schedule(decay, 0), 1.0);
    EXPECT_DOUBLE_EQ(epsilon_schedule(decay, 800), 0.05);
    EXPECT_DOUBLE_EQ(epsilon_schedule(decay, 999), 0.05);
    EXPECT_NEAR(epsilon_schedule(decay, 400), 0.525, 1e-12);

    CurriculumStage fixed;
    fixed.episodes = 1000;
    fixed.epsilon_decay = false;
    for (int e : {0, 1, 500, 999}) EXPECT_DOUBLE_EQ(epsilon_schedule(fixed, e), 0.05);
}

TEST(Curriculum, DefaultStageTable) {
    const auto stages = default_curriculum();
    ASSERT_EQ(stages.size(), 6u);
    EXPECT_EQ(stages[0].episodes, 1000);
    EXPECT_EQ(stages[5].episodes, 2500);
    int total = 0;
    for (const auto& s : stages) total += s.episodes;
    EXPECT_EQ(total, 7500);
    EXPECT_TRUE(stages[0].epsilon_decay);
    EXPECT_TRUE(stages[1].epsilon_decay);
    EXPECT_FALSE(stages[2].epsilon_decay);
    EXPECT_TRUE(stages[3].epsilon_decay);
    EXPECT_FALSE(stages[4].epsilon_decay);
    EXPECT_FALSE(stages[5].epsilon_decay);
    EXPECT_DOUBLE_EQ(stages[0].dist_min, 1.0);
    EXPECT_EQ(stages[1].obstacles_end, 12);
    EXPECT_DOUBLE_EQ(stages[1].dynamic_fraction, 0.0);
    EXPECT_DOUBLE_EQ(stages[3].dynamic_fraction, 1.0);
    EXPECT_TRUE(stages[5].random_count);
}
