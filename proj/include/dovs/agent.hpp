#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <span>
#include <vector>

#include "dovs/actions.hpp"
#include "dovs/errors.hpp"
#include "dovs/net.hpp"
#include "dovs/replay.hpp"
#include "dovs/rng.hpp"

namespace dovs {

/// Learner hyperparameters. Values the source method fixes (gamma, n-step,
/// target sync period, learning-rate range) default to those; the rest are
/// artifact defaults, all configurable.
struct Hyperparams {
    double gamma = 0.97;
    int n_step = 5;
    long long target_sync_period = 100;  // training steps between hard target copies
    int batch_size = 64;
    double lr_start = 3e-4;
    double lr_end = 1e-4;
    long long lr_decay_steps = 200000;
    size_t replay_capacity = 100000;
    size_t warmup = 1000;  // transitions required before training
    double epsilon_floor = 0.05;
    double per_alpha = 0.6;
    double per_epsilon = 0.01;
    double per_beta_start = 0.4;
    double per_beta_end = 1.0;
    long long per_beta_anneal_steps = 200000;
    int train_every = 4;  // environment steps between training steps
};

/// Masked argmax; ties break toward the lowest index. Throws EmptyMask if no
/// action is valid.
inline int masked_argmax(const std::array<double, 8>& q, const ActionMask& mask) {
    int best = -1;
    for (int a = 0; a < kNumActions; ++a) {
        if (!mask[a]) continue;
        if (best < 0 || q[a] > q[best]) best = a;
    }
    if (best < 0) throw EmptyMask("masked_argmax: no valid action");
    return best;
}

/// Epsilon-greedy over the valid actions only: explore uniformly with
/// probability epsilon, otherwise the masked argmax.
inline int select_action(const std::array<double, 8>& q, const ActionMask& mask, double epsilon,
                         Rng& rng) {
    int n_valid = 0;
    for (bool m : mask) n_valid += m ? 1 : 0;
    if (n_valid == 0) throw EmptyMask("select_action: no valid action");
    if (rng.uniform01() < epsilon) {
        int pick = rng.uniform_int(0, n_valid - 1);
        for (int a = 0; a < kNumActions; ++a) {
            if (!mask[a]) continue;
            if (pick-- == 0) return a;
        }
    }
    return masked_argmax(q, mask);
}

struct NStepResult {
    double reward = 0.0;  // discounted sum over the window
    StateVector tail_state;
    ActionMask tail_mask{};
    bool terminal = false;
    int steps = 0;
};

/// Discounted accumulation over a window of consecutive one-step transitions.
/// The window is cut at the first terminal transition. Throws NonConsecutive
/// if the states do not chain.
inline NStepResult nstep_accumulate(std::span<const Transition> window, double gamma) {
    if (window.empty()) throw std::invalid_argument("nstep_accumulate: empty window");
    NStepResult out;
    double discount = 1.0;
    for (size_t i = 0; i < window.size(); ++i) {
        if (i > 0 && !(window[i - 1].next_state == window[i].state))
            throw NonConsecutive("nstep_accumulate: window transitions do not chain");
        out.reward += discount * window[i].reward;
        discount *= gamma;
        out.steps = static_cast<int>(i) + 1;
        if (window[i].terminal) break;
    }
    const Transition& last = window[out.steps - 1];
    out.tail_state = last.next_state;
    out.tail_mask = last.next_mask;
    out.terminal = last.terminal;
    return out;
}

using QValueFn = std::function<std::array<double, 8>(const StateVector&)>;

/// Double-DQN regression target: the online network picks the tail action
/// (over the valid actions only), the target network evaluates it.
inline double double_dqn_target(double reward, const StateVector& tail_state,
                                const ActionMask& tail_mask, bool terminal, int steps,
                                const QValueFn& online, const QValueFn& target, double gamma) {
    if (terminal) return reward;
    const int a_star = masked_argmax(online(tail_state), tail_mask);
    return reward + std::pow(gamma, steps) * target(tail_state)[a_star];
}

/// Rolling n-step window; emits one aggregated transition per step once the
/// window is full, and drains the remainder (with shortened horizons) at
/// episode end.
class NStepAssembler {
public:
    NStepAssembler(int n, double gamma) : n_(n), gamma_(gamma) {}

    /// Feeds one environment step; returns the aggregated transition that
    /// falls out of the window, if any.
    std::vector<Transition> push(const StateVector& state, int action, double reward,
                                 const StateVector& next_state, const ActionMask& next_mask,
                                 bool terminal, bool episode_end) {
        pending_.push_back({state, action, reward});
        tail_state_ = next_state;
        tail_mask_ = next_mask;
        terminal_ = terminal;
        std::vector<Transition> out;
        if (static_cast<int>(pending_.size()) == n_) {
            out.push_back(emit_front());
            pending_.pop_front();
        }
        if (episode_end) {
            while (!pending_.empty()) {
                out.push_back(emit_front());
                pending_.pop_front();
            }
        }
        return out;
    }

    void reset() { pending_.clear(); }

private:
    struct Step {
        StateVector state;
        int action;
        double reward;
    };

    Transition emit_front() const {
        Transition t;
        t.state = pending_.front().state;
        t.action = pending_.front().action;
        double discount = 1.0;
        t.reward = 0.0;
        for (const auto& s : pending_) {
            t.reward += discount * s.reward;
            discount *= gamma_;
        }
        t.next_state = tail_state_;
        t.next_mask = tail_mask_;
        t.terminal = terminal_;
        t.steps = static_cast<int>(pending_.size());
        return t;
    }

    int n_;
    double gamma_;
    std::deque<Step> pending_;
    StateVector tail_state_;
    ActionMask tail_mask_{};
    bool terminal_ = false;
};

/// The learner: online/target networks, Adam, prioritized replay and the
/// training-step mechanics. Single-threaded and fully deterministic for a
/// fixed seed.
class DqnAgent {
public:
    DqnAgent(const NetConfig& net_cfg, const Hyperparams& hp, std::uint64_t seed)
        : hp_(hp),
          online_(net_cfg),
          target_(net_cfg),
          opt_(0),
          store_({hp.replay_capacity, hp.per_alpha, hp.per_epsilon}),
          rng_(seed_for_stream(seed, 0xA9E17)) {
        online_.init_weights(rng_);
        target_.params() = online_.params();
        opt_ = OptimizerState(online_.param_count());
        opt_.lr_start = hp.lr_start;
        opt_.lr_end = hp.lr_end;
        opt_.lr_decay_steps = hp.lr_decay_steps;
    }

    const Hyperparams& hyperparams() const { return hp_; }
    QNetwork& online() { return online_; }
    QNetwork& target() { return target_; }
    const QNetwork& online() const { return online_; }
    const QNetwork& target() const { return target_; }
    OptimizerState& optimizer() { return opt_; }
    PriorityStore& replay() { return store_; }
    const PriorityStore& replay() const { return store_; }
    Rng& rng() { return rng_; }
    long long train_steps() const { return train_steps_; }

    std::array<double, 8> q_values(const StateVector& state) {
        return qnet_forward(online_, state, scratch_ws_);
    }

    int act(const StateVector& state, const ActionMask& mask, double epsilon) {
        return select_action(q_values(state), mask, epsilon, rng_);
    }

    void remember(const Transition& t) { store_.insert(t); }

    double beta() const {
        const double frac = hp_.per_beta_anneal_steps > 0
                                ? std::min(1.0, static_cast<double>(train_steps_) /
                                                    static_cast<double>(hp_.per_beta_anneal_steps))
                                : 1.0;
        return hp_.per_beta_start + (hp_.per_beta_end - hp_.per_beta_start) * frac;
    }

    /// One prioritized training step: sample, regress on double-DQN n-step
    /// targets with importance-weighted Huber loss, refresh priorities, and
    /// hard-sync the target network every target_sync_period steps.
    /// Throws WarmupNotReached until the replay warm-up is met.
    double train_step() {
        if (store_.size() < hp_.warmup)
            throw WarmupNotReached("train_step: replay below warm-up size");
        auto batch = store_.sample(static_cast<size_t>(hp_.batch_size), beta(), rng_);
        // Mean-of-weighted-losses: fold 1/B into the per-sample weights.
        const double inv_b = 1.0 / static_cast<double>(batch.transitions.size());
        std::vector<double> weights(batch.weights);
        for (double& w : weights) w *= inv_b;
        std::vector<double> abs_td;
        const double loss = learn_batch(batch.transitions, weights, &abs_td);
        store_.update_priorities(batch.indices, abs_td);
        return loss;
    }

    /// Plain-weighted batch regression (loss = sum_i w_i * huber(td_i)); the
    /// building block of train_step, exposed for direct use. Performs one
    /// Adam update and the periodic target sync.
    double learn_batch(std::span<const Transition> transitions, std::span<const double> weights,
                       std::vector<double>* abs_td_out = nullptr) {
        const int b = static_cast<int>(transitions.size());
        if (b == 0 || weights.size() != transitions.size())
            throw ShapeMismatch("learn_batch: bad batch");

        states_.resize(static_cast<size_t>(b) * kStateSize);
        next_states_.resize(static_cast<size_t>(b) * kStateSize);
        for (int i = 0; i < b; ++i) {
            std::copy(transitions[i].state.data.begin(), transitions[i].state.data.end(),
                      states_.begin() + static_cast<size_t>(i) * kStateSize);
            std::copy(transitions[i].next_state.data.begin(),
                      transitions[i].next_state.data.end(),
                      next_states_.begin() + static_cast<size_t>(i) * kStateSize);
        }

        // Tail action selection by the online net, evaluation by the target.
        std::vector<double> targets(b);
        online_.forward(next_states_.data(), b, ws_);
        std::vector<int> tail_actions(b, -1);
        for (int i = 0; i < b; ++i) {
            if (transitions[i].terminal) continue;
            std::array<double, 8> q;
            std::copy_n(ws_.q.begin() + static_cast<size_t>(i) * 8, 8, q.begin());
            tail_actions[i] = masked_argmax(q, transitions[i].next_mask);
        }
        target_.forward(next_states_.data(), b, ws_);
        for (int i = 0; i < b; ++i) {
            if (transitions[i].terminal) {
                targets[i] = transitions[i].reward;
            } else {
                targets[i] = transitions[i].reward +
                             std::pow(hp_.gamma, transitions[i].steps) *
                                 ws_.q[static_cast<size_t>(i) * 8 + tail_actions[i]];
            }
        }

        online_.forward(states_.data(), b, ws_);
        dq_.assign(static_cast<size_t>(b) * 8, 0.0);
        double loss = 0.0;
        if (abs_td_out != nullptr) abs_td_out->resize(b);
        for (int i = 0; i < b; ++i) {
            const int a = transitions[i].action;
            const double td = targets[i] - ws_.q[static_cast<size_t>(i) * 8 + a];
            const auto [l, dl] = huber_loss(td);
            loss += weights[i] * l;
            dq_[static_cast<size_t>(i) * 8 + a] = -weights[i] * dl;
            if (abs_td_out != nullptr) (*abs_td_out)[i] = std::abs(td);
        }

        grads_.assign(online_.param_count(), 0.0);
        online_.backward(ws_, dq_.data(), grads_);
        adam_update(online_.params(), grads_, opt_);

        train_steps_ += 1;
        if (hp_.target_sync_period > 0 && train_steps_ % hp_.target_sync_period == 0)
            sync_target();
        return loss;
    }

    /// Hard copy of the online parameters into the target network.
    void sync_target() { target_.params() = online_.params(); }

private:
    Hyperparams hp_;
    QNetwork online_;
    QNetwork target_;
    OptimizerState opt_;
    PriorityStore store_;
    Rng rng_;
    long long train_steps_ = 0;

    Workspace ws_, scratch_ws_;
    std::vector<double> states_, next_states_, dq_, grads_;
};

/// One curriculum stage. Obstacle counts and the goal-distance upper bound
/// ramp linearly across the stage's episodes; the final stage instead draws
/// a random count per episode.
struct CurriculumStage {
    int episodes = 1000;
    double dist_min = 0.3;
    double dist_max_start = 11.4;
    double dist_max_end = 11.4;
    bool epsilon_decay = false;
    int obstacles_start = 0;
    int obstacles_end = 0;
    bool random_count = false;  // uniform in [obstacles_start, obstacles_end]
    double dynamic_fraction = 0.0;
};

/// The six default stages: goal seeking first, then growing numbers of
/// static and of dynamic obstacles (each with an exploration stage and a
/// consolidation stage), then a long mixed stage.
inline std::vector<CurriculumStage> default_curriculum() {
    std::vector<CurriculumStage> stages;
    stages.push_back({1000, 1.0, 1.5, 11.4, true, 0, 0, false, 0.0});
    stages.push_back({1000, 0.3, 11.4, 11.4, true, 0, 12, false, 0.0});
    stages.push_back({1000, 0.3, 11.4, 11.4, false, 0, 12, false, 0.0});
    stages.push_back({1000, 0.3, 11.4, 11.4, true, 0, 12, false, 1.0});
    stages.push_back({1000, 0.3, 11.4, 11.4, false, 0, 12, false, 1.0});
    stages.push_back({2500, 0.3, 11.4, 11.4, false, 0, 12, true, 0.5});
    return stages;
}

/// Linear 1.0 -> floor over the first 80% of a decay stage, then the floor;
/// non-decay stages sit at the floor throughout.
inline double epsilon_schedule(const CurriculumStage& stage, int episode_in_stage,
                               double floor = 0.05) {
    if (!stage.epsilon_decay) return floor;
    const double span = 0.8 * stage.episodes;
    if (span <= 0.0 || episode_in_stage >= span) return floor;
    return 1.0 + (floor - 1.0) * (static_cast<double>(episode_in_stage) / span);
}

}  // namespace dovs
