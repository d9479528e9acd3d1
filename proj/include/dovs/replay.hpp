#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <vector>

#include "dovs/actions.hpp"
#include "dovs/errors.hpp"
#include "dovs/rng.hpp"
#include "dovs/velocity_grid.hpp"

namespace dovs {

/// One replay record. The reward is the (possibly multi-step) discounted
/// return over `steps` environment steps; next_state/terminal/next_mask
/// describe the window tail. The action mask at the tail is stored at
/// insertion time so target computation can exclude invalid actions.
struct Transition {
    StateVector state;
    int action = 0;
    double reward = 0.0;
    StateVector next_state;
    bool terminal = false;
    ActionMask next_mask{};
    int steps = 1;
};

/// Flat-array segment tree over leaf priorities, maintaining sum, min and max
/// aggregates. Updates recompute the path to the root from the children, so
/// no drift accumulates.
class SumTree {
public:
    explicit SumTree(size_t capacity) {
        cap_ = 1;
        while (cap_ < capacity) cap_ <<= 1;
        sum_.assign(2 * cap_, 0.0);
        min_.assign(2 * cap_, std::numeric_limits<double>::infinity());
        max_.assign(2 * cap_, 0.0);
    }

    void set(size_t idx, double priority) {
        size_t node = cap_ + idx;
        sum_[node] = priority;
        min_[node] = priority;
        max_[node] = priority;
        for (node >>= 1; node >= 1; node >>= 1) {
            sum_[node] = sum_[2 * node] + sum_[2 * node + 1];
            min_[node] = std::min(min_[2 * node], min_[2 * node + 1]);
            max_[node] = std::max(max_[2 * node], max_[2 * node + 1]);
            if (node == 1) break;
        }
    }

    double get(size_t idx) const { return sum_[cap_ + idx]; }
    double total() const { return sum_[1]; }
    double min_priority() const { return min_[1]; }
    double max_priority() const { return max_[1]; }

    /// Proportional descent for a target mass s in [0, total).
    size_t sample(double s) const {
        size_t node = 1;
        while (node < cap_) {
            const double left = sum_[2 * node];
            if (s < left) {
                node = 2 * node;
            } else {
                s -= left;
                node = 2 * node + 1;
            }
        }
        return node - cap_;
    }

private:
    size_t cap_ = 1;
    std::vector<double> sum_, min_, max_;
};

struct PerParams {
    size_t capacity = 100000;
    double alpha = 0.6;
    double epsilon = 0.01;  // priority floor added to |td error|
};

/// Proportional prioritized replay over a ring buffer. States are stored
/// compactly (the grid part is exactly +-1) and reconstructed bit-exactly on
/// sampling. Tree leaves hold p_i = (|td_i| + epsilon)^alpha.
class PriorityStore {
public:
    explicit PriorityStore(const PerParams& params)
        : params_(params), tree_(params.capacity) {
        records_.reserve(params.capacity);
    }

    size_t size() const { return records_.size(); }
    size_t capacity() const { return params_.capacity; }
    const SumTree& tree() const { return tree_; }

    /// Inserts with the current maximum priority (1 for an empty store), so
    /// fresh transitions are sampled at least once.
    void insert(const Transition& t) {
        const double priority = records_.empty() ? 1.0 : tree_.max_priority();
        const size_t idx = next_;
        if (records_.size() < params_.capacity) {
            records_.push_back(compress(t));
        } else {
            records_[idx] = compress(t);
        }
        tree_.set(idx, priority);
        next_ = (next_ + 1) % params_.capacity;
    }

    struct Batch {
        std::vector<size_t> indices;
        std::vector<Transition> transitions;
        std::vector<double> weights;  // importance weights, max-normalized
    };

    /// Stratified proportional sampling; importance weights are
    /// (N P(i))^-beta normalized by the maximum weight over the store.
    Batch sample(size_t batch, double beta, Rng& rng) const {
        if (records_.empty()) throw EmptyStore("PriorityStore::sample: empty store");
        if (batch == 0 || batch > records_.size())
            throw std::invalid_argument("PriorityStore::sample: bad batch size");
        Batch out;
        out.indices.reserve(batch);
        out.transitions.reserve(batch);
        out.weights.reserve(batch);
        const double total = tree_.total();
        const double segment = total / static_cast<double>(batch);
        const double min_p = tree_.min_priority();
        for (size_t i = 0; i < batch; ++i) {
            double s = (static_cast<double>(i) + rng.uniform01()) * segment;
            s = std::min(s, total * (1.0 - 1e-12));
            size_t idx = tree_.sample(s);
            if (idx >= records_.size()) idx = records_.size() - 1;
            out.indices.push_back(idx);
            out.transitions.push_back(expand(records_[idx]));
            // (N p_i / total)^-beta / (N p_min / total)^-beta = (p_min / p_i)^beta
            out.weights.push_back(std::pow(min_p / tree_.get(idx), beta));
        }
        return out;
    }

    /// Refreshes priorities to (|td| + epsilon)^alpha.
    void update_priorities(std::span<const size_t> indices, std::span<const double> abs_td) {
        if (indices.size() != abs_td.size())
            throw ShapeMismatch("update_priorities: size mismatch");
        for (size_t i = 0; i < indices.size(); ++i)
            tree_.set(indices[i], std::pow(std::abs(abs_td[i]) + params_.epsilon, params_.alpha));
    }

    Transition get(size_t idx) const { return expand(records_.at(idx)); }

private:
    struct CompactState {
        std::array<std::int8_t, kGridCells> grid;
        std::array<double, kSituationSize> situation;
    };
    struct Record {
        CompactState state, next_state;
        double reward;
        std::int16_t action;
        std::int16_t steps;
        bool terminal;
        ActionMask next_mask;
    };

    static CompactState compress_state(const StateVector& s) {
        CompactState c;
        for (int i = 0; i < kGridCells; ++i) c.grid[i] = s.data[i] > 0.0 ? 1 : -1;
        for (int i = 0; i < kSituationSize; ++i) c.situation[i] = s.data[kGridCells + i];
        return c;
    }
    static StateVector expand_state(const CompactState& c) {
        StateVector s;
        for (int i = 0; i < kGridCells; ++i) s.data[i] = static_cast<double>(c.grid[i]);
        for (int i = 0; i < kSituationSize; ++i) s.data[kGridCells + i] = c.situation[i];
        return s;
    }
    static Record compress(const Transition& t) {
        return {compress_state(t.state),
                compress_state(t.next_state),
                t.reward,
                static_cast<std::int16_t>(t.action),
                static_cast<std::int16_t>(t.steps),
                t.terminal,
                t.next_mask};
    }
    static Transition expand(const Record& r) {
        Transition t;
        t.state = expand_state(r.state);
        t.next_state = expand_state(r.next_state);
        t.reward = r.reward;
        t.action = r.action;
        t.steps = r.steps;
        t.terminal = r.terminal;
        t.next_mask = r.next_mask;
        return t;
    }

    PerParams params_;
    SumTree tree_;
    std::vector<Record> records_;
    size_t next_ = 0;
};

}  // namespace dovs
