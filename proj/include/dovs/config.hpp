#pragma once

#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dovs/agent.hpp"
#include "dovs/kinematics.hpp"
#include "dovs/net.hpp"
#include "dovs/sim.hpp"
#include "dovs/velocity_grid.hpp"

namespace dovs {

/// Benchmark protocol defaults: per-count episode batches over shared
/// scenario seeds.
struct BenchmarkConfig {
    std::vector<int> counts = {1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11, 12, 13, 14, 15};
    int episodes_per_count = 200;
    double dynamic_fraction = 0.85;
    std::uint64_t seed = 0;
};

/// One JSON document covering every module's parameters. Fields missing from
/// the file keep their defaults.
struct RunConfig {
    KinodynamicLimits limits;
    GridParams grid;
    SensorConfig sensor;
    RewardParams reward;
    NetConfig net;
    Hyperparams agent;
    std::vector<CurriculumStage> curriculum = default_curriculum();
    BenchmarkConfig bench;

    double robot_radius = 0.18;
    double obstacle_radius_min = 0.1;
    double obstacle_radius_max = 0.3;
    double arena_half_extent = 4.0;
    int max_steps = 500;
    int collision_substeps = 5;

    SimParams sim_params() const {
        SimParams p;
        p.limits = limits;
        p.reward = reward;
        p.max_steps = max_steps;
        p.collision_substeps = collision_substeps;
        return p;
    }

    /// Spawn config skeleton; count/mix/distance fields are filled by the
    /// caller (curriculum stage or benchmark protocol).
    ScenarioConfig scenario_base() const {
        ScenarioConfig s;
        s.obstacle_radius_min = obstacle_radius_min;
        s.obstacle_radius_max = obstacle_radius_max;
        s.robot_radius = robot_radius;
        s.arena_half_extent = arena_half_extent;
        return s;
    }
};

namespace detail {

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline void apply_config_json(const nlohmann::json& j, RunConfig& cfg) {
    using detail::maybe;
    if (j.contains("limits")) {
        const auto& l = j.at("limits");
        maybe(l, "v_max", cfg.limits.v_max);
        maybe(l, "w_max", cfg.limits.w_max);
        maybe(l, "a_v_max", cfg.limits.a_v_max);
        maybe(l, "a_w_max", cfg.limits.a_w_max);
        maybe(l, "dt", cfg.limits.dt);
    }
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        maybe(g, "horizon", cfg.grid.horizon);
        maybe(g, "fine_dt", cfg.grid.fine_dt);
        maybe(g, "d_norm", cfg.grid.d_norm);
    }
    if (j.contains("sensor")) {
        const auto& s = j.at("sensor");
        maybe(s, "position_noise_sigma", cfg.sensor.position_noise_sigma);
        maybe(s, "velocity_noise_sigma", cfg.sensor.velocity_noise_sigma);
        maybe(s, "heading_noise_sigma", cfg.sensor.heading_noise_sigma);
        maybe(s, "occlusion_enabled", cfg.sensor.occlusion_enabled);
    }
    if (j.contains("reward")) {
        const auto& r = j.at("reward");
        maybe(r, "r_goal", cfg.reward.r_goal);
        maybe(r, "r_collision", cfg.reward.r_collision);
        maybe(r, "r_dist", cfg.reward.r_dist);
        maybe(r, "goal_distance_threshold", cfg.reward.goal_distance_threshold);
        maybe(r, "goal_speed_threshold", cfg.reward.goal_speed_threshold);
        maybe(r, "safe_distance", cfg.reward.safe_distance);
        maybe(r, "safe_coefficient", cfg.reward.safe_coefficient);
    }
    if (j.contains("net")) {
        const auto& n = j.at("net");
        maybe(n, "conv1_filters", cfg.net.conv1_filters);
        maybe(n, "conv2_filters", cfg.net.conv2_filters);
        maybe(n, "situation_dense", cfg.net.situation_dense);
        maybe(n, "trunk_size", cfg.net.trunk_size);
        maybe(n, "head_hidden", cfg.net.head_hidden);
    }
    if (j.contains("agent")) {
        const auto& a = j.at("agent");
        maybe(a, "gamma", cfg.agent.gamma);
        maybe(a, "n_step", cfg.agent.n_step);
        maybe(a, "target_sync_period", cfg.agent.target_sync_period);
        maybe(a, "batch_size", cfg.agent.batch_size);
        maybe(a, "lr_start", cfg.agent.lr_start);
        maybe(a, "lr_end", cfg.agent.lr_end);
        maybe(a, "lr_decay_steps", cfg.agent.lr_decay_steps);
        maybe(a, "replay_capacity", cfg.agent.replay_capacity);
        maybe(a, "warmup", cfg.agent.warmup);
        maybe(a, "epsilon_floor", cfg.agent.epsilon_floor);
        maybe(a, "per_alpha", cfg.agent.per_alpha);
        maybe(a, "per_epsilon", cfg.agent.per_epsilon);
        maybe(a, "per_beta_start", cfg.agent.per_beta_start);
        maybe(a, "per_beta_end", cfg.agent.per_beta_end);
        maybe(a, "per_beta_anneal_steps", cfg.agent.per_beta_anneal_steps);
        maybe(a, "train_every", cfg.agent.train_every);
    }
    if (j.contains("world")) {
        const auto& w = j.at("world");
        maybe(w, "robot_radius", cfg.robot_radius);
        maybe(w, "obstacle_radius_min", cfg.obstacle_radius_min);
        maybe(w, "obstacle_radius_max", cfg.obstacle_radius_max);
        maybe(w, "arena_half_extent", cfg.arena_half_extent);
        maybe(w, "max_steps", cfg.max_steps);
        maybe(w, "collision_substeps", cfg.collision_substeps);
    }
    if (j.contains("curriculum")) {
        cfg.curriculum.clear();
        for (const auto& s : j.at("curriculum")) {
            CurriculumStage stage;
            maybe(s, "episodes", stage.episodes);
            maybe(s, "dist_min", stage.dist_min);
            maybe(s, "dist_max_start", stage.dist_max_start);
            maybe(s, "dist_max_end", stage.dist_max_end);
            maybe(s, "epsilon_decay", stage.epsilon_decay);
            maybe(s, "obstacles_start", stage.obstacles_start);
            maybe(s, "obstacles_end", stage.obstacles_end);
            maybe(s, "random_count", stage.random_count);
            maybe(s, "dynamic_fraction", stage.dynamic_fraction);
            cfg.curriculum.push_back(stage);
        }
    }
    if (j.contains("bench")) {
        const auto& b = j.at("bench");
        maybe(b, "counts", cfg.bench.counts);
        maybe(b, "episodes_per_count", cfg.bench.episodes_per_count);
        maybe(b, "dynamic_fraction", cfg.bench.dynamic_fraction);
        maybe(b, "seed", cfg.bench.seed);
    }
}

inline RunConfig load_config(const std::string& path) {
    RunConfig cfg;
    if (path.empty()) return cfg;
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    nlohmann::json j;
    in >> j;
    apply_config_json(j, cfg);
    return cfg;
}

}  // namespace dovs
