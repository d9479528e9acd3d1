#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include <json.hpp>

#include "dovs/errors.hpp"
#include "dovs/geometry.hpp"
#include "dovs/kinematics.hpp"
#include "dovs/rng.hpp"
#include "dovs/velocity_grid.hpp"

namespace dovs {

enum class EpisodeStatus { running, success, collision, timeout };

inline const char* to_string(EpisodeStatus s) {
    switch (s) {
        case EpisodeStatus::running: return "running";
        case EpisodeStatus::success: return "success";
        case EpisodeStatus::collision: return "collision";
        case EpisodeStatus::timeout: return "timeout";
    }
    return "?";
}

enum class ObstacleKind { stationary, dynamic };

/// Disc obstacle with a velocity fixed for the whole episode. Static
/// obstacles carry a zero command.
struct ObstacleBody {
    Pose pose;
    double radius = 0.2;
    Velocity commanded;
    ObstacleKind kind = ObstacleKind::stationary;
};

/// Ground-truth simulation state inside the walled square arena
/// [-half_extent, half_extent]^2.
struct World {
    Pose robot;
    Velocity robot_vel;
    double robot_radius = 0.18;
    Vec2 goal;
    std::vector<ObstacleBody> obstacles;
    double arena_half_extent = 4.0;
    int step_count = 0;
    EpisodeStatus status = EpisodeStatus::running;
    Rng rng;  // sensing noise stream

    double goal_distance() const { return distance({robot.x, robot.y}, goal); }
};

struct RewardParams {
    double r_goal = 15.0;
    double r_collision = -15.0;
    double r_dist = 2.5;
    double goal_distance_threshold = 0.15;  // m
    double goal_speed_threshold = 0.2;      // m/s
    double safe_distance = 0.2;             // m
    double safe_coefficient = 0.1;
};

struct SensorConfig {
    double position_noise_sigma = 0.03;  // m
    double velocity_noise_sigma = 0.05;  // m/s (applied to v and w)
    double heading_noise_sigma = 0.05;   // rad
    bool occlusion_enabled = true;
};

struct SimParams {
    KinodynamicLimits limits;
    RewardParams reward;
    int max_steps = 500;
    int collision_substeps = 5;
};

/// Spawn-time scenario description (obstacle count range, type mix and
/// goal-distance range).
struct ScenarioConfig {
    int min_obstacles = 0;
    int max_obstacles = 0;
    double dynamic_fraction = 0.0;  // probability an obstacle is dynamic
    double goal_dist_min = 1.0;
    double goal_dist_max = 1e9;  // effectively unbounded inside the arena
    double obstacle_radius_min = 0.1;
    double obstacle_radius_max = 0.3;
    double obstacle_speed_min = 0.1;
    double obstacle_speed_max = 0.6;
    double obstacle_spin_max = 0.5;
    double robot_radius = 0.18;
    double arena_half_extent = 4.0;
    double clearance = 0.1;
};

/// Rejection-samples a non-overlapping initial world. Throws SpawnFailure
/// once the shared attempt budget (10,000 draws) is exhausted.
inline World spawn_scenario(const ScenarioConfig& cfg, std::uint64_t seed) {
    Rng rng(seed);
    int budget = 10000;
    auto spend = [&budget]() {
        if (--budget < 0) throw SpawnFailure("spawn_scenario: rejection budget exhausted");
    };

    World world;
    world.robot_radius = cfg.robot_radius;
    world.arena_half_extent = cfg.arena_half_extent;
    world.rng = Rng(seed_for_stream(seed, 1));

    const double h = cfg.arena_half_extent;
    const double robot_margin = h - cfg.robot_radius - cfg.clearance;
    world.robot.x = rng.uniform(-robot_margin, robot_margin);
    world.robot.y = rng.uniform(-robot_margin, robot_margin);
    world.robot.theta = wrap_angle(rng.uniform(-kPi, kPi));

    for (;;) {
        spend();
        const Vec2 goal{rng.uniform(-robot_margin, robot_margin),
                        rng.uniform(-robot_margin, robot_margin)};
        const double d = distance({world.robot.x, world.robot.y}, goal);
        if (d >= cfg.goal_dist_min && d <= cfg.goal_dist_max) {
            world.goal = goal;
            break;
        }
    }

    const int count = cfg.max_obstacles > cfg.min_obstacles
                          ? rng.uniform_int(cfg.min_obstacles, cfg.max_obstacles)
                          : cfg.min_obstacles;
    for (int i = 0; i < count; ++i) {
        for (;;) {
            spend();
            ObstacleBody obs;
            obs.radius = rng.uniform(cfg.obstacle_radius_min, cfg.obstacle_radius_max);
            const double margin = h - obs.radius - cfg.clearance;
            obs.pose.x = rng.uniform(-margin, margin);
            obs.pose.y = rng.uniform(-margin, margin);
            obs.pose.theta = wrap_angle(rng.uniform(-kPi, kPi));
            const bool is_dynamic = rng.uniform01() < cfg.dynamic_fraction;
            if (is_dynamic) {
                obs.kind = ObstacleKind::dynamic;
                obs.commanded.v = rng.uniform(cfg.obstacle_speed_min, cfg.obstacle_speed_max);
                obs.commanded.w = rng.uniform(-cfg.obstacle_spin_max, cfg.obstacle_spin_max);
            }

            const double robot_clear = cfg.robot_radius + obs.radius + cfg.clearance;
            if (distance({world.robot.x, world.robot.y}, {obs.pose.x, obs.pose.y}) < robot_clear)
                continue;
            // The goal keeps a robot-sized clearance so the episode stays winnable.
            if (distance(world.goal, {obs.pose.x, obs.pose.y}) < robot_clear) continue;
            bool clear = true;
            for (const auto& other : world.obstacles) {
                if (distance({other.pose.x, other.pose.y}, {obs.pose.x, obs.pose.y}) <
                    other.radius + obs.radius + cfg.clearance) {
                    clear = false;
                    break;
                }
            }
            if (!clear) continue;
            world.obstacles.push_back(obs);
            break;
        }
    }
    return world;
}

namespace detail {

/// Propagates an obstacle and reflects its heading specularly off the walls;
/// the position mirror keeps the center inside by construction.
inline ObstacleBody advance_obstacle(ObstacleBody obs, double dt, double half_extent) {
    obs.pose = propagate_unicycle(obs.pose, obs.commanded, dt);
    const double lim = half_extent - obs.radius;
    if (obs.pose.x > lim) {
        obs.pose.x = 2.0 * lim - obs.pose.x;
        obs.pose.theta = wrap_angle(kPi - obs.pose.theta);
    } else if (obs.pose.x < -lim) {
        obs.pose.x = -2.0 * lim - obs.pose.x;
        obs.pose.theta = wrap_angle(kPi - obs.pose.theta);
    }
    if (obs.pose.y > lim) {
        obs.pose.y = 2.0 * lim - obs.pose.y;
        obs.pose.theta = wrap_angle(-obs.pose.theta);
    } else if (obs.pose.y < -lim) {
        obs.pose.y = -2.0 * lim - obs.pose.y;
        obs.pose.theta = wrap_angle(-obs.pose.theta);
    }
    return obs;
}

inline bool robot_overlaps(const Pose& robot, double robot_radius, const World& world,
                           const std::vector<ObstacleBody>& obstacles) {
    const double wall = world.arena_half_extent - robot_radius;
    if (std::abs(robot.x) > wall || std::abs(robot.y) > wall) return true;
    for (const auto& obs : obstacles) {
        const double reach = robot_radius + obs.radius;
        if (squared_distance(robot.x, robot.y, obs.pose.x, obs.pose.y) < reach * reach)
            return true;
    }
    return false;
}

}  // namespace detail

/// Boundary distance from the robot disc to the closest obstacle disc
/// (ground truth); +inf with no obstacles.
inline double closest_obstacle_distance(const World& world) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& obs : world.obstacles) {
        const double d = distance({world.robot.x, world.robot.y}, {obs.pose.x, obs.pose.y}) -
                         obs.radius - world.robot_radius;
        best = std::min(best, d);
    }
    return best;
}

/// Advances the world by one control period under the commanded velocity.
/// The command must lie within the one-step acceleration envelope of the
/// current velocity (enforced; a violation signals a planner bug). Collision
/// is checked at intermediate sub-samples as well as at the post-step
/// configuration; the success test at the final configuration takes the
/// precedence the reward definition gives it.
inline World step_world(World world, const Velocity& cmd, const SimParams& p) {
    if (world.status != EpisodeStatus::running)
        throw std::logic_error("step_world: episode already terminal");
    const double dt = p.limits.dt;
    const double env_eps = 1e-9;
    if (std::abs(cmd.v - world.robot_vel.v) > p.limits.a_v_max * dt + env_eps ||
        std::abs(cmd.w - world.robot_vel.w) > p.limits.a_w_max * dt + env_eps)
        throw CommandOutOfEnvelope("step_world: command exceeds acceleration envelope");

    const Pose robot_prev = world.robot;
    const std::vector<ObstacleBody> obstacles_prev = world.obstacles;

    bool tunneled = false;
    for (int k = 1; k < p.collision_substeps && !tunneled; ++k) {
        const double t = dt * k / p.collision_substeps;
        const Pose rp = propagate_unicycle(robot_prev, cmd, t);
        std::vector<ObstacleBody> sub = obstacles_prev;
        for (auto& obs : sub) obs.pose = propagate_unicycle(obs.pose, obs.commanded, t);
        tunneled = detail::robot_overlaps(rp, world.robot_radius, world, sub);
    }

    world.robot = propagate_unicycle(robot_prev, cmd, dt);
    world.robot_vel = cmd;
    for (auto& obs : world.obstacles)
        obs = detail::advance_obstacle(obs, dt, world.arena_half_extent);
    world.step_count += 1;

    const bool reached = world.goal_distance() < p.reward.goal_distance_threshold &&
                         cmd.v < p.reward.goal_speed_threshold;
    const bool overlap =
        detail::robot_overlaps(world.robot, world.robot_radius, world, world.obstacles);

    if (tunneled)
        world.status = EpisodeStatus::collision;
    else if (reached)
        world.status = EpisodeStatus::success;
    else if (overlap)
        world.status = EpisodeStatus::collision;
    else if (world.step_count >= p.max_steps)
        world.status = EpisodeStatus::timeout;
    return world;
}

/// Penalty for being closer than safe_distance to the nearest obstacle.
inline double safedist_term(double d_obs, const RewardParams& p) {
    return d_obs < p.safe_distance ? -p.safe_coefficient * std::abs(p.safe_distance - d_obs)
                                   : 0.0;
}

/// Step reward between two consecutive world states. Terminal payoffs for
/// success and collision; otherwise shaping toward the goal plus the
/// safe-distance penalty. Timeout ends the episode but is paid through the
/// non-terminal branch.
inline double reward(const World& prev, const World& cur, const RewardParams& p) {
    if (cur.status == EpisodeStatus::success) return p.r_goal;
    if (cur.status == EpisodeStatus::collision) return p.r_collision;
    const double delta = cur.goal_distance() - prev.goal_distance();
    return -p.r_dist * delta + safedist_term(closest_obstacle_distance(cur), p);
}

/// Tracker emulation: geometric occlusion plus zero-mean Gaussian estimation
/// noise. Returned radii are enlarged by the robot radius (point-robot
/// convention); occluded obstacles come back flagged invisible and
/// unperturbed.
inline std::vector<ObstacleEstimate> sense(const World& world, const SensorConfig& cfg,
                                           Rng& rng) {
    const Vec2 eye{world.robot.x, world.robot.y};
    std::vector<ObstacleEstimate> out;
    out.reserve(world.obstacles.size());
    for (size_t i = 0; i < world.obstacles.size(); ++i) {
        const auto& obs = world.obstacles[i];
        bool visible = true;
        if (cfg.occlusion_enabled) {
            for (size_t j = 0; j < world.obstacles.size() && visible; ++j) {
                if (j == i) continue;
                const auto& blocker = world.obstacles[j];
                // Distance from the blocker center to the sight segment.
                const double ex = obs.pose.x - eye.x;
                const double ey = obs.pose.y - eye.y;
                const double len2 = ex * ex + ey * ey;
                double t = 0.0;
                if (len2 > 0.0)
                    t = std::clamp(
                        ((blocker.pose.x - eye.x) * ex + (blocker.pose.y - eye.y) * ey) / len2,
                        0.0, 1.0);
                const double cx = eye.x + t * ex - blocker.pose.x;
                const double cy = eye.y + t * ey - blocker.pose.y;
                if (cx * cx + cy * cy < blocker.radius * blocker.radius) visible = false;
            }
        }
        ObstacleEstimate est;
        est.radius = obs.radius + world.robot_radius;
        est.visible = visible;
        est.world_frame = true;
        if (visible) {
            est.position = {obs.pose.x + rng.normal(0.0, cfg.position_noise_sigma),
                            obs.pose.y + rng.normal(0.0, cfg.position_noise_sigma)};
            est.heading = wrap_angle(obs.pose.theta + rng.normal(0.0, cfg.heading_noise_sigma));
            est.v = std::max(0.0, obs.commanded.v + rng.normal(0.0, cfg.velocity_noise_sigma));
            est.w = obs.commanded.w + rng.normal(0.0, cfg.velocity_noise_sigma);
        } else {
            est.position = {obs.pose.x, obs.pose.y};
            est.heading = obs.pose.theta;
            est.v = obs.commanded.v;
            est.w = obs.commanded.w;
        }
        out.push_back(est);
    }
    return out;
}

// --- scenario / trace serialization ---------------------------------------

inline nlohmann::json world_to_json(const World& world) {
    nlohmann::json j;
    j["arena"] = {{"half_extent", world.arena_half_extent}};
    j["robot"] = {{"x", world.robot.x},        {"y", world.robot.y},
                  {"theta", world.robot.theta}, {"v", world.robot_vel.v},
                  {"w", world.robot_vel.w},     {"radius", world.robot_radius}};
    j["goal"] = {world.goal.x, world.goal.y};
    auto arr = nlohmann::json::array();
    for (const auto& obs : world.obstacles) {
        arr.push_back({{"x", obs.pose.x},
                       {"y", obs.pose.y},
                       {"theta", obs.pose.theta},
                       {"radius", obs.radius},
                       {"v", obs.commanded.v},
                       {"w", obs.commanded.w},
                       {"kind", obs.kind == ObstacleKind::dynamic ? "dynamic" : "static"}});
    }
    j["obstacles"] = std::move(arr);
    j["sensing_rng"] = world.rng.serialize();
    return j;
}

inline World world_from_json(const nlohmann::json& j) {
    World world;
    world.arena_half_extent = j.at("arena").at("half_extent").get<double>();
    const auto& r = j.at("robot");
    world.robot = {r.at("x").get<double>(), r.at("y").get<double>(), r.at("theta").get<double>()};
    world.robot_vel = {r.at("v").get<double>(), r.at("w").get<double>()};
    world.robot_radius = r.at("radius").get<double>();
    world.goal = {j.at("goal").at(0).get<double>(), j.at("goal").at(1).get<double>()};
    for (const auto& o : j.at("obstacles")) {
        ObstacleBody obs;
        obs.pose = {o.at("x").get<double>(), o.at("y").get<double>(), o.at("theta").get<double>()};
        obs.radius = o.at("radius").get<double>();
        obs.commanded = {o.at("v").get<double>(), o.at("w").get<double>()};
        obs.kind = o.at("kind").get<std::string>() == "dynamic" ? ObstacleKind::dynamic
                                                                : ObstacleKind::stationary;
        world.obstacles.push_back(obs);
    }
    if (j.contains("sensing_rng")) world.rng.deserialize(j.at("sensing_rng").get<std::string>());
    return world;
}

/// Stable 64-bit digest of the spawned configuration (used to verify that
/// every planner sees the same scenario set).
inline std::uint64_t world_hash(const World& world) {
    const std::string s = world_to_json(world).dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// One line of the episode trace.
struct TraceRecord {
    int step = 0;
    Pose robot;
    Velocity robot_vel;
    std::vector<Pose> obstacles;
    Velocity command;
    double reward = 0.0;
    EpisodeStatus status = EpisodeStatus::running;
};

inline nlohmann::json trace_record_to_json(const TraceRecord& rec) {
    nlohmann::json j;
    j["step"] = rec.step;
    j["robot"] = {{"x", rec.robot.x},
                  {"y", rec.robot.y},
                  {"theta", rec.robot.theta},
                  {"v", rec.robot_vel.v},
                  {"w", rec.robot_vel.w}};
    auto arr = nlohmann::json::array();
    for (const auto& p : rec.obstacles)
        arr.push_back({{"x", p.x}, {"y", p.y}, {"theta", p.theta}});
    j["obstacles"] = std::move(arr);
    j["cmd"] = {{"v", rec.command.v}, {"w", rec.command.w}};
    j["reward"] = rec.reward;
    j["status"] = to_string(rec.status);
    return j;
}

inline TraceRecord trace_record_from_json(const nlohmann::json& j) {
    TraceRecord rec;
    rec.step = j.at("step").get<int>();
    const auto& r = j.at("robot");
    rec.robot = {r.at("x").get<double>(), r.at("y").get<double>(), r.at("theta").get<double>()};
    rec.robot_vel = {r.at("v").get<double>(), r.at("w").get<double>()};
    for (const auto& o : j.at("obstacles"))
        rec.obstacles.push_back(
            {o.at("x").get<double>(), o.at("y").get<double>(), o.at("theta").get<double>()});
    rec.command = {j.at("cmd").at("v").get<double>(), j.at("cmd").at("w").get<double>()};
    rec.reward = j.at("reward").get<double>();
    const std::string st = j.at("status").get<std::string>();
    if (st == "running") rec.status = EpisodeStatus::running;
    else if (st == "success") rec.status = EpisodeStatus::success;
    else if (st == "collision") rec.status = EpisodeStatus::collision;
    else if (st == "timeout") rec.status = EpisodeStatus::timeout;
    else throw MalformedTrace("unknown status: " + st);
    return rec;
}

}  // namespace dovs
