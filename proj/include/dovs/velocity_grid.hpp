#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "dovs/errors.hpp"
#include "dovs/geometry.hpp"
#include "dovs/kinematics.hpp"

namespace dovs {

inline constexpr int kGridRows = 20;
inline constexpr int kGridCols = 20;
inline constexpr int kGridCells = kGridRows * kGridCols;
inline constexpr int kSituationSize = 8;
inline constexpr int kStateSize = kGridCells + kSituationSize;

/// Defaults for the collision-horizon sampling and distance normalization.
struct GridParams {
    double horizon = 3.0;    // look-ahead, s
    double fine_dt = 0.02;   // trajectory sampling step, s
    double d_norm = 11.4;    // distance normalization constant, m
};

/// Tracker-style obstacle estimate. The radius is already enlarged by the
/// robot radius (the robot is reduced to a point). Position/heading are in
/// the world frame unless world_frame is false.
struct ObstacleEstimate {
    Vec2 position;
    double radius = 0.0;
    double heading = 0.0;
    double v = 0.0;
    double w = 0.0;
    bool visible = true;
    bool world_frame = true;

    Pose pose() const { return {position.x, position.y, heading}; }
};

/// Expresses a robot-frame estimate in the world frame; world-frame estimates
/// pass through unchanged.
inline ObstacleEstimate estimate_to_world(const ObstacleEstimate& est, const Pose& robot) {
    if (est.world_frame) return est;
    ObstacleEstimate out = est;
    const double c = std::cos(robot.theta);
    const double s = std::sin(robot.theta);
    out.position = {robot.x + c * est.position.x - s * est.position.y,
                    robot.y + s * est.position.x + c * est.position.y};
    out.heading = wrap_angle(est.heading + robot.theta);
    out.world_frame = true;
    return out;
}

/// The 20x20 rasterization of the velocity space: +1 free, -1 unsafe or
/// inadmissible. Row 0 holds the highest linear velocities, column 0 the most
/// negative angular velocities.
struct VelocityGrid {
    std::array<std::int8_t, kGridCells> cells{};
    double v_max = 0.0;
    double w_max = 0.0;

    std::int8_t at(int i, int j) const { return cells[i * kGridCols + j]; }
    std::int8_t& at(int i, int j) { return cells[i * kGridCols + j]; }
};

/// Center velocity of cell (i, j). The w formula is symmetric in j so that
/// mirrored columns carry exactly negated angular velocities.
inline Velocity cell_to_velocity(int i, int j, const KinodynamicLimits& lim) {
    if (i < 0 || i >= kGridRows || j < 0 || j >= kGridCols)
        throw ShapeMismatch("cell_to_velocity: index out of range");
    return {lim.v_max * ((19.5 - i) / 20.0), (j - 9.5) * (lim.w_max / 10.0)};
}

/// Floors a velocity into its cell, clamping to the grid bounds.
inline std::pair<int, int> velocity_to_cell(const Velocity& vel, const KinodynamicLimits& lim) {
    const int i = static_cast<int>(std::floor((1.0 - vel.v / lim.v_max) * 20.0));
    const int j = static_cast<int>(std::floor((vel.w / lim.w_max + 1.0) * 10.0));
    return {std::clamp(i, 0, kGridRows - 1), std::clamp(j, 0, kGridCols - 1)};
}

/// Sampled trajectory-intersection test: robot point along the candidate arc
/// versus the obstacle disc along its own arc, every fine_dt up to horizon.
/// Returns the first sample time strictly inside the disc; this sampled check
/// is the membership test for the unsafe velocity set.
inline std::optional<double> velocity_unsafe(const Velocity& cand, const Pose& robot,
                                             const ObstacleEstimate& obs, double horizon,
                                             double fine_dt) {
    const Pose obs_pose = obs.pose();  // caller passes world-frame estimates here
    const Velocity obs_vel{obs.v, obs.w};
    const double r2 = obs.radius * obs.radius;
    const int steps = static_cast<int>(std::floor(horizon / fine_dt + 1e-9));
    for (int k = 1; k <= steps; ++k) {
        const double t = k * fine_dt;
        const Pose rp = propagate_unicycle(robot, cand, t);
        const Pose op = propagate_unicycle(obs_pose, obs_vel, t);
        if (squared_distance(rp.x, rp.y, op.x, op.y) < r2) return t;
    }
    return std::nullopt;
}

/// Grid construction with the per-cell robot trajectories precomputed once.
/// The robot-frame sample points depend only on (limits, horizon, fine_dt),
/// so a builder can be reused across steps; results are identical to the
/// stateless build_velocity_grid below.
class DovsBuilder {
public:
    DovsBuilder(const KinodynamicLimits& lim, const GridParams& params)
        : lim_(lim), params_(params),
          steps_(static_cast<int>(std::floor(params.horizon / params.fine_dt + 1e-9))) {
        precompute();
    }

    const KinodynamicLimits& limits() const { return lim_; }
    const GridParams& params() const { return params_; }

    VelocityGrid build(const Pose& robot, const std::vector<ObstacleEstimate>& obstacles) const {
        VelocityGrid grid;
        grid.v_max = lim_.v_max;
        grid.w_max = lim_.w_max;

        // Obstacle trajectories, expressed in the robot frame (arc propagation
        // commutes with the rigid frame change).
        std::vector<double> ox, oy, orad2;
        sample_obstacles(robot, obstacles, ox, oy, orad2);
        const int n_obs = static_cast<int>(orad2.size());

        for (int c = 0; c < kGridCells; ++c) {
            if (!cell_admissible_[c]) {
                grid.cells[c] = -1;
                continue;
            }
            const double* rx = &rob_x_[static_cast<size_t>(c) * steps_];
            const double* ry = &rob_y_[static_cast<size_t>(c) * steps_];
            bool unsafe = false;
            for (int o = 0; o < n_obs && !unsafe; ++o) {
                const double* px = &ox[static_cast<size_t>(o) * steps_];
                const double* py = &oy[static_cast<size_t>(o) * steps_];
                const double r2 = orad2[o];
                for (int k = 0; k < steps_; ++k) {
                    const double dx = rx[k] - px[k];
                    const double dy = ry[k] - py[k];
                    if (dx * dx + dy * dy < r2) { unsafe = true; break; }
                }
            }
            grid.cells[c] = unsafe ? -1 : 1;
        }
        return grid;
    }

    /// First collision time of the candidate velocity against any visible
    /// obstacle, or nullopt if it stays clear over the horizon.
    std::optional<double> time_to_collision(const Velocity& cand, const Pose& robot,
                                            const std::vector<ObstacleEstimate>& obstacles) const {
        std::optional<double> best;
        for (const auto& est : obstacles) {
            if (!est.visible) continue;
            const auto t = velocity_unsafe(cand, robot, estimate_to_world(est, robot),
                                           params_.horizon, params_.fine_dt);
            if (t && (!best || *t < *best)) best = t;
        }
        return best;
    }

private:
    void precompute() {
        rob_x_.resize(static_cast<size_t>(kGridCells) * steps_);
        rob_y_.resize(static_cast<size_t>(kGridCells) * steps_);
        for (int i = 0; i < kGridRows; ++i) {
            for (int j = 0; j < kGridCols; ++j) {
                const int c = i * kGridCols + j;
                const Velocity vel = cell_to_velocity(i, j, lim_);
                cell_admissible_[c] = admissible(vel, lim_);
                for (int k = 0; k < steps_; ++k) {
                    const Pose p = propagate_unicycle({}, vel, (k + 1) * params_.fine_dt);
                    rob_x_[static_cast<size_t>(c) * steps_ + k] = p.x;
                    rob_y_[static_cast<size_t>(c) * steps_ + k] = p.y;
                }
            }
        }
    }

    void sample_obstacles(const Pose& robot, const std::vector<ObstacleEstimate>& obstacles,
                          std::vector<double>& ox, std::vector<double>& oy,
                          std::vector<double>& orad2) const {
        for (const auto& raw : obstacles) {
            if (!raw.visible) continue;
            const ObstacleEstimate est = estimate_to_world(raw, robot);
            const Vec2 rel = to_robot_frame(robot, est.position);
            const Pose start{rel.x, rel.y, wrap_angle(est.heading - robot.theta)};
            const Velocity vel{est.v, est.w};
            const size_t base = ox.size();
            ox.resize(base + steps_);
            oy.resize(base + steps_);
            for (int k = 0; k < steps_; ++k) {
                const Pose p = propagate_unicycle(start, vel, (k + 1) * params_.fine_dt);
                ox[base + k] = p.x;
                oy[base + k] = p.y;
            }
            orad2.push_back(est.radius * est.radius);
        }
    }

    KinodynamicLimits lim_;
    GridParams params_;
    int steps_;
    std::array<bool, kGridCells> cell_admissible_{};
    std::vector<double> rob_x_, rob_y_;
};

/// Stateless grid construction: -1 for inadmissible cells and for cells unsafe
/// against any visible obstacle over the horizon, +1 otherwise. Obstacle radii
/// must already be enlarged by the robot radius.
inline VelocityGrid build_velocity_grid(const Pose& robot,
                                        const std::vector<ObstacleEstimate>& obstacles,
                                        const KinodynamicLimits& lim, const GridParams& params) {
    return DovsBuilder(lim, params).build(robot, obstacles);
}

/// The 8 scalar state variables, each normalized to [-1, 1]. With no visible
/// obstacle the obstacle fields take sentinel values (d = 1, rest = 0).
struct RobotSituation {
    double goal_distance = 1.0;      // d_goal / d_norm, clamped
    double goal_bearing = 0.0;       // robot-frame bearing / pi
    double linear_velocity = 0.0;    // v / v_max
    double angular_velocity = 0.0;   // w / w_max
    double obstacle_distance = 1.0;  // boundary distance to closest visible obstacle / d_norm
    double obstacle_bearing = 0.0;   // robot-frame bearing of that obstacle / pi
    double obstacle_speed = 0.0;     // its linear speed / v_max
    double obstacle_heading = 0.0;   // its heading relative to the robot / pi

    std::array<double, kSituationSize> to_array() const {
        return {goal_distance,     goal_bearing,     linear_velocity, angular_velocity,
                obstacle_distance, obstacle_bearing, obstacle_speed,  obstacle_heading};
    }
};

/// Assembles the situation scalars from the sensed world. The closest obstacle
/// is the visible one with minimum boundary distance (center distance minus
/// enlarged radius).
inline RobotSituation build_robot_situation(const Pose& robot, const Velocity& vel,
                                            const Vec2& goal,
                                            const std::vector<ObstacleEstimate>& obstacles,
                                            const KinodynamicLimits& lim,
                                            const GridParams& params) {
    RobotSituation sit;
    sit.goal_distance = std::clamp(distance({robot.x, robot.y}, goal) / params.d_norm, 0.0, 1.0);
    sit.goal_bearing = bearing_to(robot, goal) / kPi;
    sit.linear_velocity = std::clamp(vel.v / lim.v_max, -1.0, 1.0);
    sit.angular_velocity = std::clamp(vel.w / lim.w_max, -1.0, 1.0);

    const ObstacleEstimate* closest = nullptr;
    ObstacleEstimate closest_world;
    double closest_dist = std::numeric_limits<double>::infinity();
    for (const auto& raw : obstacles) {
        if (!raw.visible) continue;
        const ObstacleEstimate est = estimate_to_world(raw, robot);
        const double bd = distance({robot.x, robot.y}, est.position) - est.radius;
        if (bd < closest_dist) {
            closest_dist = bd;
            closest_world = est;
            closest = &raw;
        }
    }
    if (closest != nullptr) {
        sit.obstacle_distance = std::clamp(std::max(closest_dist, 0.0) / params.d_norm, 0.0, 1.0);
        sit.obstacle_bearing = bearing_to(robot, closest_world.position) / kPi;
        sit.obstacle_speed = std::clamp(closest_world.v / lim.v_max, -1.0, 1.0);
        sit.obstacle_heading = wrap_angle(closest_world.heading - robot.theta) / kPi;
    }
    return sit;
}

/// Network input: the 400 grid values (row-major, row 0 = highest v, column 0
/// = most negative w) followed by the 8 situation scalars.
struct StateVector {
    std::array<double, kStateSize> data{};

    const double* grid() const { return data.data(); }
    const double* situation() const { return data.data() + kGridCells; }
    bool operator==(const StateVector&) const = default;
};

inline StateVector build_state_vector(const VelocityGrid& grid, const RobotSituation& sit) {
    StateVector out;
    for (int c = 0; c < kGridCells; ++c) out.data[c] = static_cast<double>(grid.cells[c]);
    const auto s = sit.to_array();
    std::copy(s.begin(), s.end(), out.data.begin() + kGridCells);
    return out;
}

/// 20 lines of 20 comma-separated +1/-1 values.
inline void write_grid_csv(const VelocityGrid& grid, std::ostream& os) {
    for (int i = 0; i < kGridRows; ++i) {
        for (int j = 0; j < kGridCols; ++j) {
            if (j > 0) os << ',';
            os << static_cast<int>(grid.at(i, j));
        }
        os << '\n';
    }
}

/// Portable graymap (P2): free velocities white, unsafe black.
inline void write_grid_pgm(const VelocityGrid& grid, std::ostream& os) {
    os << "P2\n" << kGridCols << ' ' << kGridRows << "\n255\n";
    for (int i = 0; i < kGridRows; ++i) {
        for (int j = 0; j < kGridCols; ++j) {
            if (j > 0) os << ' ';
            os << (grid.at(i, j) > 0 ? 255 : 0);
        }
        os << '\n';
    }
}

}  // namespace dovs
