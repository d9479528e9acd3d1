#pragma once

#include <functional>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dovs/actions.hpp"
#include "dovs/kinematics.hpp"
#include "dovs/sim.hpp"
#include "dovs/velocity_grid.hpp"

namespace dovs {

/// Everything a policy sees at one control step.
struct StepContext {
    Pose robot;
    Velocity robot_vel;
    std::vector<ObstacleEstimate> estimates;
    VelocityGrid grid;
    RobotSituation situation;
    StateVector state;
    DynamicWindow window;
    GoalArc arc;
    ActionTable actions;
    double goal_distance = 0.0;
};

/// goal_arc with a rest fallback for the (terminal-only) case of a goal under
/// the robot.
inline GoalArc goal_arc_from(const Pose& robot, const Vec2& goal) {
    const Vec2 rel = to_robot_frame(robot, goal);
    if (rel.x * rel.x + rel.y * rel.y <= 1e-18) return {CurvatureKind::straight, 0.0};
    return goal_arc(rel.x, rel.y);
}

/// Senses the world and assembles the full planning context.
inline StepContext observe(const World& world, const DovsBuilder& builder,
                           const SensorConfig& sensor, Rng& sense_rng) {
    StepContext ctx;
    ctx.robot = world.robot;
    ctx.robot_vel = world.robot_vel;
    ctx.estimates = sense(world, sensor, sense_rng);
    ctx.grid = builder.build(world.robot, ctx.estimates);
    ctx.situation = build_robot_situation(world.robot, world.robot_vel, world.goal,
                                          ctx.estimates, builder.limits(), builder.params());
    ctx.state = build_state_vector(ctx.grid, ctx.situation);
    ctx.window = dynamic_window(world.robot_vel, builder.limits());
    ctx.arc = goal_arc_from(world.robot, world.goal);
    ctx.actions = enumerate_actions(ctx.window, ctx.arc);
    ctx.goal_distance = world.goal_distance();
    return ctx;
}

/// A full logged episode: the spawned scenario plus one record per step.
struct Trace {
    World scenario;
    std::vector<TraceRecord> records;
};

inline void save_trace(const Trace& trace, std::ostream& os) {
    nlohmann::json header;
    header["scenario"] = world_to_json(trace.scenario);
    os << header.dump() << '\n';
    for (const auto& rec : trace.records) os << trace_record_to_json(rec).dump() << '\n';
}

inline Trace load_trace(std::istream& is) {
    Trace trace;
    std::string line;
    if (!std::getline(is, line)) throw MalformedTrace("empty trace");
    nlohmann::json header;
    try {
        header = nlohmann::json::parse(line);
        trace.scenario = world_from_json(header.at("scenario"));
        while (std::getline(is, line)) {
            if (line.empty()) continue;
            trace.records.push_back(trace_record_from_json(nlohmann::json::parse(line)));
        }
    } catch (const nlohmann::json::exception& e) {
        throw MalformedTrace(std::string("trace parse failure: ") + e.what());
    }
    return trace;
}

/// Runs one episode under the supplied policy (a slot index chooser).
/// Returns the terminal world; optionally records a trace.
struct EpisodeOutcome {
    EpisodeStatus status = EpisodeStatus::timeout;
    int steps = 0;
    double total_reward = 0.0;
};

inline EpisodeOutcome run_episode(
    World world, const DovsBuilder& builder, const SensorConfig& sensor, const SimParams& sim,
    const std::function<int(const StepContext&)>& choose, Trace* trace = nullptr) {
    if (trace != nullptr) {
        trace->scenario = world;
        trace->records.clear();
    }
    EpisodeOutcome out;
    while (world.status == EpisodeStatus::running) {
        const StepContext ctx = observe(world, builder, sensor, world.rng);
        const int slot = choose(ctx);
        const Velocity cmd = action_to_command(slot, ctx.actions);
        const World prev = world;
        world = step_world(std::move(world), cmd, sim);
        const double r = reward(prev, world, sim.reward);
        out.total_reward += r;
        out.steps += 1;
        if (trace != nullptr) {
            TraceRecord rec;
            rec.step = world.step_count;
            rec.robot = world.robot;
            rec.robot_vel = world.robot_vel;
            for (const auto& obs : world.obstacles) rec.obstacles.push_back(obs.pose);
            rec.command = cmd;
            rec.reward = r;
            rec.status = world.status;
            trace->records.push_back(std::move(rec));
        }
    }
    out.status = world.status;
    return out;
}

}  // namespace dovs
