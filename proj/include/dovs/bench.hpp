#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <memory>
#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dovs/agent.hpp"
#include "dovs/config.hpp"
#include "dovs/episode.hpp"
#include "dovs/net.hpp"
#include "dovs/sim.hpp"

namespace dovs {

/// A deterministic slot chooser evaluated on shared scenarios.
class Planner {
public:
    virtual ~Planner() = default;
    virtual const char* id() const = 0;
    virtual int choose(const StepContext& ctx, Rng& rng) = 0;
};

/// Uniform over the currently valid actions.
class RandomPlanner : public Planner {
public:
    const char* id() const override { return "random"; }
    int choose(const StepContext& ctx, Rng& rng) override {
        return select_action({}, ctx.actions.mask, 1.0, rng);
    }
};

/// Greedy masked argmax over the learned Q-values.
class DqnPlanner : public Planner {
public:
    DqnPlanner(const NetConfig& cfg, const std::string& checkpoint_path) : net_(cfg), target_(cfg) {
        load_checkpoint(checkpoint_path, net_, target_, opt_);
    }
    explicit DqnPlanner(const QNetwork& net) : net_(net), target_(net.config()) {}

    const char* id() const override { return "dqn-dovs"; }
    int choose(const StepContext& ctx, Rng&) override {
        return masked_argmax(qnet_forward(net_, ctx.state, ws_), ctx.actions.mask);
    }

private:
    QNetwork net_;
    QNetwork target_;  // loaded alongside, unused at evaluation time
    OptimizerState opt_{0};
    Workspace ws_;
};

/// Hand-crafted reference: among the safe valid actions, take the first of a
/// goal-seeking preference order (goal-line actions, then the high-v vertex,
/// then turning toward the goal side), skipping speeds the robot could not
/// brake from before reaching the goal. With no safe action it falls back to
/// the valid action with the latest time-to-collision.
class GoalGreedyPlanner : public Planner {
public:
    GoalGreedyPlanner(const RunConfig& cfg, const DovsBuilder& builder)
        : cfg_(cfg), builder_(builder) {}

    const char* id() const override { return "goal-greedy"; }

    int choose(const StepContext& ctx, Rng&) override {
        const bool goal_left = ctx.situation.goal_bearing >= 0.0;
        const int side_first = goal_left ? kTurnLeft : kTurnRight;
        const int side_second = goal_left ? kTurnRight : kTurnLeft;
        const std::array<int, 8> pref = {kGoalLineMaxV, kHeadGoalCurrentV, kGoalLineMinV,
                                         kAccelerate,   side_first,        kKeepVelocity,
                                         side_second,   kDecelerate};

        for (int slot : pref)
            if (ctx.actions.mask[slot] && safe(ctx, slot) && stoppable(ctx, slot)) return slot;
        for (int slot : pref)
            if (ctx.actions.mask[slot] && safe(ctx, slot)) return slot;

        int best = -1;
        double best_ttc = -1.0;
        for (int slot : pref) {
            if (!ctx.actions.mask[slot]) continue;
            const auto ttc = builder_.time_to_collision(ctx.actions.commands[slot], ctx.robot,
                                                        ctx.estimates);
            const double t = ttc ? *ttc : std::numeric_limits<double>::infinity();
            if (t > best_ttc) {
                best_ttc = t;
                best = slot;
            }
        }
        return best;
    }

private:
    bool safe(const StepContext& ctx, int slot) const {
        const auto [i, j] = velocity_to_cell(ctx.actions.commands[slot], cfg_.limits);
        return ctx.grid.at(i, j) > 0;
    }

    /// Discrete braking check: distance covered while decelerating from v to
    /// below the success speed threshold must fit into the remaining goal
    /// distance (with slack for the goal-distance threshold itself).
    bool stoppable(const StepContext& ctx, int slot) const {
        const double dv = cfg_.limits.a_v_max * cfg_.limits.dt;
        const double vt = cfg_.reward.goal_speed_threshold;
        double v = ctx.actions.commands[slot].v;
        double dist = 0.0;
        while (v >= vt * 0.9) {
            dist += v * cfg_.limits.dt;
            v = std::max(0.0, v - dv);
        }
        return dist <= ctx.goal_distance + cfg_.reward.goal_distance_threshold;
    }

    const RunConfig& cfg_;
    const DovsBuilder& builder_;
};

// --- benchmark protocol ------------------------------------------------------

struct EpisodeResult {
    EpisodeStatus outcome = EpisodeStatus::timeout;
    int steps = 0;
    double time_s = 0.0;
    std::uint64_t scenario_hash = 0;

    bool solved() const { return outcome == EpisodeStatus::success; }
};

/// Scenario seed shared by every planner for (seed, count, episode).
inline std::uint64_t benchmark_episode_seed(std::uint64_t seed, int count, int episode) {
    return seed_for_stream(seed_for_stream(seed, 0xBE5C00 + count), episode);
}

inline ScenarioConfig benchmark_scenario(const RunConfig& cfg, int count, double dynamic_fraction) {
    ScenarioConfig s = cfg.scenario_base();
    s.min_obstacles = count;
    s.max_obstacles = count;
    s.dynamic_fraction = dynamic_fraction;
    s.goal_dist_min = 0.3;
    s.goal_dist_max = 1e9;
    return s;
}

/// Runs one planner over the shared scenario set for one obstacle count.
inline std::vector<EpisodeResult> run_planner_episodes(Planner& planner, const RunConfig& cfg,
                                                       const DovsBuilder& builder, int count,
                                                       int episodes, std::uint64_t seed,
                                                       double dynamic_fraction) {
    const SimParams sim = cfg.sim_params();
    std::vector<EpisodeResult> results;
    results.reserve(episodes);
    for (int ep = 0; ep < episodes; ++ep) {
        const std::uint64_t ep_seed = benchmark_episode_seed(seed, count, ep);
        World world = spawn_scenario(benchmark_scenario(cfg, count, dynamic_fraction), ep_seed);
        EpisodeResult res;
        res.scenario_hash = world_hash(world);
        Rng policy_rng(seed_for_stream(ep_seed, 7));
        const EpisodeOutcome out = run_episode(
            std::move(world), builder, cfg.sensor, sim,
            [&](const StepContext& ctx) { return planner.choose(ctx, policy_rng); });
        res.outcome = out.status;
        res.steps = out.steps;
        res.time_s = out.steps * cfg.limits.dt;
        results.push_back(res);
    }
    return results;
}

/// One evaluation row. time_rate compares against a reference planner over
/// the episodes both solved; a planner against itself is exactly 1.
struct MetricsRow {
    int obstacles = 0;
    double success_rate = 0.0;
    double collision_rate = 0.0;
    double timeout_rate = 0.0;
    double mean_time_s = 0.0;  // over the solved episodes; 0 if none
    double time_rate = 1.0;
};

inline MetricsRow make_metrics_row(int count, const std::vector<EpisodeResult>& results,
                                   const std::vector<EpisodeResult>& reference) {
    MetricsRow row;
    row.obstacles = count;
    const double n = static_cast<double>(results.size());
    int solved = 0;
    double time_sum = 0.0;
    for (const auto& r : results) {
        if (r.outcome == EpisodeStatus::success) {
            solved += 1;
            time_sum += r.time_s;
        } else if (r.outcome == EpisodeStatus::collision) {
            row.collision_rate += 1.0;
        } else {
            row.timeout_rate += 1.0;
        }
    }
    row.success_rate = solved / n;
    row.collision_rate /= n;
    row.timeout_rate /= n;
    row.mean_time_s = solved > 0 ? time_sum / solved : 0.0;

    double self_time = 0.0;
    double ref_time = 0.0;
    const size_t common = std::min(results.size(), reference.size());
    for (size_t i = 0; i < common; ++i) {
        if (results[i].solved() && reference[i].solved()) {
            self_time += results[i].time_s;
            ref_time += reference[i].time_s;
        }
    }
    row.time_rate = (self_time == ref_time) ? 1.0 : self_time / ref_time;
    return row;
}

enum class ReportFormat { csv, json };

/// CSV (values rounded to 4 decimals) or JSON (full precision) report.
/// Throws on empty input; nothing is written in that case.
inline void emit_report(const std::vector<MetricsRow>& rows, ReportFormat format,
                        std::ostream& os) {
    if (rows.empty()) throw std::invalid_argument("emit_report: no rows");
    if (format == ReportFormat::csv) {
        os << "obstacles,success_rate,collision_rate,timeout_rate,mean_time_s,time_rate\n";
        char buf[160];
        for (const auto& r : rows) {
            std::snprintf(buf, sizeof(buf), "%d,%.4f,%.4f,%.4f,%.4f,%.4f\n", r.obstacles,
                          r.success_rate, r.collision_rate, r.timeout_rate, r.mean_time_s,
                          r.time_rate);
            os << buf;
        }
    } else {
        nlohmann::json arr = nlohmann::json::array();
        for (const auto& r : rows) {
            arr.push_back({{"obstacles", r.obstacles},
                           {"success_rate", r.success_rate},
                           {"collision_rate", r.collision_rate},
                           {"timeout_rate", r.timeout_rate},
                           {"mean_time_s", r.mean_time_s},
                           {"time_rate", r.time_rate}});
        }
        os << arr.dump(2) << '\n';
    }
}

// --- trajectory rendering ----------------------------------------------------

namespace detail {

struct SvgMapper {
    double half_extent;
    double margin = 0.5;  // metres
    double scale = 50.0;  // px per metre

    double px(double x) const { return (x + half_extent + margin) * scale; }
    double py(double y) const { return (half_extent + margin - y) * scale; }
    double size() const { return 2.0 * (half_extent + margin) * scale; }
};

inline std::string fmt(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.2f", v);
    return buf;
}

inline void svg_xmark(std::ostream& os, const SvgMapper& m, double x, double y,
                      const char* color) {
    const double r = 0.08 * m.scale;
    const double cx = m.px(x);
    const double cy = m.py(y);
    os << "  <line class=\"xmark\" x1=\"" << fmt(cx - r) << "\" y1=\"" << fmt(cy - r)
       << "\" x2=\"" << fmt(cx + r) << "\" y2=\"" << fmt(cy + r) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
    os << "  <line class=\"xmark\" x1=\"" << fmt(cx - r) << "\" y1=\"" << fmt(cy + r)
       << "\" x2=\"" << fmt(cx + r) << "\" y2=\"" << fmt(cy - r) << "\" stroke=\"" << color
       << "\" stroke-width=\"2\"/>\n";
}

inline void svg_polyline(std::ostream& os, const SvgMapper& m,
                         const std::vector<Vec2>& points, const char* color) {
    if (points.size() < 2) return;
    os << "  <polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (size_t i = 0; i < points.size(); ++i) {
        if (i > 0) os << ' ';
        os << fmt(m.px(points[i].x)) << ',' << fmt(m.py(points[i].y));
    }
    os << "\"/>\n";
}

}  // namespace detail

/// Renders a logged episode: arena outline, robot and obstacle paths, the
/// goal marker and X marks at the terminal positions. Pure function of the
/// trace (identical traces give byte-identical output).
inline void export_trajectory_svg(const Trace& trace, std::ostream& os) {
    const World& sc = trace.scenario;
    detail::SvgMapper m{sc.arena_half_extent};
    using detail::fmt;

    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << fmt(m.size()) << "\" height=\""
       << fmt(m.size()) << "\" viewBox=\"0 0 " << fmt(m.size()) << ' ' << fmt(m.size())
       << "\">\n";
    os << "  <rect x=\"0\" y=\"0\" width=\"" << fmt(m.size()) << "\" height=\"" << fmt(m.size())
       << "\" fill=\"white\"/>\n";
    os << "  <rect x=\"" << fmt(m.px(-sc.arena_half_extent)) << "\" y=\""
       << fmt(m.py(sc.arena_half_extent)) << "\" width=\"" << fmt(2 * sc.arena_half_extent * m.scale)
       << "\" height=\"" << fmt(2 * sc.arena_half_extent * m.scale)
       << "\" fill=\"none\" stroke=\"black\" stroke-width=\"2\"/>\n";

    os << "  <circle cx=\"" << fmt(m.px(sc.goal.x)) << "\" cy=\"" << fmt(m.py(sc.goal.y))
       << "\" r=\"" << fmt(0.15 * m.scale)
       << "\" fill=\"none\" stroke=\"green\" stroke-width=\"2\"/>\n";

    // obstacle paths and final discs
    for (size_t o = 0; o < sc.obstacles.size(); ++o) {
        std::vector<Vec2> path{{sc.obstacles[o].pose.x, sc.obstacles[o].pose.y}};
        for (const auto& rec : trace.records)
            if (o < rec.obstacles.size()) path.push_back({rec.obstacles[o].x, rec.obstacles[o].y});
        detail::svg_polyline(os, m, path, "#bbbbbb");
        const Vec2 last = path.back();
        os << "  <circle cx=\"" << fmt(m.px(last.x)) << "\" cy=\"" << fmt(m.py(last.y))
           << "\" r=\"" << fmt(sc.obstacles[o].radius * m.scale)
           << "\" fill=\"none\" stroke=\"#888888\" stroke-width=\"1\"/>\n";
        detail::svg_xmark(os, m, last.x, last.y, "#555555");
    }

    // robot path
    std::vector<Vec2> path{{sc.robot.x, sc.robot.y}};
    for (const auto& rec : trace.records) path.push_back({rec.robot.x, rec.robot.y});
    detail::svg_polyline(os, m, path, "#1f6fd0");
    os << "  <circle cx=\"" << fmt(m.px(sc.robot.x)) << "\" cy=\"" << fmt(m.py(sc.robot.y))
       << "\" r=\"" << fmt(sc.robot_radius * m.scale)
       << "\" fill=\"none\" stroke=\"#1f6fd0\" stroke-width=\"1\"/>\n";
    detail::svg_xmark(os, m, path.back().x, path.back().y, "red");

    os << "</svg>\n";
}

}  // namespace dovs
