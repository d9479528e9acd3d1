#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <ostream>
#include <string>
#include <utility>

#include <json.hpp>

#include "dovs/agent.hpp"
#include "dovs/config.hpp"
#include "dovs/episode.hpp"
#include "dovs/sim.hpp"

namespace dovs {

struct TrainProgress {
    int stage = 0;
    int episode_in_stage = 0;  // next episode to run
    long long global_episode = 0;
    long long env_steps = 0;
};

/// Runs the staged curriculum: spawn a scenario per episode (ramping obstacle
/// counts and goal distances within stages), act epsilon-greedily, assemble
/// n-step transitions into prioritized replay, and train on the configured
/// cadence. Deterministic for fixed (config, seed).
class CurriculumTrainer {
public:
    CurriculumTrainer(const RunConfig& cfg, std::uint64_t seed)
        : cfg_(cfg),
          seed_(seed),
          agent_(cfg.net, cfg.agent, seed),
          builder_(cfg.limits, cfg.grid),
          sim_(cfg.sim_params()) {}

    DqnAgent& agent() { return agent_; }
    const TrainProgress& progress() const { return progress_; }
    void set_progress(const TrainProgress& p) { progress_ = p; }

    /// Scenario for one episode of one stage: counts ramp linearly across the
    /// stage (or are drawn uniformly when the stage says random), and the
    /// goal-distance cap ramps from dist_max_start to dist_max_end.
    ScenarioConfig scenario_for(const CurriculumStage& stage, int episode) const {
        ScenarioConfig s = cfg_.scenario_base();
        const double progress =
            stage.episodes > 1
                ? static_cast<double>(episode) / static_cast<double>(stage.episodes - 1)
                : 0.0;
        s.goal_dist_min = stage.dist_min;
        s.goal_dist_max =
            stage.dist_max_start + (stage.dist_max_end - stage.dist_max_start) * progress;
        if (stage.random_count) {
            s.min_obstacles = stage.obstacles_start;
            s.max_obstacles = stage.obstacles_end;
        } else {
            const int count = static_cast<int>(std::llround(
                stage.obstacles_start + (stage.obstacles_end - stage.obstacles_start) * progress));
            s.min_obstacles = count;
            s.max_obstacles = count;
        }
        s.dynamic_fraction = stage.dynamic_fraction;
        return s;
    }

    /// Runs one episode and feeds the learner. Returns the outcome.
    EpisodeOutcome run_training_episode(const CurriculumStage& stage, int episode_in_stage,
                                        double epsilon) {
        const std::uint64_t ep_seed = seed_for_stream(seed_, 1000 + progress_.global_episode);
        World world = spawn_scenario(scenario_for(stage, episode_in_stage), ep_seed);
        NStepAssembler assembler(cfg_.agent.n_step, cfg_.agent.gamma);
        StepContext ctx = observe(world, builder_, cfg_.sensor, world.rng);
        EpisodeOutcome out;
        while (world.status == EpisodeStatus::running) {
            const int action = agent_.act(ctx.state, ctx.actions.mask, epsilon);
            const Velocity cmd = action_to_command(action, ctx.actions);
            const World prev = world;
            world = step_world(std::move(world), cmd, sim_);
            const double r = reward(prev, world, sim_.reward);
            out.total_reward += r;
            out.steps += 1;

            StepContext next_ctx = observe(world, builder_, cfg_.sensor, world.rng);
            const bool terminal = world.status == EpisodeStatus::success ||
                                  world.status == EpisodeStatus::collision;
            const bool episode_end = world.status != EpisodeStatus::running;
            for (const auto& t : assembler.push(ctx.state, action, r, next_ctx.state,
                                                next_ctx.actions.mask, terminal, episode_end))
                agent_.remember(t);
            ctx = std::move(next_ctx);

            progress_.env_steps += 1;
            if (agent_.replay().size() >= cfg_.agent.warmup &&
                progress_.env_steps % cfg_.agent.train_every == 0)
                agent_.train_step();
        }
        out.status = world.status;
        return out;
    }

    /// Executes the stage schedule from the current progress point. Appends
    /// one JSON line per episode to the log and writes a checkpoint (plus a
    /// progress sidecar) at every stage boundary.
    void run(std::ostream* log, const std::string& out_dir) {
        for (; progress_.stage < static_cast<int>(cfg_.curriculum.size()); ++progress_.stage) {
            const CurriculumStage& stage = cfg_.curriculum[progress_.stage];
            for (; progress_.episode_in_stage < stage.episodes; ++progress_.episode_in_stage) {
                const double eps = epsilon_schedule(stage, progress_.episode_in_stage,
                                                    cfg_.agent.epsilon_floor);
                const EpisodeOutcome out =
                    run_training_episode(stage, progress_.episode_in_stage, eps);
                if (log != nullptr) {
                    nlohmann::json rec;
                    rec["stage"] = progress_.stage;
                    rec["episode"] = progress_.episode_in_stage;
                    rec["global_episode"] = progress_.global_episode;
                    rec["return"] = out.total_reward;
                    rec["outcome"] = to_string(out.status);
                    rec["steps"] = out.steps;
                    rec["epsilon"] = eps;
                    (*log) << rec.dump() << '\n';
                }
                progress_.global_episode += 1;
            }
            progress_.episode_in_stage = 0;
            if (!out_dir.empty())
                write_checkpoint(out_dir + "/checkpoint_stage" +
                                 std::to_string(progress_.stage + 1) + ".ckpt");
        }
        if (!out_dir.empty()) write_checkpoint(out_dir + "/checkpoint_final.ckpt");
    }

    void write_checkpoint(const std::string& path) {
        save_checkpoint(path, agent_.online(), agent_.target(), agent_.optimizer());
        nlohmann::json meta;
        meta["stage"] = progress_.stage;
        meta["episode_in_stage"] = progress_.episode_in_stage;
        meta["global_episode"] = progress_.global_episode;
        meta["env_steps"] = progress_.env_steps;
        meta["train_steps"] = agent_.train_steps();
        std::ofstream out(path + ".meta.json");
        out << meta.dump(2) << '\n';
    }

    /// Restores network/optimizer state and the curriculum position from a
    /// checkpoint written by write_checkpoint. The replay buffer is rebuilt
    /// from scratch (the warm-up gate applies again), so a resumed run is not
    /// bit-identical to an uninterrupted one.
    void resume_from(const std::string& path) {
        load_checkpoint(path, agent_.online(), agent_.target(), agent_.optimizer());
        agent_.online().refresh_derived();
        agent_.target().refresh_derived();
        std::ifstream in(path + ".meta.json");
        if (in) {
            nlohmann::json meta;
            in >> meta;
            progress_.stage = meta.value("stage", 0);
            progress_.episode_in_stage = meta.value("episode_in_stage", 0);
            progress_.global_episode = meta.value("global_episode", 0);
            progress_.env_steps = meta.value("env_steps", 0);
        }
    }

private:
    RunConfig cfg_;
    std::uint64_t seed_;
    DqnAgent agent_;
    DovsBuilder builder_;
    SimParams sim_;
    TrainProgress progress_;
};

}  // namespace dovs
