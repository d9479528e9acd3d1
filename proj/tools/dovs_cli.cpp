#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dovs/bench.hpp"
#include "dovs/config.hpp"
#include "dovs/episode.hpp"
#include "dovs/trainer.hpp"

namespace {

std::vector<int> parse_counts(const std::string& spec) {
    std::vector<int> out;
    const auto dots = spec.find("..");
    if (dots != std::string::npos) {
        const int lo = std::stoi(spec.substr(0, dots));
        const int hi = std::stoi(spec.substr(dots + 2));
        for (int c = lo; c <= hi; ++c) out.push_back(c);
        return out;
    }
    std::stringstream ss(spec);
    std::string tok;
    while (std::getline(ss, tok, ',')) out.push_back(std::stoi(tok));
    return out;
}

std::unique_ptr<dovs::Planner> make_planner(const std::string& id, const dovs::RunConfig& cfg,
                                            const dovs::DovsBuilder& builder,
                                            const std::string& checkpoint) {
    if (id == "dqn-dovs") {
        if (checkpoint.empty())
            throw std::runtime_error("planner dqn-dovs requires --checkpoint");
        return std::make_unique<dovs::DqnPlanner>(cfg.net, checkpoint);
    }
    if (id == "goal-greedy") return std::make_unique<dovs::GoalGreedyPlanner>(cfg, builder);
    if (id == "random") return std::make_unique<dovs::RandomPlanner>();
    throw std::runtime_error("unknown planner: " + id);
}

int cmd_train(const std::string& config_path, std::uint64_t seed, const std::string& out_dir,
              const std::string& resume_from, const std::string& log_path) {
    const dovs::RunConfig cfg = dovs::load_config(config_path);
    dovs::CurriculumTrainer trainer(cfg, seed);
    if (!resume_from.empty()) trainer.resume_from(resume_from);

    std::ofstream log(log_path.empty() ? out_dir + "/training_log.jsonl" : log_path,
                      resume_from.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot open training log for writing");
    trainer.run(&log, out_dir);
    std::cout << "training complete: " << trainer.progress().global_episode << " episodes, "
              << trainer.progress().env_steps << " environment steps, "
              << trainer.agent().train_steps() << " training steps\n"
              << "final checkpoint: " << out_dir << "/checkpoint_final.ckpt\n";
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& checkpoint,
             const std::string& planner_id, const std::string& reference_id,
             const std::string& counts_spec, int episodes, double dynamic_fraction,
             std::uint64_t seed, const std::string& out_path, const std::string& format,
             const std::string& trace_out) {
    dovs::RunConfig cfg = dovs::load_config(config_path);
    if (episodes > 0) cfg.bench.episodes_per_count = episodes;
    if (dynamic_fraction >= 0.0) cfg.bench.dynamic_fraction = dynamic_fraction;
    if (!counts_spec.empty()) cfg.bench.counts = parse_counts(counts_spec);
    cfg.bench.seed = seed;

    const dovs::DovsBuilder builder(cfg.limits, cfg.grid);
    auto planner = make_planner(planner_id, cfg, builder, checkpoint);
    std::unique_ptr<dovs::Planner> reference;
    if (!reference_id.empty() && reference_id != planner_id)
        reference = make_planner(reference_id, cfg, builder, checkpoint);

    std::vector<dovs::MetricsRow> rows;
    for (int count : cfg.bench.counts) {
        const auto results =
            dovs::run_planner_episodes(*planner, cfg, builder, count,
                                       cfg.bench.episodes_per_count, cfg.bench.seed,
                                       cfg.bench.dynamic_fraction);
        const auto ref_results =
            reference ? dovs::run_planner_episodes(*reference, cfg, builder, count,
                                                   cfg.bench.episodes_per_count, cfg.bench.seed,
                                                   cfg.bench.dynamic_fraction)
                      : results;
        rows.push_back(dovs::make_metrics_row(count, results, ref_results));
    }

    if (!trace_out.empty()) {
        // Re-run the first episode of the first count with tracing enabled.
        const int count = cfg.bench.counts.front();
        dovs::World world = dovs::spawn_scenario(
            dovs::benchmark_scenario(cfg, count, cfg.bench.dynamic_fraction),
            dovs::benchmark_episode_seed(cfg.bench.seed, count, 0));
        dovs::Rng policy_rng(dovs::seed_for_stream(
            dovs::benchmark_episode_seed(cfg.bench.seed, count, 0), 7));
        dovs::Trace trace;
        dovs::run_episode(std::move(world), builder, cfg.sensor, cfg.sim_params(),
                          [&](const dovs::StepContext& ctx) {
                              return planner->choose(ctx, policy_rng);
                          },
                          &trace);
        std::ofstream tf(trace_out);
        if (!tf) throw std::runtime_error("cannot open trace output " + trace_out);
        dovs::save_trace(trace, tf);
    }

    const dovs::ReportFormat fmt =
        format == "json" ? dovs::ReportFormat::json : dovs::ReportFormat::csv;
    if (out_path.empty()) {
        dovs::emit_report(rows, fmt, std::cout);
    } else {
        std::ofstream out(out_path);
        if (!out) throw std::runtime_error("cannot open report output " + out_path);
        dovs::emit_report(rows, fmt, out);
    }
    return 0;
}

int cmd_replay(const std::string& trace_path, const std::string& out_path) {
    std::ifstream in(trace_path);
    if (!in) throw std::runtime_error("cannot open trace " + trace_path);
    const dovs::Trace trace = dovs::load_trace(in);
    std::ofstream out(out_path);
    if (!out) throw std::runtime_error("cannot open SVG output " + out_path);
    dovs::export_trajectory_svg(trace, out);
    return 0;
}

int cmd_dovs_dump(const std::string& config_path, const std::string& scenario_path, int count,
                  double dynamic_fraction, std::uint64_t seed, const std::string& out_path,
                  const std::string& format) {
    const dovs::RunConfig cfg = dovs::load_config(config_path);
    dovs::World world;
    if (!scenario_path.empty()) {
        std::ifstream in(scenario_path);
        if (!in) throw std::runtime_error("cannot open scenario " + scenario_path);
        nlohmann::json j;
        in >> j;
        world = dovs::world_from_json(j.contains("scenario") ? j.at("scenario") : j);
    } else {
        world = dovs::spawn_scenario(dovs::benchmark_scenario(cfg, count, dynamic_fraction),
                                     seed);
    }
    dovs::Rng sense_rng(dovs::seed_for_stream(seed, 3));
    const auto estimates = dovs::sense(world, cfg.sensor, sense_rng);
    const dovs::DovsBuilder builder(cfg.limits, cfg.grid);
    const dovs::VelocityGrid grid = builder.build(world.robot, estimates);

    std::ostream* os = &std::cout;
    std::ofstream file;
    if (!out_path.empty()) {
        file.open(out_path);
        if (!file) throw std::runtime_error("cannot open output " + out_path);
        os = &file;
    }
    if (format == "pgm")
        dovs::write_grid_pgm(grid, *os);
    else
        dovs::write_grid_csv(grid, *os);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"DQN planner over the dynamic object velocity space"};
    app.require_subcommand(1);

    std::string config_path, out_dir = ".", resume_from, log_path;
    std::uint64_t seed = 0;
    auto* train = app.add_subcommand("train", "run the curriculum training loop");
    train->add_option("--config", config_path, "config JSON path");
    train->add_option("--seed", seed, "run seed");
    train->add_option("--out-dir", out_dir, "checkpoint/log output directory");
    train->add_option("--resume-from", resume_from, "checkpoint to resume from");
    train->add_option("--log", log_path, "training log path (JSON lines)");

    std::string checkpoint, planner_id = "dqn-dovs", reference_id, counts_spec, out_path;
    std::string format = "csv", trace_out;
    int episodes = 0;
    double dynamic_fraction = -1.0;
    auto* eval = app.add_subcommand("eval", "run the evaluation protocol");
    eval->add_option("--config", config_path, "config JSON path");
    eval->add_option("--checkpoint", checkpoint, "checkpoint for the dqn-dovs planner");
    eval->add_option("--planner", planner_id, "dqn-dovs | goal-greedy | random");
    eval->add_option("--reference-planner", reference_id,
                     "planner used as the time-rate reference (default: self)");
    eval->add_option("--counts", counts_spec, "obstacle counts, e.g. 1..15 or 1,5,10");
    eval->add_option("--episodes", episodes, "episodes per obstacle count");
    eval->add_option("--dynamic-fraction", dynamic_fraction, "fraction of dynamic obstacles");
    eval->add_option("--seed", seed, "scenario seed");
    eval->add_option("--out", out_path, "report output path (stdout if omitted)");
    eval->add_option("--format", format, "csv | json")
        ->check(CLI::IsMember({"csv", "json"}));
    eval->add_option("--trace-out", trace_out, "write the first episode's trace here");

    std::string trace_path, svg_path;
    auto* replay = app.add_subcommand("replay", "render a logged episode trace to SVG");
    replay->add_option("--trace", trace_path, "trace file (JSON lines)")->required();
    replay->add_option("--out", svg_path, "SVG output path")->required();

    std::string scenario_path;
    int dump_count = 3;
    double dump_dynamic = 0.85;
    std::string dump_format = "csv";
    auto* dump = app.add_subcommand("dovs-dump", "export the velocity grid of a scenario");
    dump->add_option("--config", config_path, "config JSON path");
    dump->add_option("--scenario", scenario_path, "scenario JSON (spawns one when omitted)");
    dump->add_option("--count", dump_count, "obstacle count for a spawned scenario");
    dump->add_option("--dynamic-fraction", dump_dynamic, "dynamic fraction for a spawned scenario");
    dump->add_option("--seed", seed, "spawn/sensing seed");
    dump->add_option("--out", out_path, "output path (stdout if omitted)");
    dump->add_option("--format", dump_format, "csv | pgm")
        ->check(CLI::IsMember({"csv", "pgm"}));

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << e.what() << '\n';
        return 1;
    }

    try {
        if (train->parsed()) return cmd_train(config_path, seed, out_dir, resume_from, log_path);
        if (eval->parsed())
            return cmd_eval(config_path, checkpoint, planner_id, reference_id, counts_spec,
                            episodes, dynamic_fraction, seed, out_path, format, trace_out);
        if (replay->parsed()) return cmd_replay(trace_path, svg_path);
        if (dump->parsed())
            return cmd_dovs_dump(config_path, scenario_path, dump_count, dump_dynamic, seed,
                                 out_path, dump_format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }
    return 0;
}
