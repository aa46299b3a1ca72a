#pragma once

// Command-line front end. Needs CLI11 and Boost (for serve) on the include path.

#include "diffloco/design_io.hpp"
#include "diffloco/gradcheck.hpp"
#include "diffloco/serve.hpp"

#include <CLI11.hpp>

#include <csignal>
#include <fstream>

#ifndef DIFFLOCO_DEFAULT_DESIGN
#define DIFFLOCO_DEFAULT_DESIGN "designs/quadruped.json"
#endif

namespace diffloco {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;

namespace detail {

inline std::atomic<bool> g_interrupted{false};

inline void print_validation(std::ostream& out, const ValidationLosses& v) {
    char buf[160];
    std::snprintf(buf, sizeof buf, "normalized validation loss: task %.3f run %.3f jump %.3f crawl %.3f\n", v.task,
                  v.run, v.jump, v.crawl);
    out << buf;
}

inline std::vector<std::uint64_t> seed_list(std::uint64_t first, int n) {
    std::vector<std::uint64_t> s;
    for (int i = 0; i < n; ++i) s.push_back(first + std::uint64_t(i));
    return s;
}

} // namespace detail

/// Runs one CLI invocation. Returns 0 on success, 1 on a runtime failure, 2 on a usage error.
inline int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr) {
    CLI::App app{"Differentiable soft-robot locomotion: training, checking and live control", "diffloco"};
    app.require_subcommand(1);

    std::string config_path, design_path, out_dir, checkpoint_path, goals_path, dump_path, name, backend, host;
    std::uint64_t seed = 0;
    int steps = 0, seeds = 3, iterations = -1;
    unsigned short port = 0;
    std::uint64_t max_ticks = 0;
    double tolerance = 0.0;

    auto* train_cmd = app.add_subcommand("train", "train a controller and write checkpoints and logs");
    train_cmd->add_option("--config", config_path, "training config JSON")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--design", design_path, "agent design JSON")->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--out", out_dir, "output directory")->required();
    auto* seed_opt = train_cmd->add_option("--seed", seed, "override the config seed");

    auto* validate_cmd = app.add_subcommand("validate", "print normalized validation losses of a checkpoint");
    validate_cmd->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);

    auto* gc_cmd = app.add_subcommand("grad-check", "compare adjoint gradients with central differences");
    gc_cmd->add_option("--design", design_path)->required()->check(CLI::ExistingFile);
    gc_cmd->add_option("--backend", backend, "ms or mpm (default: the design's kind)")
        ->check(CLI::IsMember({"ms", "mpm"}));
    gc_cmd->add_option("--steps", steps, "episode length (default 50 for ms, 25 for mpm)")->check(CLI::Range(4, 100000));
    gc_cmd->add_option("--tolerance", tolerance, "pass threshold (default 1e-4 for ms, 1e-3 for mpm)")
        ->check(CLI::PositiveNumber);

    auto* ablate_cmd = app.add_subcommand("ablate", "train Full and one ablation over several seeds");
    ablate_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--name", name)->required()->check(
        CLI::IsMember({"OP", "AF", "BS", "PS", "SV", "TG", "LD", "ACT"}));
    ablate_cmd->add_option("--design", design_path, "agent design (default: bundled quadruped)")
        ->check(CLI::ExistingFile);
    ablate_cmd->add_option("--seeds", seeds, "number of seeds, starting at the config seed")->check(CLI::Range(1, 1000));
    ablate_cmd->add_option("--iterations", iterations, "override the config iteration count")
        ->check(CLI::NonNegativeNumber);
    ablate_cmd->add_option("--out", out_dir, "write the report table to this file");

    auto* serve_cmd = app.add_subcommand("serve", "stream a checkpoint over WebSocket with live targets");
    serve_cmd->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
    serve_cmd->add_option("--port", port, "TCP port (0 picks a free one)")->required();
    serve_cmd->add_option("--host", host, "bind address")->default_val("127.0.0.1");
    serve_cmd->add_option("--ticks", max_ticks, "stop after this many frames (0: run until interrupted)");

    auto* replay_cmd = app.add_subcommand("replay", "run a goals script headless and dump frames as JSON lines");
    replay_cmd->add_option("--checkpoint", checkpoint_path)->required()->check(CLI::ExistingFile);
    replay_cmd->add_option("--goals", goals_path)->required()->check(CLI::ExistingFile);
    replay_cmd->add_option("--dump", dump_path, "frames.jsonl output")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e, out, err);
    } catch (const CLI::ParseError& e) {
        app.exit(e, out, err);
        return kExitUsage;
    }

    try {
        if (*train_cmd) {
            TrainConfig cfg = load_config(config_path);
            if (*seed_opt) cfg.seed = seed;
            const AgentDesign design = load_design(design_path);
            TrainOptions opt;
            opt.out_dir = out_dir;
            opt.progress = &out;
            const TrainResult r = train(cfg, design, opt);
            out << "trained " << cfg.iterations << " iterations; checkpoint " << out_dir << "/checkpoint_final.json\n";
            detail::print_validation(out, r.final_validation);
            return kExitOk;
        }
        if (*validate_cmd) {
            const Checkpoint ck = load_checkpoint(checkpoint_path);
            out << "checkpoint at iteration " << ck.iteration << '\n';
            detail::print_validation(out, validate(ck.params, ck.config, ck.design, ck.baseline));
            return kExitOk;
        }
        if (*gc_cmd) {
            const AgentDesign design = load_design(design_path);
            TrainConfig cfg;
            cfg.backend = backend.empty() ? design.kind : backend == "ms" ? DesignKind::MassSpring : DesignKind::Mpm;
            if (cfg.backend != design.kind) throw ConfigError("--backend does not match the design kind");
            const bool ms = cfg.backend == DesignKind::MassSpring;
            GradCheckOptions opt;
            opt.steps = steps > 0 ? steps : ms ? 50 : 25;
            opt.tolerance = tolerance > 0.0 ? tolerance : ms ? 1e-4 : 1e-3;
            const GradCheckResult r = grad_check(cfg, design, opt);
            char buf[256];
            std::snprintf(buf, sizeof buf,
                          "%s: %d steps, %lld parameters, loss %.6g, max relative error %.3e (parameter %lld), %.2f s\n",
                          design.name.c_str(), r.steps, static_cast<long long>(r.parameters), r.loss,
                          r.max_rel_error, static_cast<long long>(r.worst_index), r.seconds);
            out << buf << (r.pass ? "PASS" : "FAIL") << " (tolerance " << opt.tolerance << ")\n";
            return r.pass ? kExitOk : kExitFailure;
        }
        if (*ablate_cmd) {
            TrainConfig cfg = load_config(config_path);
            if (iterations >= 0) cfg.iterations = iterations;
            const AgentDesign design = load_design(design_path.empty() ? DIFFLOCO_DEFAULT_DESIGN : design_path);
            const AblationReport rep = run_ablation(cfg, name, design, detail::seed_list(cfg.seed, seeds), &out);
            const std::string table = format_report(rep);
            out << table;
            if (!out_dir.empty()) {
                std::ofstream f(out_dir);
                if (!f) throw std::runtime_error("cannot write " + out_dir);
                f << table;
            }
            return kExitOk;
        }
        if (*serve_cmd) {
            Server server(load_checkpoint(checkpoint_path), {host, port, 30.0, max_ticks});
            server.start();
            out << "serving on ws://" << host << ':' << server.port() << std::endl;
            detail::g_interrupted = false;
            auto prev_int = std::signal(SIGINT, [](int) { detail::g_interrupted = true; });
            auto prev_term = std::signal(SIGTERM, [](int) { detail::g_interrupted = true; });
            while (!detail::g_interrupted && (max_ticks == 0 || server.ticks() < max_ticks))
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            server.stop();
            std::signal(SIGINT, prev_int);
            std::signal(SIGTERM, prev_term);
            out << "served " << server.ticks() << " frames, " << server.errors() << " resets\n";
            return kExitOk;
        }
        if (*replay_cmd) {
            const Checkpoint ck = load_checkpoint(checkpoint_path);
            const GoalScript script =
                GoalScript::from_json(detail::parse_json_text(detail::read_file(goals_path)), LiveSession(ck).targets());
            std::ofstream f(dump_path, std::ios::binary);
            if (!f) throw std::runtime_error("cannot write " + dump_path);
            const int errors = replay(ck, script, f);
            out << "wrote " << script.ticks << " frames to " << dump_path << " (" << errors << " resets)\n";
            return kExitOk;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return kExitFailure;
    }
    return kExitUsage;
}

} // namespace diffloco
