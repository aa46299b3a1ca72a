#pragma once

#include "diffloco/checkpoint.hpp"
#include "diffloco/parallel.hpp"

#include <chrono>
#include <cstdio>
#include <iomanip>
#include <limits>
#include <ostream>

namespace diffloco {

/// Everything the reverse pass of one episode needs.
struct EpisodeTape {
    GoalSchedule schedule;
    std::vector<MassSpringRecord> ms;
    std::vector<MpmRecord> mpm;
    MatX features; // one column per step
    MatX z1;
    MatX hidden;
    MatX z2;
    LossTape summary;
    SimState final_state;

    int length() const { return int(summary.act.size()); }
};

inline ControllerParams make_initial_params(const TrainConfig& cfg, const AgentDesign& design) {
    ControllerParams p = init_params(cfg.effective_features().input_dim(design), cfg.controller.hidden_dim,
                                     design.num_actuators(), cfg.seed, cfg.controller.activation_hidden,
                                     cfg.controller.activation_output, cfg.controller.omega0);
    p.W2 *= cfg.controller.output_init_scale;
    p.b2 *= cfg.controller.output_init_scale;
    return p;
}

namespace detail {

inline void check_problem(const ControllerParams& params, const TrainConfig& cfg, const AgentDesign& design) {
    if (design.kind != cfg.backend) throw ConfigError("config backend does not match the design kind");
    params.check();
    if (params.input_dim() != cfg.effective_features().input_dim(design))
        throw ContractViolation("controller input width does not match the feature spec");
    if (params.output_dim() != design.num_actuators())
        throw ContractViolation("controller output width does not match the actuator groups");
}

inline std::string goal_context(const GoalSchedule& s, int t) {
    const Goal& g = s.goal_at(t);
    char buf[160];
    std::snprintf(buf, sizeof buf, " (period %d, goal g_v=%g g_h=%g g_c=%g)", t / s.period, g.g_v, g.g_h, g.g_c);
    return buf;
}

} // namespace detail

/// Runs schedule.total_steps controller+simulation steps. With record=false only the loss summary is kept.
inline EpisodeTape rollout(const ControllerParams& params, const GoalSchedule& schedule, const TrainConfig& cfg,
                           const AgentDesign& design, bool record = true) {
    schedule.validate();
    detail::check_problem(params, cfg, design);
    const FeatureSpec fs = cfg.effective_features();
    const int T = schedule.total_steps;

    EpisodeTape tape;
    tape.schedule = schedule;
    if (record) {
        tape.features.resize(params.input_dim(), T);
        tape.z1.resize(params.hidden_dim(), T);
        tape.hidden.resize(params.hidden_dim(), T);
        tape.z2.resize(params.output_dim(), T);
        if (design.kind == DesignKind::MassSpring)
            tape.ms.reserve(std::size_t(T));
        else
            tape.mpm.reserve(std::size_t(T));
    }
    tape.summary.act.reserve(std::size_t(T));

    SimState s = initial_state(design);
    tape.summary.push_state(s, design);
    ActivationCache cache;
    for (int t = 0; t < T; ++t) {
        const VecX f = assemble_features(s, t, schedule.goal_at(t), fs, design);
        VecX a = forward(params, f, &cache);
        if (record) {
            tape.features.col(t) = f;
            tape.z1.col(t) = cache.z1;
            tape.hidden.col(t) = cache.hidden;
            tape.z2.col(t) = cache.z2;
        }
        try {
            if (design.kind == DesignKind::MassSpring) {
                auto [next, rec] = step(s, a, cfg.sim.mass_spring, design);
                s = std::move(next);
                if (record) tape.ms.push_back(std::move(rec));
            } else {
                auto [next, rec] = mpm_step(s, a, cfg.sim.mpm, design);
                s = std::move(next);
                if (record) tape.mpm.push_back(std::move(rec));
            }
        } catch (const SimulationDiverged& e) {
            throw SimulationDiverged(e.step(), e.detail() + detail::goal_context(schedule, t));
        }
        tape.summary.act.push_back(std::move(a));
        tape.summary.push_state(s, design);
    }
    tape.final_state = std::move(s);
    return tape;
}

inline LossBreakdown episode_loss(const EpisodeTape& tape, const TrainConfig& cfg) {
    return episode_loss(tape.summary, tape.schedule, cfg.loss_weights, cfg.velocity_loss());
}

struct EpisodeGradient {
    ControllerGrad grad;
    LossBreakdown loss;
    double grad_norm = 0.0;
};

/// Reverse sweep over a recorded episode: loss adjoint, then step adjoints chained with the
/// controller and feature adjoints from the last step to the first.
inline EpisodeGradient backprop(const EpisodeTape& tape, const TrainConfig& cfg, const AgentDesign& design,
                                const ControllerParams& params) {
    detail::check_problem(params, cfg, design);
    const int T = tape.length();
    const bool ms = design.kind == DesignKind::MassSpring;
    if (tape.features.cols() != T || (ms ? int(tape.ms.size()) : int(tape.mpm.size())) != T)
        throw ContractViolation("backprop needs a recorded tape");
    const FeatureSpec fs = cfg.effective_features();

    EpisodeGradient out;
    const LossTapeAdjoint ladj =
        episode_loss_adjoint(tape.summary, tape.schedule, cfg.loss_weights, cfg.velocity_loss(), &out.loss);

    StateAdjoint g = StateAdjoint::zeros_like(tape.final_state);
    summary_adjoint_to_state(ladj, tape.summary, std::size_t(T), design, g);

    MatX G1(params.hidden_dim(), T), G2(params.output_dim(), T);
    for (int t = T - 1; t >= 0; --t) {
        StepAdjoint sa = ms ? step_adjoint(tape.ms[std::size_t(t)], g, cfg.sim.mass_spring, design)
                            : mpm_step_adjoint(tape.mpm[std::size_t(t)], g, cfg.sim.mpm, design);
        const VecX g_act = sa.act + ladj.act[std::size_t(t)];

        const VecX z2 = tape.z2.col(t);
        const VecX z1 = tape.z1.col(t);
        const VecX g_z2 =
            g_act.cwiseProduct(z2.unaryExpr([&](double z) { return detail::output_grad(params.output, z, params.omega0); }));
        const VecX g_z1 = (params.W2.transpose() * g_z2)
                              .cwiseProduct(z1.unaryExpr(
                                  [&](double z) { return detail::hidden_grad(params.hidden, z, params.omega0); }));
        G1.col(t) = g_z1;
        G2.col(t) = g_z2;

        g = std::move(sa.state);
        features_adjoint(params.W1.transpose() * g_z1, fs, design, g);
        summary_adjoint_to_state(ladj, tape.summary, std::size_t(t), design, g);
        if (!g.finite() || !g_z1.allFinite()) throw GradientExplosion(t, "state adjoint");
    }

    out.grad.W1.noalias() = G1 * tape.features.transpose();
    out.grad.b1 = G1.rowwise().sum();
    out.grad.W2.noalias() = G2 * tape.hidden.transpose();
    out.grad.b2 = G2.rowwise().sum();
    const VecX flat = flatten(out.grad);
    if (!flat.allFinite()) throw GradientExplosion(0, "parameter gradient");
    out.grad_norm = flat.norm();
    return out;
}

/// Episode loss of a forward-only rollout.
inline LossBreakdown evaluate(const ControllerParams& params, const GoalSchedule& schedule, const TrainConfig& cfg,
                              const AgentDesign& design, VelocityLoss vl) {
    const EpisodeTape tape = rollout(params, schedule, cfg, design, false);
    return episode_loss(tape.summary, schedule, cfg.loss_weights, vl);
}

/// Raw validation losses averaged over the fixed goal grid; always scored with the windowed velocity loss.
inline ValidationLosses validate_raw(const ControllerParams& params, const TrainConfig& cfg, const AgentDesign& design,
                                     int workers = worker_count()) {
    const auto grid =
        validation_goal_grid(cfg.goal_bounds, cfg.schedule_shape(), cfg.validation_velocities, cfg.validation_heights);
    std::vector<LossBreakdown> losses(grid.size());
    parallel_for(int(grid.size()), workers, [&](int i) {
        losses[std::size_t(i)] = evaluate(params, grid[std::size_t(i)], cfg, design, VelocityLoss::Windowed);
    });
    ValidationLosses v;
    for (const auto& l : losses) {
        v.task += l.task(cfg.loss_weights);
        v.run += l.L_v;
        v.jump += l.L_h;
        v.crawl += l.L_c;
    }
    const double n = double(grid.size());
    v.task /= n;
    v.run /= n;
    v.jump /= n;
    v.crawl /= n;
    return v;
}

inline ValidationLosses normalize(const ValidationLosses& raw, const ValidationLosses& baseline) {
    auto ratio = [](double r, double b) {
        if (b > 0.0) return r / b;
        return r == 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    };
    return {ratio(raw.task, baseline.task), ratio(raw.run, baseline.run), ratio(raw.jump, baseline.jump),
            ratio(raw.crawl, baseline.crawl)};
}

/// Validation normalized by the iteration-0 controller's losses.
inline ValidationLosses validate(const ControllerParams& params, const TrainConfig& cfg, const AgentDesign& design,
                                 const ValidationLosses& baseline) {
    return normalize(validate_raw(params, cfg, design), baseline);
}

struct IterationLog {
    int iteration = 0;
    LossBreakdown loss;
    double grad_norm = 0.0;
    double wall_ms = 0.0;
};

struct TrainOptions {
    std::string out_dir;             // empty: no files written
    std::ostream* progress = nullptr; // one line per validation
    int workers = worker_count();
};

struct TrainResult {
    ControllerParams initial;
    ControllerParams params;
    ValidationLosses baseline;
    ValidationLosses final_validation; // normalized
    std::vector<IterationLog> log;
    std::vector<std::pair<int, ValidationLosses>> validations; // normalized, by iteration count
};

inline std::string csv_row(const IterationLog& r) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.3f", r.iteration, r.loss.L_v, r.loss.L_h,
                  r.loss.L_c, r.loss.L_a, r.loss.total, r.grad_norm, r.wall_ms);
    return buf;
}

inline constexpr const char* kLogHeader = "iteration,L_v,L_h,L_c,L_a,total,grad_norm,wall_ms";

/// Sub-seed of batch member b at iteration it.
inline std::uint64_t episode_seed(const TrainConfig& cfg, int it, int b) {
    return sub_seed(cfg.seed, std::uint64_t(it), cfg.shared_batch_schedule ? 0u : std::uint64_t(b));
}

/// Mean of per-episode gradients, reduced in batch order.
inline ControllerGrad mean_gradient(const std::vector<EpisodeGradient>& eps, const ControllerParams& params) {
    ControllerGrad g = ControllerGrad::zeros_like(params);
    for (const auto& e : eps) {
        g.W1 += e.grad.W1;
        g.b1 += e.grad.b1;
        g.W2 += e.grad.W2;
        g.b2 += e.grad.b2;
    }
    const double inv = 1.0 / double(eps.size());
    g.W1 *= inv;
    g.b1 *= inv;
    g.W2 *= inv;
    g.b2 *= inv;
    return g;
}

namespace detail {

inline void write_grad_norms(const std::filesystem::path& dir, const std::vector<IterationLog>& log) {
    std::ofstream norms(dir / "grad_norms.csv");
    norms << "iteration,grad_norm,log10_grad_norm\n";
    std::vector<int> hist(22, 0); // [-inf,-10), [-10,-9) ... [9,10), [10,inf)
    for (const auto& r : log) {
        const double l = std::log10(r.grad_norm);
        char buf[96];
        std::snprintf(buf, sizeof buf, "%d,%.17g,%.6f\n", r.iteration, r.grad_norm, l);
        norms << buf;
        const int bin = !std::isfinite(l) || l < -10.0 ? 0 : (l >= 10.0 ? 21 : 1 + int(std::floor(l + 10.0)));
        ++hist[std::size_t(bin)];
    }
    std::ofstream h(dir / "grad_norm_hist.csv");
    h << "log10_lo,log10_hi,count\n";
    for (int b = 0; b < 22; ++b) {
        const std::string lo = b == 0 ? "-inf" : std::to_string(b - 11);
        const std::string hi = b == 21 ? "inf" : std::to_string(b - 10);
        h << lo << ',' << hi << ',' << hist[std::size_t(b)] << '\n';
    }
}

} // namespace detail

/// Batched BPTT training loop. Writes train_log.csv, grad-norm dumps and checkpoints under out_dir.
inline TrainResult train(const TrainConfig& cfg, const AgentDesign& design, const TrainOptions& opt = {}) {
    cfg.validate();
    if (design.kind != cfg.backend) throw ConfigError("config backend does not match the design kind");
    namespace fs = std::filesystem;
    using clock = std::chrono::steady_clock;

    TrainResult res;
    res.initial = make_initial_params(cfg, design);
    ControllerParams params = res.initial;

    const bool files = !opt.out_dir.empty();
    const fs::path dir(opt.out_dir);
    std::ofstream csv;
    if (files) {
        fs::create_directories(dir);
        csv.open(dir / "train_log.csv");
        csv << kLogHeader << '\n';
    }
    auto checkpoint = [&](int iteration, const std::string& name) {
        if (files) save_checkpoint({cfg, design, params, iteration, res.baseline}, (dir / name).string());
    };
    auto validation = [&](int iteration) {
        const ValidationLosses v = normalize(validate_raw(params, cfg, design, opt.workers), res.baseline);
        res.validations.emplace_back(iteration, v);
        if (opt.progress)
            *opt.progress << "iter " << iteration << " validation task " << std::fixed << std::setprecision(4) << v.task
                          << " run " << v.run << " jump " << v.jump << std::defaultfloat << std::endl;
        return v;
    };

    VecX theta = flatten(params);
    Optimizer optimizer(cfg.optimizer, theta.size());
    const GoalSchedule shape = cfg.schedule_shape();
    std::vector<EpisodeGradient> eps(std::size_t(cfg.batch_size));

    int it = 0;
    try {
        res.baseline = validate_raw(params, cfg, design, opt.workers);
        for (; it < cfg.iterations; ++it) {
            const auto t0 = clock::now();
            parallel_for(cfg.batch_size, opt.workers, [&](int b) {
                const GoalSchedule s = sample_goals(episode_seed(cfg, it, b), cfg.goal_bounds, shape);
                const EpisodeTape tape = rollout(params, s, cfg, design);
                eps[std::size_t(b)] = backprop(tape, cfg, design, params);
            });
            const ControllerGrad g = mean_gradient(eps, params);
            IterationLog row;
            row.iteration = it;
            for (const auto& e : eps) {
                row.loss.L_v += e.loss.L_v;
                row.loss.L_h += e.loss.L_h;
                row.loss.L_c += e.loss.L_c;
                row.loss.L_a += e.loss.L_a;
                row.loss.total += e.loss.total;
            }
            const double inv = 1.0 / cfg.batch_size;
            row.loss.L_v *= inv;
            row.loss.L_h *= inv;
            row.loss.L_c *= inv;
            row.loss.L_a *= inv;
            row.loss.total *= inv;
            const VecX flat = flatten(g);
            row.grad_norm = flat.norm();
            if (!std::isfinite(row.grad_norm)) throw GradientExplosion(0, "batch gradient at iteration " + std::to_string(it));
            optimizer.step(theta, flat);
            assign_flat(params, theta);
            row.wall_ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
            res.log.push_back(row);
            if (files) csv << csv_row(row) << '\n' << std::flush;

            if ((it + 1) % cfg.validation_every == 0) {
                validation(it + 1);
                checkpoint(it + 1, "checkpoint_" + std::to_string(it + 1) + ".json");
            }
        }
    } catch (...) {
        // params still hold the last successful update
        checkpoint(it, "checkpoint_abort.json");
        if (files) detail::write_grad_norms(dir, res.log);
        throw;
    }

    if (res.validations.empty() || res.validations.back().first != cfg.iterations) validation(cfg.iterations);
    res.final_validation = res.validations.back().second;
    checkpoint(cfg.iterations, "checkpoint_final.json");
    if (files) detail::write_grad_norms(dir, res.log);
    res.params = std::move(params);
    return res;
}

struct AblationVariant {
    std::string label;
    TrainConfig config;
};

/// Variants of `base` for one ablation name (OP, AF, BS, PS, SV, TG, LD, ACT).
inline std::vector<AblationVariant> ablation_variants(const TrainConfig& base, const std::string& name) {
    auto v = [&](std::string label, auto edit) {
        TrainConfig c = base;
        edit(c);
        return AblationVariant{std::move(label), c};
    };
    if (name == "OP")
        return {v("Full-OP", [](TrainConfig& c) { c.optimizer = {OptimizerKind::Sgd, 1e-2}; })};
    if (name == "AF")
        return {v("Full-AF", [](TrainConfig& c) {
            c.controller.activation_hidden = Activation::Tanh;
            c.controller.activation_output = Activation::Tanh;
        })};
    if (name == "BS") return {v("Full-BS", [](TrainConfig& c) { c.batch_size = 1; })};
    if (name == "PS") return {v("Full-PS", [](TrainConfig& c) { c.ablation.periodic_signal_on = false; })};
    if (name == "SV") return {v("Full-SV", [](TrainConfig& c) { c.ablation.state_vector_on = false; })};
    if (name == "TG") return {v("Full-TG", [](TrainConfig& c) { c.ablation.targets_on = false; })};
    if (name == "LD") return {v("Full-LD", [](TrainConfig& c) { c.ablation.tailored_loss_on = false; })};
    if (name == "ACT") {
        std::vector<AblationVariant> out;
        for (auto h : kAllActivations)
            for (auto o : kAllActivations) {
                if (h == Activation::Sin && o == Activation::Sin) continue; // that is Full
                out.push_back(v(std::string(to_string(h)) + "/" + to_string(o), [&](TrainConfig& c) {
                    c.controller.activation_hidden = h;
                    c.controller.activation_output = o;
                }));
            }
        return out;
    }
    throw ConfigError("unknown ablation \"" + name + "\" (expected OP, AF, BS, PS, SV, TG, LD or ACT)");
}

struct AblationRow {
    std::string label;
    TrainConfig config;
    std::vector<ValidationLosses> per_seed; // normalized final validation
    ValidationLosses mean;
    ValidationLosses stddev; // sample standard deviation
    int diverged = 0;        // seeds whose training blew up; they count as +inf losses
};

struct AblationReport {
    std::vector<std::uint64_t> seeds;
    int iterations = 0;
    std::vector<AblationRow> rows; // rows[0] is Full

    const AblationRow& row(const std::string& label) const {
        for (const auto& r : rows)
            if (r.label == label) return r;
        throw std::out_of_range("no ablation row " + label);
    }
};

inline void summarize_row(AblationRow& r) {
    const double n = double(r.per_seed.size());
    auto stat = [&](auto field, double& mean, double& sd) {
        mean = 0.0;
        for (const auto& v : r.per_seed) mean += v.*field;
        mean /= n;
        double ss = 0.0;
        for (const auto& v : r.per_seed) ss += (v.*field - mean) * (v.*field - mean);
        sd = n > 1 ? std::sqrt(ss / (n - 1)) : 0.0;
    };
    stat(&ValidationLosses::task, r.mean.task, r.stddev.task);
    stat(&ValidationLosses::run, r.mean.run, r.stddev.run);
    stat(&ValidationLosses::jump, r.mean.jump, r.stddev.jump);
    stat(&ValidationLosses::crawl, r.mean.crawl, r.stddev.crawl);
}

/// Trains Full and every listed ablation with identical seeds; Full is trained once and shared.
inline AblationReport run_ablations(const TrainConfig& base, const std::vector<std::string>& names,
                                    const AgentDesign& design, const std::vector<std::uint64_t>& seeds,
                                    std::ostream* progress = nullptr) {
    if (seeds.empty()) throw ConfigError("ablation needs at least one seed");
    std::vector<AblationVariant> variants{{"Full", base}};
    for (const auto& n : names)
        for (auto& v : ablation_variants(base, n)) variants.push_back(std::move(v));

    AblationReport rep;
    rep.seeds = seeds;
    rep.iterations = base.iterations;
    for (const auto& var : variants) {
        AblationRow row{var.label, var.config, {}, {}, {}};
        for (auto seed : seeds) {
            TrainConfig c = var.config;
            c.seed = seed;
            c.validation_every = std::max(1, c.iterations);
            try {
                const auto res = train(c, design);
                row.per_seed.push_back(res.final_validation);
                if (progress)
                    *progress << var.label << " seed " << seed << ": task " << res.final_validation.task << " run "
                              << res.final_validation.run << " jump " << res.final_validation.jump << std::endl;
            } catch (const std::runtime_error& e) {
                if (!dynamic_cast<const GradientExplosion*>(&e) && !dynamic_cast<const SimulationDiverged*>(&e)) throw;
                constexpr double inf = std::numeric_limits<double>::infinity();
                row.per_seed.push_back({inf, inf, inf, inf});
                ++row.diverged;
                if (progress) *progress << var.label << " seed " << seed << ": diverged (" << e.what() << ")" << std::endl;
            }
        }
        summarize_row(row);
        rep.rows.push_back(std::move(row));
    }
    return rep;
}

inline AblationReport run_ablation(const TrainConfig& base, const std::string& name, const AgentDesign& design,
                                   const std::vector<std::uint64_t>& seeds, std::ostream* progress = nullptr) {
    return run_ablations(base, {name}, design, seeds, progress);
}

/// Table with columns OP AF BS PS SV TG LD | Run Jump Task (mean +- std).
inline std::string format_report(const AblationReport& rep) {
    std::ostringstream os;
    os << std::left << std::setw(16) << "Method" << std::setw(6) << "OP" << std::setw(16) << "AF" << std::setw(5)
       << "BS" << std::setw(4) << "PS" << std::setw(4) << "SV" << std::setw(4) << "TG" << std::setw(4) << "LD"
       << std::setw(14) << "Run" << std::setw(14) << "Jump" << "Task\n";
    auto cell = [](double m, double s) {
        if (!std::isfinite(m)) return std::string("inf");
        char buf[48];
        std::snprintf(buf, sizeof buf, "%.2f+-%.2f", m, s);
        return std::string(buf);
    };
    auto mark = [](bool on) { return on ? "y" : "n"; };
    for (const auto& r : rep.rows) {
        const auto& c = r.config;
        const std::string af =
            std::string(to_string(c.controller.activation_hidden)) + "/" + to_string(c.controller.activation_output);
        os << std::setw(16) << r.label << std::setw(6) << (c.optimizer.kind == OptimizerKind::Adam ? "Adam" : "SGD")
           << std::setw(16) << af << std::setw(5) << c.batch_size << std::setw(4) << mark(c.ablation.periodic_signal_on)
           << std::setw(4) << mark(c.ablation.state_vector_on) << std::setw(4) << mark(c.ablation.targets_on)
           << std::setw(4) << mark(c.ablation.tailored_loss_on) << std::setw(14) << cell(r.mean.run, r.stddev.run)
           << std::setw(14) << cell(r.mean.jump, r.stddev.jump) << cell(r.mean.task, r.stddev.task);
        if (r.diverged > 0) os << "  (" << r.diverged << " of " << r.per_seed.size() << " diverged)";
        os << '\n';
    }
    os << "(" << rep.seeds.size() << " seeds, " << rep.iterations << " iterations, normalized validation loss)\n";
    return os.str();
}

} // namespace diffloco
