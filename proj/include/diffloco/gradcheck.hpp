#pragma once

#include "diffloco/trainer.hpp"

namespace diffloco {

struct GradCheckOptions {
    int steps = 50;
    double eps = 1e-6;
    double tolerance = 1e-4;
    std::uint64_t goal_seed = 1;
};

struct GradCheckResult {
    int steps = 0;
    Eigen::Index parameters = 0;
    double loss = 0.0;
    double max_rel_error = 0.0;
    Eigen::Index worst_index = -1;
    double seconds = 0.0;
    bool pass = false;
};

/// Schedule used by grad-check: two goal periods over an even `steps` (one period if odd),
/// window half a period, crawl enabled.
inline GoalSchedule gradcheck_schedule(const TrainConfig& cfg, int steps, std::uint64_t seed) {
    if (steps < 4) throw ConfigError("grad-check needs at least 4 steps");
    GoalSchedule shape = cfg.schedule_shape();
    shape.total_steps = steps;
    shape.period = steps % 2 == 0 ? steps / 2 : steps;
    shape.velocity_window = std::max(1, shape.period / 2);
    GoalBounds b = cfg.goal_bounds;
    b.c_lo = 0.0;
    b.c_hi = 1.0;
    return sample_goals(seed, b, shape);
}

/// Adjoint gradient of the episode loss against central differences over every controller parameter.
/// The error of component i is |a_i - f_i| / max(|a_i|, |f_i|, 1e-3 * max_j |f_j|).
inline GradCheckResult grad_check(const TrainConfig& cfg, const AgentDesign& design, const GradCheckOptions& opt = {}) {
    cfg.validate();
    const auto t0 = std::chrono::steady_clock::now();
    const GoalSchedule sched = gradcheck_schedule(cfg, opt.steps, opt.goal_seed);
    const ControllerParams p = make_initial_params(cfg, design);
    const EpisodeGradient g = backprop(rollout(p, sched, cfg, design), cfg, design, p);
    const VecX analytic = flatten(g.grad);
    const VecX theta = flatten(p);

    VecX fd(theta.size());
    parallel_for(int(theta.size()), worker_count(), [&](int i) {
        ControllerParams q = p;
        VecX th = theta;
        th[i] = theta[i] + opt.eps;
        assign_flat(q, th);
        const double lp = episode_loss(rollout(q, sched, cfg, design, false), cfg).total;
        th[i] = theta[i] - opt.eps;
        assign_flat(q, th);
        const double lm = episode_loss(rollout(q, sched, cfg, design, false), cfg).total;
        fd[i] = (lp - lm) / (2.0 * opt.eps);
    });

    GradCheckResult r;
    r.steps = opt.steps;
    r.parameters = theta.size();
    r.loss = g.loss.total;
    const double floor = std::max(1e-3 * fd.cwiseAbs().maxCoeff(), 1e-300);
    for (Eigen::Index i = 0; i < theta.size(); ++i) {
        const double e = std::abs(analytic[i] - fd[i]) / std::max({std::abs(analytic[i]), std::abs(fd[i]), floor});
        if (e > r.max_rel_error || r.worst_index < 0) {
            r.max_rel_error = e;
            r.worst_index = i;
        }
    }
    r.pass = r.max_rel_error < opt.tolerance;
    r.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return r;
}

} // namespace diffloco
