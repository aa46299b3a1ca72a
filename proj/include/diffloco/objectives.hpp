#pragma once

#include "diffloco/features.hpp"
#include "diffloco/rng.hpp"

#include <stdexcept>

namespace diffloco {

struct GoalSchedule {
    int total_steps = 1000;
    int period = 250;
    int velocity_window = 100;
    double step_dt = 1.0; // time per step used by the velocity estimate; 1 gives per-step units
    std::vector<Goal> goals;

    int num_periods() const { return period > 0 ? total_steps / period : 0; }

    const Goal& goal_at(int t) const { return goals[std::size_t(std::min(t / period, num_periods() - 1))]; }

    void validate() const {
        if (total_steps < 1 || period < 1) throw ContractViolation("schedule: total_steps and period must be >= 1");
        if (total_steps % period != 0) throw ContractViolation("schedule: period must divide total_steps");
        if (velocity_window < 1 || velocity_window >= period)
            throw ContractViolation("schedule: velocity_window must be in [1, period)");
        if (!(step_dt > 0.0)) throw ContractViolation("schedule: step_dt must be > 0");
        if (goals.size() != std::size_t(num_periods())) throw ContractViolation("schedule: one goal per period");
        for (const auto& g : goals) {
            if (g.g_c != 0.0 && g.g_c != 1.0) throw ContractViolation("schedule: g_c must be 0 or 1");
            if (!std::isfinite(g.g_v) || !std::isfinite(g.g_h)) throw ContractViolation("schedule: non-finite goal");
        }
    }
};

struct GoalBounds {
    double v_lo = -0.08, v_hi = 0.08;
    double h_lo = 0.1, h_hi = 0.2;
    double c_lo = 0.0, c_hi = 0.0;

    double max_abs_velocity() const { return std::max(std::abs(v_lo), std::abs(v_hi)); }

    void validate() const {
        auto ok = [](double lo, double hi) { return std::isfinite(lo) && std::isfinite(hi) && lo <= hi; };
        if (!ok(v_lo, v_hi) || !ok(h_lo, h_hi) || !ok(c_lo, c_hi)) throw ConfigError("goal bounds must be finite, lo <= hi");
        if ((c_lo != 0.0 && c_lo != 1.0) || (c_hi != 0.0 && c_hi != 1.0)) throw ConfigError("crawl bounds must be 0 or 1");
    }

    Goal clamp(Goal g) const {
        g.g_v = std::clamp(g.g_v, v_lo, v_hi);
        g.g_h = std::clamp(g.g_h, h_lo, h_hi);
        g.g_c = g.g_c >= 0.5 ? c_hi : c_lo;
        return g;
    }
};

struct LossWeights {
    double lambda_v = 1.0;
    double lambda_h = 1.0;
    double lambda_c = 0.1;
    double lambda_a = 0.01;
    double mu = 1.0 / 0.08; // actuation normalizer, 1 / max |g_v|

    void validate() const {
        for (double w : {lambda_v, lambda_h, lambda_c, lambda_a, mu})
            if (!(w >= 0.0) || !std::isfinite(w)) throw ConfigError("loss weights must be finite and >= 0");
    }
};

enum class VelocityLoss {
    Windowed, // trailing P_r window, evaluated from P_r steps into each period
    Naive,    // consecutive-step velocity at every step
};

struct LossBreakdown {
    double L_v = 0.0, L_h = 0.0, L_c = 0.0, L_a = 0.0, total = 0.0;

    double task(const LossWeights& w) const { return w.lambda_v * L_v + w.lambda_h * L_h + w.lambda_c * L_c; }
};

/// Per-step scalar summaries the losses depend on. States are indexed 0..T, actuations 0..T-1.
struct LossTape {
    std::vector<Vec2> com;
    std::vector<double> low;
    std::vector<int> low_node;
    std::vector<double> high;
    std::vector<int> high_node;
    std::vector<VecX> act;

    void push_state(const SimState& s, const AgentDesign& d) {
        com.push_back(center_of_mass(s, d));
        auto [lo, li] = lowest_node(s);
        auto [hi, hj] = highest_node(s);
        low.push_back(lo);
        low_node.push_back(li);
        high.push_back(hi);
        high_node.push_back(hj);
    }
};

struct LossTapeAdjoint {
    std::vector<Vec2> com;
    std::vector<double> low;
    std::vector<double> high;
    std::vector<VecX> act;
};

inline Vec2 estimate_velocity(const std::vector<Vec2>& com_history, int t, int window, double step_dt = 1.0) {
    if (t < window || t >= int(com_history.size()))
        throw std::out_of_range("estimate_velocity: t=" + std::to_string(t) + " outside the velocity window");
    return (com_history[std::size_t(t)] - com_history[std::size_t(t - window)]) / (window * step_dt);
}

/// Highest lowest-point over states nP .. nP+P.
inline double jump_height(const std::vector<double>& height_history, int n, int period) {
    const std::size_t begin = std::size_t(n) * std::size_t(period);
    if (n < 0 || begin + std::size_t(period) >= height_history.size())
        throw std::out_of_range("jump_height: period " + std::to_string(n) + " is incomplete");
    double best = height_history[begin];
    for (std::size_t t = begin + 1; t <= begin + std::size_t(period); ++t) best = std::max(best, height_history[t]);
    return best;
}

namespace detail {

inline void check_tape(const LossTape& tape, const GoalSchedule& sched) {
    sched.validate();
    const std::size_t T = std::size_t(sched.total_steps);
    if (tape.com.size() != T + 1 || tape.low.size() != T + 1 || tape.high.size() != T + 1 || tape.act.size() != T)
        throw ContractViolation("loss tape length does not match the schedule");
}

inline double mean_abs(const VecX& a) { return a.size() ? a.cwiseAbs().mean() : 0.0; }

// Shared by the loss and its adjoint; with `adj` non-null also writes d total / d tape.
inline LossBreakdown loss_impl(const LossTape& tape, const GoalSchedule& s, const LossWeights& w, VelocityLoss vl,
                               LossTapeAdjoint* adj) {
    check_tape(tape, s);
    const int T = s.total_steps, P = s.period, Pr = s.velocity_window;
    if (adj) {
        adj->com.assign(std::size_t(T + 1), Vec2::Zero());
        adj->low.assign(std::size_t(T + 1), 0.0);
        adj->high.assign(std::size_t(T + 1), 0.0);
        adj->act.resize(std::size_t(T));
        for (int t = 0; t < T; ++t) adj->act[std::size_t(t)] = VecX::Zero(tape.act[std::size_t(t)].size());
    }
    LossBreakdown out;
    for (int n = 0; n < s.num_periods(); ++n) {
        const Goal& g = s.goals[std::size_t(n)];
        const int base = n * P;

        const int window = vl == VelocityLoss::Windowed ? Pr : 1;
        const double denom = window * s.step_dt;
        for (int tl = window; tl <= P; ++tl) {
            const int t = base + tl;
            const double r = (tape.com[std::size_t(t)].x() - tape.com[std::size_t(t - window)].x()) / denom - g.g_v;
            out.L_v += r * r;
            if (adj) {
                const double gr = 2.0 * w.lambda_v * r / denom;
                adj->com[std::size_t(t)].x() += gr;
                adj->com[std::size_t(t - window)].x() -= gr;
            }
        }

        int arg = base;
        for (int t = base + 1; t <= base + P; ++t)
            if (tape.low[std::size_t(t)] > tape.low[std::size_t(arg)]) arg = t;
        const double rh = tape.low[std::size_t(arg)] - g.g_h;
        out.L_h += rh * rh;
        if (adj) adj->low[std::size_t(arg)] += 2.0 * w.lambda_h * rh;

        if (g.g_c != 0.0)
            for (int t = base; t <= base + P; ++t) {
                out.L_c += g.g_c * tape.high[std::size_t(t)];
                if (adj) adj->high[std::size_t(t)] += w.lambda_c * g.g_c;
            }

        const double target = w.mu * std::abs(g.g_v);
        for (int t = base; t < base + P; ++t) {
            const VecX& a = tape.act[std::size_t(t)];
            const double ra = mean_abs(a) - target;
            out.L_a += ra * ra;
            if (adj && a.size()) {
                const double ga = 2.0 * w.lambda_a * ra / double(a.size());
                auto& out_a = adj->act[std::size_t(t)];
                for (Eigen::Index i = 0; i < a.size(); ++i)
                    out_a[i] += a[i] > 0.0 ? ga : (a[i] < 0.0 ? -ga : 0.0);
            }
        }
    }
    out.total = w.lambda_v * out.L_v + w.lambda_h * out.L_h + w.lambda_c * out.L_c + w.lambda_a * out.L_a;
    if (!std::isfinite(out.total)) throw NumericError("episode loss is not finite");
    return out;
}

} // namespace detail

inline LossBreakdown episode_loss(const LossTape& tape, const GoalSchedule& sched, const LossWeights& w,
                                  VelocityLoss vl = VelocityLoss::Windowed) {
    return detail::loss_impl(tape, sched, w, vl, nullptr);
}

inline LossTapeAdjoint episode_loss_adjoint(const LossTape& tape, const GoalSchedule& sched, const LossWeights& w,
                                            VelocityLoss vl = VelocityLoss::Windowed,
                                            LossBreakdown* breakdown = nullptr) {
    LossTapeAdjoint adj;
    auto b = detail::loss_impl(tape, sched, w, vl, &adj);
    if (breakdown) *breakdown = b;
    return adj;
}

/// Scatters the summary adjoint of state t onto its nodes.
inline void summary_adjoint_to_state(const LossTapeAdjoint& adj, const LossTape& tape, std::size_t t,
                                     const AgentDesign& design, StateAdjoint& grad) {
    const Vec2 gc = adj.com[t];
    if (gc.x() != 0.0 || gc.y() != 0.0)
        for (std::size_t i = 0; i < grad.x.size(); ++i) grad.x[i] += (design.node_mass[i] / design.total_mass) * gc;
    if (adj.low[t] != 0.0) grad.x[std::size_t(tape.low_node[t])].y() += adj.low[t];
    if (adj.high[t] != 0.0) grad.x[std::size_t(tape.high_node[t])].y() += adj.high[t];
}

inline GoalSchedule sample_goals(std::uint64_t seed, const GoalBounds& bounds, GoalSchedule shape) {
    bounds.validate();
    Rng rng(seed);
    shape.goals.resize(std::size_t(shape.num_periods()));
    for (auto& g : shape.goals) {
        g.g_v = uniform(rng, bounds.v_lo, bounds.v_hi);
        g.g_h = uniform(rng, bounds.h_lo, bounds.h_hi);
        // crawl is a flag: both values equally likely when the bounds allow both
        g.g_c = bounds.c_lo == bounds.c_hi ? bounds.c_lo : (uniform01(rng) < 0.5 ? 0.0 : 1.0);
    }
    return shape;
}

inline std::vector<double> linspace(double lo, double hi, int n) {
    if (lo == hi || n <= 1) return {lo};
    std::vector<double> v(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) v[std::size_t(i)] = lo + (hi - lo) * i / (n - 1);
    v.back() = hi;
    return v;
}

/// Cross product of evenly spaced velocities and heights (and both crawl values if allowed);
/// each schedule holds one goal for the whole episode.
inline std::vector<GoalSchedule> validation_goal_grid(const GoalBounds& bounds, const GoalSchedule& shape,
                                                      int n_velocity = 9, int n_height = 3) {
    bounds.validate();
    std::vector<double> crawl = bounds.c_lo == bounds.c_hi ? std::vector<double>{bounds.c_lo}
                                                           : std::vector<double>{bounds.c_lo, bounds.c_hi};
    std::vector<GoalSchedule> grid;
    for (double c : crawl)
        for (double h : linspace(bounds.h_lo, bounds.h_hi, n_height))
            for (double v : linspace(bounds.v_lo, bounds.v_hi, n_velocity)) {
                GoalSchedule s = shape;
                s.goals.assign(std::size_t(s.num_periods()), Goal{v, h, c});
                grid.push_back(std::move(s));
            }
    return grid;
}

} // namespace diffloco
