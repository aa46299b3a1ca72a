#pragma once

#include "diffloco/agent.hpp"
#include "diffloco/contact.hpp"

namespace diffloco {

struct MassSpringConfig {
    double dt = 0.004;
    double gravity = -9.8;
    // ln 2 (half amplitude per second) left soft robots ringing and training stalled; 10 damps a 0.05 m cell
    // within a few gait cycles and stays well under the explicit limit (about 50 at dt 0.004, unit mass)
    double dashpot = 10.0;
    double act_limit = 0.2;
    double ground_height = 0.1;
    ContactModel contact{};

    void validate() const {
        if (!(dt > 0.0)) throw ConfigError("mass_spring.dt must be > 0");
        if (!(act_limit > 0.0 && act_limit < 1.0)) throw ConfigError("mass_spring.act_limit must be in (0, 1)");
        if (!(contact.mu >= 0.0)) throw ConfigError("contact mu must be >= 0");
        if (!(dashpot >= 0.0)) throw ConfigError("mass_spring.dashpot must be >= 0");
    }
};

/// Adjoint of a SimState. F and C stay empty for mass-spring.
struct StateAdjoint {
    std::vector<Vec2> x;
    std::vector<Vec2> v;
    std::vector<Mat2> F;
    std::vector<Mat2> C;

    static StateAdjoint zeros_like(const SimState& s) {
        StateAdjoint g;
        g.x.assign(s.x.size(), Vec2::Zero());
        g.v.assign(s.v.size(), Vec2::Zero());
        g.F.assign(s.F.size(), Mat2::Zero());
        g.C.assign(s.C.size(), Mat2::Zero());
        return g;
    }
    bool finite() const { return all_finite(x) && all_finite(v) && all_finite(F) && all_finite(C); }
};

struct StepAdjoint {
    StateAdjoint state;
    VecX act;
};

struct MassSpringRecord {
    SimState pre;
    VecX act;
    std::vector<Vec2> dir;       // unit vector a -> b
    std::vector<double> length;  // current length
    std::vector<unsigned char> in_contact;
    std::vector<Mat2> contact_jacobian;
};

namespace detail {

inline void check_actuation(const VecX& act, const AgentDesign& design) {
    if (act.size() != design.num_actuators()) throw ContractViolation("actuation size != actuator groups");
    for (Eigen::Index i = 0; i < act.size(); ++i)
        if (!(std::abs(act[i]) <= 1.0)) throw ContractViolation("actuation outside [-1, 1]");
}

} // namespace detail

/// Effective rest length of spring `s` under actuation.
inline double actuated_rest_length(const AgentDesign& design, const MassSpringConfig& cfg, std::size_t s,
                                   const VecX& act) {
    const int g = design.member_group[s];
    const double L = design.rest_length[s];
    return g < 0 ? L : L * (1.0 + cfg.act_limit * act[g]);
}

/// Spring and dashpot force acting on endpoint `a` (endpoint `b` receives the negation).
inline Vec2 spring_force_on_a(const Vec2& xa, const Vec2& xb, const Vec2& va, const Vec2& vb, double stiffness,
                              double rest, double dashpot) {
    const Vec2 d = xb - xa;
    const double l = d.norm();
    const Vec2 n = d / l;
    return (stiffness * (l - rest) + dashpot * (vb - va).dot(n)) * n;
}

/// One semi-implicit Euler step: forces -> v, ground projection on v, then x += dt v.
inline std::pair<SimState, MassSpringRecord> step(const SimState& state, const VecX& act,
                                                  const MassSpringConfig& cfg, const AgentDesign& design) {
    check_matches(state, design);
    detail::check_actuation(act, design);
    const std::size_t n = state.x.size();
    const std::size_t ns = design.springs.size();

    MassSpringRecord rec;
    rec.pre = state;
    rec.act = act;
    rec.dir.resize(ns);
    rec.length.resize(ns);
    rec.in_contact.assign(n, 0);
    rec.contact_jacobian.assign(n, Mat2::Identity());

    std::vector<Vec2> force(n);
    for (std::size_t i = 0; i < n; ++i) force[i] = Vec2(0.0, design.node_mass[i] * cfg.gravity);

    for (std::size_t s = 0; s < ns; ++s) {
        const auto& sp = design.springs[s];
        const Vec2 d = state.x[sp.b] - state.x[sp.a];
        const double l = d.norm();
        if (!(l > 0.0) || !std::isfinite(l))
            throw SimulationDiverged(state.t, "spring " + std::to_string(s) + " has zero or non-finite length");
        const Vec2 dir = d / l;
        rec.dir[s] = dir;
        rec.length[s] = l;
        const double rest = actuated_rest_length(design, cfg, s, act);
        const Vec2 f =
            (sp.stiffness * (l - rest) + cfg.dashpot * (state.v[sp.b] - state.v[sp.a]).dot(dir)) * dir;
        force[sp.a] += f;
        force[sp.b] -= f;
    }

    SimState next;
    next.t = state.t + 1;
    next.x.resize(n);
    next.v.resize(n);
    for (std::size_t i = 0; i < n; ++i) {
        Vec2 v = state.v[i] + cfg.dt / design.node_mass[i] * force[i];
        if (state.x[i].y() + cfg.dt * v.y() < cfg.ground_height) {
            auto pc = project_contact(v, cfg.contact);
            rec.in_contact[i] = 1;
            rec.contact_jacobian[i] = pc.jacobian;
            v = pc.v;
        }
        next.v[i] = v;
        next.x[i] = state.x[i] + cfg.dt * v;
        if (!all_finite(next.x[i]) || !all_finite(next.v[i]))
            throw SimulationDiverged(state.t, "non-finite state at node " + std::to_string(i));
    }
    return {std::move(next), std::move(rec)};
}

/// Vector-Jacobian product of step() at the recorded point.
inline StepAdjoint step_adjoint(const MassSpringRecord& rec, const StateAdjoint& grad_out,
                                const MassSpringConfig& cfg, const AgentDesign& design) {
    const std::size_t n = rec.pre.x.size();
    if (grad_out.x.size() != n || grad_out.v.size() != n || rec.dir.size() != design.springs.size())
        throw ContractViolation("step_adjoint: shape mismatch");

    StepAdjoint out;
    out.state.x = grad_out.x; // x_next = x + dt v_c
    out.state.v.assign(n, Vec2::Zero());
    out.act = VecX::Zero(design.num_actuators());

    // adjoint of the pre-projection velocity v' = v + dt f / m
    std::vector<Vec2> gvp(n);
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 gvc = grad_out.v[i] + cfg.dt * grad_out.x[i];
        gvp[i] = rec.contact_jacobian[i].transpose() * gvc;
        out.state.v[i] += gvp[i];
    }

    for (std::size_t s = 0; s < design.springs.size(); ++s) {
        const auto& sp = design.springs[s];
        const Vec2& dir = rec.dir[s];
        const double l = rec.length[s];
        const Vec2 vrel = rec.pre.v[sp.b] - rec.pre.v[sp.a];
        const double rest = actuated_rest_length(design, cfg, s, rec.act);
        const double magnitude = sp.stiffness * (l - rest) + cfg.dashpot * vrel.dot(dir);

        // force f lands on a with +, on b with -
        const Vec2 gf = cfg.dt * (gvp[sp.a] / design.node_mass[sp.a] - gvp[sp.b] / design.node_mass[sp.b]);
        const double gmag = gf.dot(dir);
        const Mat2 proj = Mat2::Identity() - dir * dir.transpose();

        // d = x_b - x_a
        const Vec2 gd = gmag * sp.stiffness * dir + gmag * cfg.dashpot * (proj * vrel) / l + magnitude * (proj * gf) / l;
        out.state.x[sp.b] += gd;
        out.state.x[sp.a] -= gd;

        const Vec2 gvrel = gmag * cfg.dashpot * dir;
        out.state.v[sp.b] += gvrel;
        out.state.v[sp.a] -= gvrel;

        const int g = design.member_group[s];
        if (g >= 0) out.act[g] += -gmag * sp.stiffness * design.rest_length[s] * cfg.act_limit;
    }
    return out;
}

} // namespace diffloco
