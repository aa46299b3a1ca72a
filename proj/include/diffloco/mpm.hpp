#pragma once

#include "diffloco/agent.hpp"
#include "diffloco/contact.hpp"
#include "diffloco/mass_spring.hpp" // StateAdjoint, StepAdjoint

#include <array>

namespace diffloco {

struct MpmConfig {
    double dt = 5.0e-4; // 1e-3 meets CFL but inverts elements under full actuation
    double grid_dx = 0.2 / 32.0;
    int grid_extent = 64; // nodes per axis of the moving window
    int margin = 3;       // cells kept free around the particle bounding box
    double gravity = -9.8;
    double youngs_modulus = 1.0e4;
    double poisson_ratio = 0.3;
    double particle_volume = (0.1 / 32.0) * (0.1 / 32.0);
    double particle_mass = 1000.0 * (0.1 / 32.0) * (0.1 / 32.0);
    double act_stress_bound = 1.0e3;
    double ground_height = 0.1;
    ContactModel contact{};

    double mu() const { return youngs_modulus / (2.0 * (1.0 + poisson_ratio)); }
    double lambda() const {
        return youngs_modulus * poisson_ratio / ((1.0 + poisson_ratio) * (1.0 - 2.0 * poisson_ratio));
    }
    double wave_speed() const {
        return std::sqrt((lambda() + 2.0 * mu()) / (particle_mass / particle_volume));
    }

    void validate() const {
        if (!(dt > 0.0 && grid_dx > 0.0)) throw ConfigError("mpm: dt and grid_dx must be > 0");
        if (!(poisson_ratio > 0.0 && poisson_ratio < 0.5)) throw ConfigError("mpm: poisson_ratio must be in (0, 0.5)");
        if (!(youngs_modulus >= 0.0 && particle_mass > 0.0 && particle_volume > 0.0))
            throw ConfigError("mpm: material constants must be positive");
        if (grid_extent < 2 * margin + 4) throw ConfigError("mpm: grid_extent too small for margin");
        if (youngs_modulus > 0.0 && dt > grid_dx / wave_speed())
            throw ConfigError("mpm: dt violates CFL bound dt <= dx / wave_speed");
        if (!(contact.mu >= 0.0)) throw ConfigError("contact mu must be >= 0");
    }
};

struct MpmRecord {
    SimState pre;
    VecX act;
    Eigen::Vector2i origin_cell; // window corner in whole cells
};

/// Background grid snapshot after particle-to-grid transfer.
struct GridWindow {
    Vec2 origin;
    int extent = 0;
    std::vector<double> node_mass;
    std::vector<Vec2> node_momentum;
};

/// Quadratic B-spline weights and their derivatives for fractional offset fx in [0.5, 1.5).
struct BsplineStencil {
    std::array<Vec2, 3> w;
    std::array<Vec2, 3> dw;
};

inline BsplineStencil bspline_weights(const Vec2& fx) {
    BsplineStencil s;
    const Vec2 a = Vec2::Constant(1.5) - fx;
    const Vec2 b = fx - Vec2::Constant(1.0);
    const Vec2 c = fx - Vec2::Constant(0.5);
    s.w[0] = 0.5 * a.cwiseProduct(a);
    s.w[1] = Vec2::Constant(0.75) - b.cwiseProduct(b);
    s.w[2] = 0.5 * c.cwiseProduct(c);
    s.dw[0] = -a;
    s.dw[1] = -2.0 * b;
    s.dw[2] = c;
    return s;
}

/// 2D polar rotation of F (F = R S, S symmetric). Returns false when F has no unique rotation.
inline bool polar_rotation(const Mat2& F, Mat2& R) {
    const double a = F(0, 0) + F(1, 1);
    const double b = F(1, 0) - F(0, 1);
    const double r = std::hypot(a, b);
    if (!(r > 0.0)) return false;
    const double c = a / r, s = b / r;
    R << c, -s, s, c;
    return true;
}

namespace detail {

inline const Mat2& vertical_axis_projector() {
    static const Mat2 E = (Mat2() << 0.0, 0.0, 0.0, 1.0).finished();
    return E;
}

/// Kirchhoff stress: fixed corotated elasticity plus the material-vertical muscle
/// term rotated by the polar rotation. Positive activation relaxes (pushes out).
inline Mat2 kirchhoff_stress(const Mat2& F, const Mat2& R, double active, double mu, double lambda) {
    const double J = F.determinant();
    return 2.0 * mu * (F - R) * F.transpose() + lambda * (J - 1.0) * J * Mat2::Identity() -
           active * R * vertical_axis_projector() * R.transpose();
}

/// All intermediates of one MLS-MPM step; rebuilt by the adjoint from the record.
struct MpmForward {
    Eigen::Vector2i origin_cell;
    Vec2 origin;
    int extent = 0;
    std::vector<Eigen::Vector2i> base;
    std::vector<Vec2> fx;
    std::vector<BsplineStencil> stencil;
    std::vector<Mat2> R;
    std::vector<Mat2> affine;
    std::vector<double> active;
    std::vector<double> grid_mass;
    std::vector<Vec2> grid_mom;
    std::vector<Vec2> grid_v;
    std::vector<Mat2> grid_jac;
    SimState next;

    int node(int i, int j) const { return i * extent + j; }
};

inline Eigen::Vector2i window_origin(const std::vector<Vec2>& x, const MpmConfig& cfg) {
    Vec2 lo = x.front(), hi = x.front();
    for (const auto& p : x) {
        lo = lo.cwiseMin(p);
        hi = hi.cwiseMax(p);
    }
    const Eigen::Vector2i cell((lo / cfg.grid_dx).array().floor().cast<int>());
    const Eigen::Vector2i origin = cell - Eigen::Vector2i::Constant(cfg.margin);
    const Vec2 span = (hi - origin.cast<double>() * cfg.grid_dx) / cfg.grid_dx;
    if (span.maxCoeff() > cfg.grid_extent - 1 - cfg.margin)
        throw std::logic_error("mpm grid window cannot hold the particles with the required margin");
    return origin;
}

inline void mpm_forward(MpmForward& fw, const SimState& state, const VecX& act, const Eigen::Vector2i& origin_cell,
                        const MpmConfig& cfg, const AgentDesign& design, bool compute_g2p = true) {
    const std::size_t np = state.x.size();
    const double dx = cfg.grid_dx, inv_dx = 1.0 / dx;
    const double mu = cfg.mu(), lambda = cfg.lambda();
    const double m = cfg.particle_mass;
    const double stress_scale = -cfg.dt * cfg.particle_volume * 4.0 * inv_dx * inv_dx;

    fw.origin_cell = origin_cell;
    fw.origin = origin_cell.cast<double>() * dx;
    fw.extent = cfg.grid_extent;
    const std::size_t nodes = static_cast<std::size_t>(fw.extent) * fw.extent;
    fw.grid_mass.assign(nodes, 0.0);
    fw.grid_mom.assign(nodes, Vec2::Zero());
    fw.base.resize(np);
    fw.fx.resize(np);
    fw.stencil.resize(np);
    fw.R.resize(np);
    fw.affine.resize(np);
    fw.active.resize(np);

    for (std::size_t p = 0; p < np; ++p) {
        const Vec2 X = (state.x[p] - fw.origin) * inv_dx;
        const Eigen::Vector2i base((X - Vec2::Constant(0.5)).array().floor().cast<int>());
        if (base.minCoeff() < 0 || base.maxCoeff() + 2 >= fw.extent)
            throw std::logic_error("particle left the mpm grid window");
        fw.base[p] = base;
        fw.fx[p] = X - base.cast<double>();
        fw.stencil[p] = bspline_weights(fw.fx[p]);

        const Mat2& F = state.F[p];
        if (!(F.determinant() > 0.0)) throw SimulationDiverged(state.t, "det F <= 0 at particle " + std::to_string(p));
        if (!polar_rotation(F, fw.R[p])) throw SimulationDiverged(state.t, "degenerate F at particle " + std::to_string(p));
        const int g = design.member_group[p];
        fw.active[p] = g < 0 ? 0.0 : act[g] * cfg.act_stress_bound;
        const Mat2 tau = kirchhoff_stress(F, fw.R[p], fw.active[p], mu, lambda);
        fw.affine[p] = stress_scale * tau + m * state.C[p];

        const auto& st = fw.stencil[p];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double N = st.w[i].x() * st.w[j].y();
                const Vec2 dpos = (Vec2(i, j) - fw.fx[p]) * dx;
                const int k = fw.node(base.x() + i, base.y() + j);
                fw.grid_mom[k] += N * (m * state.v[p] + fw.affine[p] * dpos);
                fw.grid_mass[k] += N * m;
            }
    }
    if (!compute_g2p) return;

    fw.grid_v.assign(nodes, Vec2::Zero());
    fw.grid_jac.assign(nodes, Mat2::Identity());
    for (int i = 0; i < fw.extent; ++i)
        for (int j = 0; j < fw.extent; ++j) {
            const int k = fw.node(i, j);
            if (fw.grid_mass[k] <= 0.0) continue;
            Vec2 v = fw.grid_mom[k] / fw.grid_mass[k] + Vec2(0.0, cfg.dt * cfg.gravity);
            if (fw.origin.y() + j * dx < cfg.ground_height) {
                auto pc = project_contact(v, cfg.contact);
                fw.grid_jac[k] = pc.jacobian;
                v = pc.v;
            }
            fw.grid_v[k] = v;
        }

    SimState& next = fw.next;
    next.t = state.t + 1;
    next.x.resize(np);
    next.v.resize(np);
    next.F.resize(np);
    next.C.resize(np);
    for (std::size_t p = 0; p < np; ++p) {
        Vec2 v = Vec2::Zero();
        Mat2 B = Mat2::Zero();
        const auto& st = fw.stencil[p];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double N = st.w[i].x() * st.w[j].y();
                const Vec2 dpos = (Vec2(i, j) - fw.fx[p]) * dx;
                const Vec2& gv = fw.grid_v[fw.node(fw.base[p].x() + i, fw.base[p].y() + j)];
                v += N * gv;
                B += N * gv * dpos.transpose();
            }
        const Mat2 C = 4.0 * inv_dx * inv_dx * B;
        next.v[p] = v;
        next.C[p] = C;
        next.x[p] = state.x[p] + cfg.dt * v;
        next.F[p] = (Mat2::Identity() + cfg.dt * C) * state.F[p];
        if (!all_finite(next.x[p]) || !all_finite(next.v[p]) || !next.F[p].allFinite() || !next.C[p].allFinite())
            throw SimulationDiverged(state.t, "non-finite particle " + std::to_string(p));
        if (!(next.F[p].determinant() > 0.0))
            throw SimulationDiverged(state.t, "det F <= 0 at particle " + std::to_string(p));
    }
}

inline void check_mpm_inputs(const SimState& state, const VecX& act, const AgentDesign& design) {
    check_matches(state, design);
    if (state.F.size() != state.x.size() || state.C.size() != state.x.size())
        throw ContractViolation("mpm state needs F and C per particle");
    check_actuation(act, design);
    for (std::size_t p = 0; p < state.x.size(); ++p)
        if (!all_finite(state.x[p]) || !all_finite(state.v[p]) || !state.F[p].allFinite() || !state.C[p].allFinite())
            throw SimulationDiverged(state.t, "non-finite input particle " + std::to_string(p));
}

} // namespace detail

/// Particle-to-grid transfer only, for conservation checks.
inline GridWindow mpm_p2g(const SimState& state, const VecX& act, const MpmConfig& cfg, const AgentDesign& design) {
    detail::check_mpm_inputs(state, act, design);
    detail::MpmForward fw;
    detail::mpm_forward(fw, state, act, detail::window_origin(state.x, cfg), cfg, design, false);
    return {fw.origin, fw.extent, std::move(fw.grid_mass), std::move(fw.grid_mom)};
}

/// Net grid force (momentum change from stress, gravity and contact) of one step.
inline Vec2 mpm_net_grid_force(const SimState& state, const VecX& act, const MpmConfig& cfg, const AgentDesign& design) {
    detail::check_mpm_inputs(state, act, design);
    detail::MpmForward fw;
    detail::mpm_forward(fw, state, act, detail::window_origin(state.x, cfg), cfg, design);
    Vec2 after = Vec2::Zero();
    for (std::size_t k = 0; k < fw.grid_v.size(); ++k) after += fw.grid_mass[k] * fw.grid_v[k];
    Vec2 before = Vec2::Zero();
    for (std::size_t p = 0; p < state.v.size(); ++p) before += cfg.particle_mass * state.v[p];
    return (after - before) / cfg.dt;
}

/// One MLS-MPM step with APIC transfer on a window snapped to the particles.
inline std::pair<SimState, MpmRecord> mpm_step(const SimState& state, const VecX& act, const MpmConfig& cfg,
                                               const AgentDesign& design) {
    detail::check_mpm_inputs(state, act, design);
    detail::MpmForward fw;
    const Eigen::Vector2i origin = detail::window_origin(state.x, cfg);
    detail::mpm_forward(fw, state, act, origin, cfg, design);
    return {std::move(fw.next), MpmRecord{state, act, origin}};
}

/// Vector-Jacobian product of mpm_step; intermediates are recomputed from the record.
inline StepAdjoint mpm_step_adjoint(const MpmRecord& rec, const StateAdjoint& g, const MpmConfig& cfg,
                                    const AgentDesign& design) {
    const std::size_t np = rec.pre.x.size();
    if (g.x.size() != np || g.v.size() != np || g.F.size() != np || g.C.size() != np)
        throw ContractViolation("mpm_step_adjoint: shape mismatch");

    detail::MpmForward fw;
    detail::mpm_forward(fw, rec.pre, rec.act, rec.origin_cell, cfg, design);

    const double dx = cfg.grid_dx, inv_dx = 1.0 / dx;
    const double D = 4.0 * inv_dx * inv_dx;
    const double m = cfg.particle_mass;
    const double mu = cfg.mu(), lambda = cfg.lambda();
    const double stress_scale = -cfg.dt * cfg.particle_volume * D;

    StepAdjoint out;
    out.state = StateAdjoint::zeros_like(rec.pre);
    out.act = VecX::Zero(design.num_actuators());

    std::vector<Vec2> gv_new(np), g_fx(np, Vec2::Zero());
    std::vector<Mat2> gC_new(np);
    for (std::size_t p = 0; p < np; ++p) {
        const Mat2 A = Mat2::Identity() + cfg.dt * fw.next.C[p];
        out.state.F[p] = A.transpose() * g.F[p];
        gC_new[p] = g.C[p] + cfg.dt * g.F[p] * rec.pre.F[p].transpose();
        out.state.x[p] = g.x[p];
        gv_new[p] = g.v[p] + cfg.dt * g.x[p];
    }

    // G2P
    std::vector<Vec2> g_grid_v(fw.grid_v.size(), Vec2::Zero());
    for (std::size_t p = 0; p < np; ++p) {
        const auto& st = fw.stencil[p];
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double N = st.w[i].x() * st.w[j].y();
                const Vec2 dN(st.dw[i].x() * st.w[j].y(), st.w[i].x() * st.dw[j].y());
                const Vec2 dpos = (Vec2(i, j) - fw.fx[p]) * dx;
                const int k = fw.node(fw.base[p].x() + i, fw.base[p].y() + j);
                const Vec2& gv = fw.grid_v[k];
                const Vec2 gCd = gC_new[p] * dpos;
                g_grid_v[k] += N * (gv_new[p] + D * gCd);
                const double gN = gv_new[p].dot(gv) + D * gv.dot(gCd);
                const Vec2 gdpos = D * N * (gC_new[p].transpose() * gv);
                g_fx[p] += gN * dN - dx * gdpos;
            }
    }

    // grid normalisation, gravity and contact
    std::vector<Vec2> g_mom(fw.grid_v.size(), Vec2::Zero());
    std::vector<double> g_mass(fw.grid_v.size(), 0.0);
    for (std::size_t k = 0; k < fw.grid_v.size(); ++k) {
        if (fw.grid_mass[k] <= 0.0) continue;
        const Vec2 gvh = fw.grid_jac[k].transpose() * g_grid_v[k];
        g_mom[k] = gvh / fw.grid_mass[k];
        g_mass[k] = -gvh.dot(fw.grid_mom[k]) / (fw.grid_mass[k] * fw.grid_mass[k]);
    }

    // P2G and stress
    for (std::size_t p = 0; p < np; ++p) {
        const auto& st = fw.stencil[p];
        Mat2 g_affine = Mat2::Zero();
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) {
                const double N = st.w[i].x() * st.w[j].y();
                const Vec2 dN(st.dw[i].x() * st.w[j].y(), st.w[i].x() * st.dw[j].y());
                const Vec2 dpos = (Vec2(i, j) - fw.fx[p]) * dx;
                const int k = fw.node(fw.base[p].x() + i, fw.base[p].y() + j);
                const Vec2 q = m * rec.pre.v[p] + fw.affine[p] * dpos;
                const double gN = g_mom[k].dot(q) + g_mass[k] * m;
                out.state.v[p] += N * m * g_mom[k];
                g_affine += N * g_mom[k] * dpos.transpose();
                const Vec2 gdpos = N * (fw.affine[p].transpose() * g_mom[k]);
                g_fx[p] += gN * dN - dx * gdpos;
            }
        out.state.C[p] += m * g_affine;
        out.state.x[p] += g_fx[p] * inv_dx;

        const Mat2 G = stress_scale * g_affine; // adjoint of Kirchhoff stress
        const Mat2& F = rec.pre.F[p];
        const Mat2& R = fw.R[p];
        const Mat2& E = detail::vertical_axis_projector();
        const double J = F.determinant();
        const double active = fw.active[p];

        Mat2 gF = 2.0 * mu * G * F + 2.0 * mu * G.transpose() * (F - R);
        const Mat2 gR = -2.0 * mu * G * F - active * (G + G.transpose()) * R * E;
        Mat2 cof;
        cof << F(1, 1), -F(1, 0), -F(0, 1), F(0, 0);
        gF += lambda * (2.0 * J - 1.0) * G.trace() * cof;

        const double a = F(0, 0) + F(1, 1), b = F(1, 0) - F(0, 1);
        const double r2 = a * a + b * b;
        Mat2 RJ;
        RJ << -R(1, 0), -R(0, 0), R(0, 0), -R(1, 0); // R * [[0,-1],[1,0]]
        const double gtheta = (RJ.cwiseProduct(gR)).sum();
        gF(0, 0) += -b / r2 * gtheta;
        gF(1, 1) += -b / r2 * gtheta;
        gF(1, 0) += a / r2 * gtheta;
        gF(0, 1) += -a / r2 * gtheta;
        out.state.F[p] += gF;

        const int grp = design.member_group[p];
        if (grp >= 0) {
            const double g_active = -(R * E * R.transpose()).cwiseProduct(G).sum();
            out.act[grp] += cfg.act_stress_bound * g_active;
        }
    }
    return out;
}

} // namespace diffloco
