#include "diffloco/design_io.hpp"
#include "diffloco/mpm.hpp"
#include "oracle.hpp"

#include <gtest/gtest.h>

#include <limits>

using namespace diffloco;

namespace {

constexpr double kNoGround = -std::numeric_limits<double>::infinity();

AgentDesign block() { return load_design(std::string(DIFFLOCO_DESIGNS) + "/mpm_block.json"); }

MpmConfig free_space() {
    MpmConfig cfg;
    cfg.ground_height = kNoGround;
    return cfg;
}

SimState jittered(const AgentDesign& d, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    SimState s = initial_state(d);
    for (std::size_t p = 0; p < s.x.size(); ++p) {
        s.x[p] += 4e-4 * Vec2(u(rng), u(rng));
        s.v[p] = 0.05 * Vec2(u(rng), u(rng));
        s.F[p] = Mat2::Identity() + 0.05 * Mat2::Random();
        s.C[p] = 2.0 * Mat2::Random();
    }
    return s;
}

// flat layout per particle: x(2) v(2) F(4) C(4), then actuation
Eigen::VectorXd flatten(const SimState& s, const VecX& act) {
    const Eigen::Index n = static_cast<Eigen::Index>(s.x.size());
    Eigen::VectorXd z(12 * n + act.size());
    for (Eigen::Index p = 0; p < n; ++p) {
        z.segment<2>(12 * p) = s.x[p];
        z.segment<2>(12 * p + 2) = s.v[p];
        z.segment<4>(12 * p + 4) = Eigen::Map<const Eigen::Vector4d>(s.F[p].data());
        z.segment<4>(12 * p + 8) = Eigen::Map<const Eigen::Vector4d>(s.C[p].data());
    }
    z.tail(act.size()) = act;
    return z;
}

void unflatten(const Eigen::VectorXd& z, SimState& s, VecX& act) {
    const Eigen::Index n = static_cast<Eigen::Index>(s.x.size());
    for (Eigen::Index p = 0; p < n; ++p) {
        s.x[p] = z.segment<2>(12 * p);
        s.v[p] = z.segment<2>(12 * p + 2);
        Eigen::Map<Eigen::Vector4d>(s.F[p].data()) = z.segment<4>(12 * p + 4);
        Eigen::Map<Eigen::Vector4d>(s.C[p].data()) = z.segment<4>(12 * p + 8);
    }
    act = z.tail(act.size());
}

Vec2 com(const SimState& s) {
    Vec2 c = Vec2::Zero();
    for (const auto& x : s.x) c += x;
    return c / static_cast<double>(s.x.size());
}

Vec2 mean_velocity(const SimState& s) {
    Vec2 c = Vec2::Zero();
    for (const auto& v : s.v) c += v;
    return c / static_cast<double>(s.v.size());
}

} // namespace

TEST(Bspline, PartitionOfUnity) {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    for (int trial = 0; trial < 10000; ++trial) {
        const auto st = bspline_weights(Vec2(u(rng), u(rng)));
        double sum = 0.0;
        for (int i = 0; i < 3; ++i)
            for (int j = 0; j < 3; ++j) sum += st.w[i].x() * st.w[j].y();
        EXPECT_NEAR(sum, 1.0, 1e-12);
    }
}

TEST(Polar, RotationOfRotatedStretch) {
    const double th = 0.7;
    Mat2 R0;
    R0 << std::cos(th), -std::sin(th), std::sin(th), std::cos(th);
    Mat2 S;
    S << 1.3, 0.2, 0.2, 0.8;
    Mat2 R;
    ASSERT_TRUE(polar_rotation(R0 * S, R));
    EXPECT_LT((R - R0).norm(), 1e-12);
}

TEST(MpmStep, SingleParticleAtRestStaysPut) {
    AgentDesign d;
    d.kind = DesignKind::Mpm;
    d.nodes = {Vec2(0.3, 0.4)};
    d.node_mass = {1.0};
    d.finalize();
    auto cfg = free_space();
    cfg.gravity = 0.0;
    const auto s0 = initial_state(d);
    auto [next, rec] = mpm_step(s0, VecX(0), cfg, d);
    EXPECT_LT((next.x[0] - s0.x[0]).norm(), 1e-15);
    EXPECT_LT(next.v[0].norm(), 1e-15);
    EXPECT_LT((next.F[0] - Mat2::Identity()).norm(), 1e-15);
    EXPECT_LT(next.C[0].norm(), 1e-12);
}

TEST(MpmStep, FreeFallCenterOfMassAccelerationIsGravity) {
    const auto d = block();
    const auto cfg = free_space();
    std::mt19937_64 rng(4);
    SimState s = jittered(d, rng);
    for (int t = 0; t < 10; ++t) {
        const Vec2 v0 = mean_velocity(s);
        s = mpm_step(s, VecX::Zero(2), cfg, d).first;
        const Vec2 dv = mean_velocity(s) - v0;
        EXPECT_NEAR(dv.x() / cfg.dt, 0.0, 1e-10);
        EXPECT_NEAR(dv.y() / cfg.dt, cfg.gravity, 1e-10);
    }
}

TEST(MpmStep, ActuationIsInternal) {
    const auto d = block();
    const auto cfg = free_space();
    SimState s = initial_state(d);
    const VecX act = VecX::Ones(2);
    const double M = cfg.particle_mass * d.num_nodes();
    for (int t = 0; t < 5; ++t) {
        // oracle: summed grid-node forces equal the external load only
        const Vec2 f = mpm_net_grid_force(s, act, cfg, d);
        EXPECT_NEAR(f.x() / M, 0.0, 1e-10);
        EXPECT_NEAR(f.y() / M, cfg.gravity, 1e-10);
        const Vec2 v0 = mean_velocity(s);
        s = mpm_step(s, act, cfg, d).first;
        EXPECT_NEAR((mean_velocity(s) - v0).y() / cfg.dt, cfg.gravity, 1e-10);
    }
    // but it does deform the block
    EXPECT_GT((s.F[0] - Mat2::Identity()).norm(), 1e-4);
}

TEST(MpmStep, MassAndMomentumTransfer) {
    const auto d = block();
    const auto cfg = free_space();
    std::mt19937_64 rng(8);
    SimState s = jittered(d, rng);
    for (int t = 0; t < 20; ++t) {
        const VecX act = oracle::random_vector(rng, 2);
        const auto grid = mpm_p2g(s, act, cfg, d);
        double gm = 0.0;
        Vec2 gp = Vec2::Zero();
        for (std::size_t k = 0; k < grid.node_mass.size(); ++k) {
            gm += grid.node_mass[k];
            gp += grid.node_momentum[k];
        }
        const double pm = cfg.particle_mass * d.num_nodes();
        Vec2 pp = Vec2::Zero();
        for (const auto& v : s.v) pp += cfg.particle_mass * v;
        EXPECT_NEAR(gm / pm, 1.0, 1e-12);
        EXPECT_LT((gp - pp).norm() / pp.norm(), 1e-10);
        s = mpm_step(s, act, cfg, d).first;
    }
}

TEST(MpmStep, WindowTranslationInvariance) {
    const auto d = block();
    const auto cfg = free_space();
    std::mt19937_64 rng(12);
    const SimState s = jittered(d, rng);
    const VecX act = oracle::random_vector(rng, 2);
    for (const Vec2 shift : {Vec2(cfg.grid_dx, 0.0), Vec2(0.0, cfg.grid_dx), Vec2(-cfg.grid_dx, cfg.grid_dx)}) {
        SimState moved = s;
        for (auto& x : moved.x) x += shift;
        const auto a = mpm_step(s, act, cfg, d);
        const auto b = mpm_step(moved, act, cfg, d);
        EXPECT_EQ(b.second.origin_cell - a.second.origin_cell,
                  Eigen::Vector2i((shift / cfg.grid_dx).array().round().cast<int>()));
        for (std::size_t p = 0; p < s.x.size(); ++p) {
            EXPECT_LT((b.first.x[p] - shift - a.first.x[p]).norm(), 1e-10);
            EXPECT_LT((b.first.v[p] - a.first.v[p]).norm(), 1e-10);
            EXPECT_LT((b.first.F[p] - a.first.F[p]).norm(), 1e-10);
            EXPECT_LT((b.first.C[p] - a.first.C[p]).norm(), 1e-8); // C carries 1/dx^2
        }
    }
}

TEST(MpmStep, InvertedDeformationDiverges) {
    const auto d = block();
    SimState s = initial_state(d);
    s.F[3] << -1.0, 0.0, 0.0, 1.0;
    EXPECT_THROW(mpm_step(s, VecX::Zero(2), free_space(), d), SimulationDiverged);
}

TEST(MpmStep, WindowTooSmallIsInternalError) {
    const auto d = block();
    SimState s = initial_state(d);
    s.x[0].x() += 1.0;
    EXPECT_THROW(mpm_step(s, VecX::Zero(2), free_space(), d), std::logic_error);
}

TEST(MpmConfig, CflBoundEnforced) {
    MpmConfig cfg;
    EXPECT_NO_THROW(cfg.validate());
    cfg.dt = 10.0 * cfg.grid_dx / cfg.wave_speed();
    EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(MpmStep, GroundContactStopsFall) {
    const auto d = block();
    MpmConfig cfg;
    cfg.ground_height = 0.2; // block sits right on it
    SimState s = initial_state(d);
    for (int t = 0; t < 200; ++t) s = mpm_step(s, VecX::Zero(2), cfg, d).first;
    double lowest = 1e9;
    for (const auto& x : s.x) lowest = std::min(lowest, x.y());
    EXPECT_GT(lowest, 0.2 - 2.0 * cfg.grid_dx);
    EXPECT_LT(std::abs(mean_velocity(s).y()), 0.05);
}

TEST(MpmAdjoint, ZeroCotangentGivesZero) {
    const auto d = block();
    std::mt19937_64 rng(3);
    auto [next, rec] = mpm_step(jittered(d, rng), VecX::Constant(2, 0.5), free_space(), d);
    const auto adj = mpm_step_adjoint(rec, StateAdjoint::zeros_like(next), free_space(), d);
    EXPECT_EQ(adj.act.norm(), 0.0);
    for (std::size_t p = 0; p < next.x.size(); ++p) {
        EXPECT_EQ(adj.state.x[p].norm() + adj.state.v[p].norm() + adj.state.F[p].norm() + adj.state.C[p].norm(), 0.0);
    }
}

class MpmAdjointFd : public ::testing::TestWithParam<bool> {};

TEST_P(MpmAdjointFd, OneStepMatchesFiniteDifferences) {
    const bool ground = GetParam();
    const auto d = block();
    MpmConfig cfg = free_space();
    std::mt19937_64 rng(ground ? 31 : 30);
    for (int trial = 0; trial < 5; ++trial) {
        SimState s0 = jittered(d, rng);
        if (ground) cfg.ground_height = s0.x[0].y() + 0.2 * cfg.grid_dx; // bottom grid rows in contact
        const VecX act = oracle::random_vector(rng, 2, -0.9, 0.9);
        auto [next, rec] = mpm_step(s0, act, cfg, d);
        const Eigen::VectorXd w = oracle::random_vector(rng, 12 * d.num_nodes());
        auto objective = [&](const Eigen::VectorXd& z) {
            SimState s = s0;
            VecX a = act;
            unflatten(z, s, a);
            return w.dot(flatten(mpm_step(s, a, cfg, d).first, VecX(0)));
        };
        StateAdjoint g = StateAdjoint::zeros_like(next);
        {
            SimState wstate = next;
            VecX none(0);
            unflatten(w, wstate, none);
            g.x = wstate.x;
            g.v = wstate.v;
            g.F = wstate.F;
            g.C = wstate.C;
        }
        const auto adj = mpm_step_adjoint(rec, g, cfg, d);
        SimState gs = s0;
        gs.x = adj.state.x;
        gs.v = adj.state.v;
        gs.F = adj.state.F;
        gs.C = adj.state.C;
        const Eigen::VectorXd analytic = flatten(gs, adj.act);
        const Eigen::VectorXd fd = oracle::central_gradient(objective, flatten(s0, act), 1e-7);
        EXPECT_LT(oracle::max_relative_error(analytic, fd), 1e-5) << "trial " << trial;
    }
}

INSTANTIATE_TEST_SUITE_P(Ground, MpmAdjointFd, ::testing::Values(false, true));

TEST(MpmAdjoint, TwentyFiveStepCenterOfMassHeight) {
    const auto d = block();
    MpmConfig cfg; // standing on the ground so muscles can lift the CoM
    cfg.ground_height = 0.2;
    const SimState s0 = initial_state(d);
    const int steps = 25;
    auto act_at = [](const Eigen::VectorXd& th, int t) {
        VecX a(2);
        for (int g = 0; g < 2; ++g) a[g] = 0.9 * std::sin(0.3 * t + th[g]);
        return a;
    };
    auto loss = [&](const Eigen::VectorXd& th) {
        SimState s = s0;
        for (int t = 0; t < steps; ++t) s = mpm_step(s, act_at(th, t), cfg, d).first;
        return com(s).y();
    };
    const Eigen::VectorXd theta = (Eigen::VectorXd(2) << 0.4, 2.1).finished();

    std::vector<MpmRecord> tape;
    SimState s = s0;
    for (int t = 0; t < steps; ++t) {
        auto [next, rec] = mpm_step(s, act_at(theta, t), cfg, d);
        tape.push_back(std::move(rec));
        s = std::move(next);
    }
    StateAdjoint g = StateAdjoint::zeros_like(s);
    for (auto& gx : g.x) gx = Vec2(0.0, 1.0 / d.num_nodes());
    Eigen::VectorXd grad = Eigen::VectorXd::Zero(2);
    for (int t = steps - 1; t >= 0; --t) {
        auto adj = mpm_step_adjoint(tape[t], g, cfg, d);
        for (int k = 0; k < 2; ++k) grad[k] += adj.act[k] * 0.9 * std::cos(0.3 * t + theta[k]);
        g = std::move(adj.state);
    }
    const Eigen::VectorXd fd = oracle::central_gradient(loss, theta);
    EXPECT_GT(fd.norm(), 0.0);
    EXPECT_LT(oracle::max_relative_error(grad, fd), 1e-3) << grad.transpose() << " vs " << fd.transpose();
}
