#include "diffloco/objectives.hpp"
#include "oracle.hpp"

#include <gtest/gtest.h>

using namespace diffloco;

namespace {

AgentDesign four_nodes(const std::vector<double>& masses) {
    AgentDesign d;
    d.kind = DesignKind::Mpm; // no springs needed for geometric queries
    d.nodes = {Vec2(0, 0), Vec2(1, 0), Vec2(0, 1), Vec2(1, 1)};
    d.node_mass = masses;
    d.actuator_groups = {{0, 1}, {2, 3}};
    d.finalize();
    return d;
}

struct RandomEpisode {
    AgentDesign design;
    GoalSchedule schedule;
    std::vector<SimState> states; // T+1
    std::vector<VecX> act;        // T
};

RandomEpisode random_episode(std::mt19937_64& rng, int T, int P, int Pr, double step_dt = 1.0) {
    std::uniform_real_distribution<double> mass(0.5, 2.0), pos(-0.5, 0.5), a(-1.0, 1.0), gv(-0.1, 0.1),
        gh(0.0, 0.6);
    RandomEpisode e{four_nodes({mass(rng), mass(rng), mass(rng), mass(rng)}), {}, {}, {}};
    e.schedule.total_steps = T;
    e.schedule.period = P;
    e.schedule.velocity_window = Pr;
    e.schedule.step_dt = step_dt;
    for (int n = 0; n < T / P; ++n) e.schedule.goals.push_back({gv(rng), gh(rng), double(rng() % 2)});
    for (int t = 0; t <= T; ++t) {
        SimState s = initial_state(e.design);
        for (auto& x : s.x) x = Vec2(pos(rng), pos(rng) + 0.5);
        e.states.push_back(s);
    }
    for (int t = 0; t < T; ++t) e.act.push_back((VecX(3) << a(rng), a(rng), a(rng)).finished());
    return e;
}

LossTape tape_of(const RandomEpisode& e) {
    LossTape tape;
    for (const auto& s : e.states) tape.push_state(s, e.design);
    tape.act = e.act;
    return tape;
}

oracle::BruteLoss brute(const RandomEpisode& e, double mu, bool naive = false) {
    std::vector<std::vector<Eigen::Vector2d>> x;
    for (const auto& s : e.states) x.push_back(s.x);
    std::vector<oracle::BruteGoal> goals;
    for (const auto& g : e.schedule.goals) goals.push_back({g.g_v, g.g_h, g.g_c});
    return oracle::brute_force_loss(x, e.design.node_mass, e.act, goals, e.schedule.period,
                                    e.schedule.velocity_window, e.schedule.step_dt, mu, naive);
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-300}); }

// All state coordinates and actuations as one flat vector, and back.
VecX pack(const RandomEpisode& e) {
    std::vector<double> z;
    for (const auto& s : e.states)
        for (const auto& x : s.x) z.insert(z.end(), {x.x(), x.y()});
    for (const auto& a : e.act) z.insert(z.end(), a.data(), a.data() + a.size());
    return Eigen::Map<VecX>(z.data(), Eigen::Index(z.size()));
}

RandomEpisode unpack(RandomEpisode e, const VecX& z) {
    Eigen::Index k = 0;
    for (auto& s : e.states)
        for (auto& x : s.x) {
            x = Vec2(z[k], z[k + 1]);
            k += 2;
        }
    for (auto& a : e.act) {
        a = z.segment(k, a.size());
        k += a.size();
    }
    return e;
}

VecX adjoint_flat(const RandomEpisode& e, const LossWeights& w, VelocityLoss vl) {
    const LossTape tape = tape_of(e);
    const LossTapeAdjoint adj = episode_loss_adjoint(tape, e.schedule, w, vl);
    std::vector<double> z;
    for (std::size_t t = 0; t < e.states.size(); ++t) {
        StateAdjoint g = StateAdjoint::zeros_like(e.states[t]);
        summary_adjoint_to_state(adj, tape, t, e.design, g);
        for (const auto& x : g.x) z.insert(z.end(), {x.x(), x.y()});
    }
    for (const auto& a : adj.act) z.insert(z.end(), a.data(), a.data() + a.size());
    return Eigen::Map<VecX>(z.data(), Eigen::Index(z.size()));
}

} // namespace

TEST(EstimateVelocity, StationaryIsZero) {
    const std::vector<Vec2> com(20, Vec2(0.3, 0.2));
    EXPECT_EQ(estimate_velocity(com, 10, 5), Vec2::Zero());
}

TEST(EstimateVelocity, LinearMotionPerStep) {
    std::vector<Vec2> com;
    for (int t = 0; t < 50; ++t) com.emplace_back(0.01 * t, 0.2);
    for (int window : {1, 7, 25}) {
        const Vec2 v = estimate_velocity(com, 40, window);
        EXPECT_NEAR(v.x(), 0.01, 1e-15);
        EXPECT_NEAR(v.y(), 0.0, 1e-15);
    }
    // with a physical step the same trajectory reads in m/s
    EXPECT_NEAR(estimate_velocity(com, 40, 10, 0.004).x(), 2.5, 1e-12);
}

TEST(EstimateVelocity, SinusoidMatchesDifferenceQuotient) {
    std::vector<Vec2> com;
    for (int t = 0; t < 300; ++t) com.emplace_back(0.1 * std::sin(0.05 * t), 0.02 * std::cos(0.03 * t));
    for (int t = 100; t < 300; t += 13) {
        const Vec2 v = estimate_velocity(com, t, 100);
        EXPECT_NEAR(v.x(), (0.1 * std::sin(0.05 * t) - 0.1 * std::sin(0.05 * (t - 100))) / 100.0, 1e-12);
        EXPECT_NEAR(v.y(), (0.02 * std::cos(0.03 * t) - 0.02 * std::cos(0.03 * (t - 100))) / 100.0, 1e-12);
    }
}

TEST(EstimateVelocity, OutOfWindowThrows) {
    const std::vector<Vec2> com(20, Vec2::Zero());
    EXPECT_THROW(estimate_velocity(com, 4, 5), std::out_of_range);
    EXPECT_THROW(estimate_velocity(com, 20, 5), std::out_of_range);
}

TEST(JumpHeight, RestingAgentGivesGround) {
    const std::vector<double> h(11, 0.1);
    EXPECT_EQ(jump_height(h, 0, 10), 0.1);
}

TEST(JumpHeight, TraceMaximum) {
    const std::vector<double> h{0.0, 0.05, 0.12, 0.03};
    EXPECT_EQ(jump_height(h, 0, 3), 0.12);
}

TEST(JumpHeight, MatchesScanAndRejectsIncompletePeriod) {
    std::mt19937_64 rng(1);
    const VecX h = oracle::random_vector(rng, 41, 0.0, 1.0);
    const std::vector<double> hv(h.data(), h.data() + h.size());
    for (int n = 0; n < 4; ++n) {
        double best = -1.0;
        for (int t = n * 10; t <= n * 10 + 10; ++t) best = std::max(best, hv[std::size_t(t)]);
        EXPECT_EQ(jump_height(hv, n, 10), best);
    }
    EXPECT_THROW(jump_height(hv, 4, 10), std::out_of_range);
}

TEST(EpisodeLoss, PerfectTrackingHasZeroRunningLoss) {
    const auto d = four_nodes({1, 1, 1, 1});
    GoalSchedule s;
    s.total_steps = 20;
    s.period = 10;
    s.velocity_window = 4;
    s.goals = {{0.02, 0.0, 0.0}, {-0.01, 0.0, 0.0}};
    LossTape tape;
    double x = 0.0;
    for (int t = 0; t <= 20; ++t) {
        SimState st = initial_state(d);
        for (auto& p : st.x) p.x() += x;
        tape.push_state(st, d);
        x += t < 10 ? 0.02 : -0.01;
    }
    for (int t = 0; t < 20; ++t) tape.act.push_back(VecX::Constant(2, 12.5 * (t < 10 ? 0.02 : 0.01)));
    LossWeights w;
    w.mu = 12.5;
    const auto L = episode_loss(tape, s, w);
    EXPECT_NEAR(L.L_v, 0.0, 1e-28);
    EXPECT_NEAR(L.L_a, 0.0, 1e-28);
    EXPECT_EQ(L.L_c, 0.0);
}

TEST(EpisodeLoss, HandEnumeratedSixStepTape) {
    // one node of unit mass; T = P = 6, P_r = 2
    AgentDesign d;
    d.kind = DesignKind::Mpm;
    d.nodes = {Vec2(0, 0)};
    d.node_mass = {1.0};
    d.actuator_groups = {{0}};
    d.finalize();
    const double xs[7] = {0.0, 0.1, 0.3, 0.4, 0.4, 0.6, 0.9};
    const double ys[7] = {0.1, 0.15, 0.3, 0.2, 0.1, 0.1, 0.12};
    const double as[6] = {0.5, -0.5, 1.0, 0.0, -0.25, 0.75};
    GoalSchedule s;
    s.total_steps = 6;
    s.period = 6;
    s.velocity_window = 2;
    s.goals = {{0.1, 0.25, 1.0}};
    LossTape tape;
    for (int t = 0; t <= 6; ++t) {
        SimState st = initial_state(d);
        st.x[0] = Vec2(xs[t], ys[t]);
        tape.push_state(st, d);
    }
    for (double a : as) tape.act.push_back(VecX::Constant(1, a));
    LossWeights w{1.0, 1.0, 1.0, 1.0, 2.0};
    const auto L = episode_loss(tape, s, w);

    // velocities at t = 2..6: (x_t - x_{t-2}) / 2
    double Lv = 0.0;
    for (double v : {0.15, 0.15, 0.05, 0.1, 0.25}) Lv += (v - 0.1) * (v - 0.1);
    const double Lh = (0.3 - 0.25) * (0.3 - 0.25);
    const double Lc = 0.1 + 0.15 + 0.3 + 0.2 + 0.1 + 0.1 + 0.12;
    double La = 0.0;
    for (double a : as) La += (std::abs(a) - 0.2) * (std::abs(a) - 0.2);
    EXPECT_NEAR(L.L_v, Lv, 1e-12);
    EXPECT_NEAR(L.L_h, Lh, 1e-12);
    EXPECT_NEAR(L.L_c, Lc, 1e-12);
    EXPECT_NEAR(L.L_a, La, 1e-12);
    EXPECT_NEAR(L.total, Lv + Lh + Lc + La, 1e-12);
}

TEST(EpisodeLoss, MatchesBruteForceOnRandomTapes) {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 200; ++trial) {
        const auto e = random_episode(rng, 12, 6, 2, trial % 2 ? 0.004 : 1.0);
        const LossWeights w{0.7, 1.3, 0.2, 0.05, 9.0};
        for (bool naive : {false, true}) {
            const auto L = episode_loss(tape_of(e), e.schedule, w, naive ? VelocityLoss::Naive : VelocityLoss::Windowed);
            const auto B = brute(e, w.mu, naive);
            EXPECT_LT(rel(L.L_v, B.L_v), 1e-12);
            EXPECT_LT(rel(L.L_h, B.L_h), 1e-12);
            EXPECT_LT(rel(L.L_c, B.L_c), 1e-12);
            EXPECT_LT(rel(L.L_a, B.L_a), 1e-12);
            const double total = w.lambda_v * B.L_v + w.lambda_h * B.L_h + w.lambda_c * B.L_c + w.lambda_a * B.L_a;
            EXPECT_LT(rel(L.total, total), 1e-12);
        }
    }
}

TEST(EpisodeLoss, CrawlGatedByGoal) {
    std::mt19937_64 rng(3);
    auto e = random_episode(rng, 12, 6, 2);
    for (auto& g : e.schedule.goals) g.g_c = 0.0;
    EXPECT_EQ(episode_loss(tape_of(e), e.schedule, LossWeights{}).L_c, 0.0);
}

TEST(EpisodeLoss, NonNegativeTerms) {
    std::mt19937_64 rng(4);
    for (int trial = 0; trial < 100; ++trial) {
        const auto e = random_episode(rng, 12, 6, 2);
        const auto L = episode_loss(tape_of(e), e.schedule, LossWeights{});
        EXPECT_GE(L.L_v, 0.0);
        EXPECT_GE(L.L_h, 0.0);
        EXPECT_GE(L.L_a, 0.0);
        EXPECT_GE(L.total, 0.0); // heights are positive here
    }
}

TEST(EpisodeLoss, TapeScheduleMismatchIsContractViolation) {
    std::mt19937_64 rng(5);
    auto e = random_episode(rng, 12, 6, 2);
    auto tape = tape_of(e);
    tape.act.pop_back();
    EXPECT_THROW(episode_loss(tape, e.schedule, LossWeights{}), ContractViolation);
    e.schedule.velocity_window = 6;
    EXPECT_THROW(episode_loss(tape_of(e), e.schedule, LossWeights{}), ContractViolation);
}

TEST(EpisodeLossAdjoint, ZeroWeightsGiveZeroAdjoint) {
    std::mt19937_64 rng(6);
    const auto e = random_episode(rng, 12, 6, 2);
    const VecX g = adjoint_flat(e, LossWeights{0, 0, 0, 0, 1.0}, VelocityLoss::Windowed);
    EXPECT_EQ(g, VecX::Zero(g.size()));
}

TEST(EpisodeLossAdjoint, MatchesFiniteDifferences) {
    std::mt19937_64 rng(7);
    const LossWeights w{1.0, 2.0, 0.3, 0.5, 8.0};
    for (int trial = 0; trial < 10; ++trial) {
        const auto e = random_episode(rng, 12, 6, 2);
        for (auto vl : {VelocityLoss::Windowed, VelocityLoss::Naive}) {
            const VecX fd = oracle::central_gradient(
                [&](const Eigen::VectorXd& z) {
                    const auto p = unpack(e, z);
                    return episode_loss(tape_of(p), p.schedule, w, vl).total;
                },
                pack(e));
            EXPECT_LT(oracle::max_relative_error(adjoint_flat(e, w, vl), fd), 1e-6);
        }
    }
}

TEST(EpisodeLossAdjoint, JumpMaxReachesOnlyTheArgmaxNode) {
    const auto d = four_nodes({1, 1, 1, 1});
    GoalSchedule s;
    s.total_steps = 6;
    s.period = 6;
    s.velocity_window = 2;
    s.goals = {{0.0, 0.5, 0.0}};
    LossTape tape;
    for (int t = 0; t <= 6; ++t) {
        SimState st = initial_state(d);
        if (t == 3) st.x[2].y() = 0.4, st.x[0].y() = 0.45, st.x[1].y() = 0.5, st.x[3].y() = 0.6;
        tape.push_state(st, d);
    }
    for (int t = 0; t < 6; ++t) tape.act.push_back(VecX::Zero(2));
    const LossWeights w{0.0, 1.0, 0.0, 0.0, 1.0};
    const auto adj = episode_loss_adjoint(tape, s, w);
    for (int t = 0; t <= 6; ++t) {
        StateAdjoint g = StateAdjoint::zeros_like(initial_state(d));
        summary_adjoint_to_state(adj, tape, std::size_t(t), d, g);
        for (std::size_t i = 0; i < 4; ++i) {
            if (t == 3 && i == 2) {
                EXPECT_NEAR(g.x[i].y(), 2.0 * (0.4 - 0.5), 1e-15);
                EXPECT_EQ(g.x[i].x(), 0.0);
            } else {
                EXPECT_EQ(g.x[i], Vec2::Zero()) << "t=" << t << " node " << i;
            }
        }
    }
}

TEST(EpisodeLossAdjoint, JumpTieGoesToEarliestStep) {
    LossTape tape;
    tape.com.assign(7, Vec2::Zero());
    tape.low = {0.1, 0.3, 0.2, 0.3, 0.1, 0.0, 0.1};
    tape.low_node.assign(7, 0);
    tape.high.assign(7, 1.0);
    tape.high_node.assign(7, 0);
    tape.act.assign(6, VecX::Zero(1));
    GoalSchedule s;
    s.total_steps = 6;
    s.period = 6;
    s.velocity_window = 2;
    s.goals = {{0.0, 0.5, 0.0}};
    const auto adj = episode_loss_adjoint(tape, s, LossWeights{0, 1, 0, 0, 1});
    EXPECT_NE(adj.low[1], 0.0);
    EXPECT_EQ(adj.low[3], 0.0);
}

TEST(EpisodeLossAdjoint, ScalesLinearlyWithRunningWeight) {
    std::mt19937_64 rng(9);
    const auto e = random_episode(rng, 12, 6, 2);
    const VecX g1 = adjoint_flat(e, LossWeights{1.0, 0, 0, 0, 1.0}, VelocityLoss::Windowed);
    const VecX g2 = adjoint_flat(e, LossWeights{2.0, 0, 0, 0, 1.0}, VelocityLoss::Windowed);
    EXPECT_LT((g2 - 2.0 * g1).cwiseAbs().maxCoeff(), 1e-12 * g1.cwiseAbs().maxCoeff());
    const auto tape = tape_of(e);
    const auto L1 = episode_loss(tape, e.schedule, LossWeights{1.0, 1, 1, 1, 1.0});
    const auto L2 = episode_loss(tape, e.schedule, LossWeights{2.0, 1, 1, 1, 1.0});
    EXPECT_NEAR(L2.total - L1.total, L1.L_v, 1e-12);
}

TEST(EpisodeLossAdjoint, ZeroJumpWeightRemovesJumpAdjoints) {
    std::mt19937_64 rng(10);
    const auto e = random_episode(rng, 12, 6, 2);
    const auto adj = episode_loss_adjoint(tape_of(e), e.schedule, LossWeights{1.0, 0.0, 0.1, 0.01, 1.0});
    for (double g : adj.low) EXPECT_EQ(g, 0.0);
}

TEST(SampleGoals, DegenerateBoundsGiveConstantSchedule) {
    GoalBounds b{0.03, 0.03, 0.15, 0.15, 1.0, 1.0};
    const auto s = sample_goals(1, b, GoalSchedule{});
    ASSERT_EQ(s.goals.size(), 4u);
    for (const auto& g : s.goals) EXPECT_EQ(g, (Goal{0.03, 0.15, 1.0}));
    EXPECT_NO_THROW(s.validate());
}

TEST(SampleGoals, UniformStatistics) {
    GoalBounds b;
    GoalSchedule shape;
    shape.total_steps = 100000;
    shape.period = 1;
    shape.velocity_window = 0; // shape only, never validated here
    const auto s = sample_goals(77, b, shape);
    ASSERT_EQ(s.goals.size(), 100000u);
    double lo = 1, hi = -1, sum = 0;
    for (const auto& g : s.goals) {
        lo = std::min(lo, g.g_v);
        hi = std::max(hi, g.g_v);
        sum += g.g_v;
        EXPECT_EQ(g.g_c, 0.0);
    }
    EXPECT_GE(lo, b.v_lo);
    EXPECT_LE(hi, b.v_hi);
    const double sigma = (b.v_hi - b.v_lo) / std::sqrt(12.0) / std::sqrt(1e5);
    EXPECT_LT(std::abs(sum / 1e5 - 0.5 * (b.v_lo + b.v_hi)), 3.0 * sigma);
}

TEST(SampleGoals, CrawlFlagIsBernoulliWhenBothAllowed) {
    GoalBounds b;
    b.c_hi = 1.0;
    GoalSchedule shape;
    shape.total_steps = 10000;
    shape.period = 1;
    const auto s = sample_goals(5, b, shape);
    int ones = 0;
    for (const auto& g : s.goals) {
        EXPECT_TRUE(g.g_c == 0.0 || g.g_c == 1.0);
        ones += g.g_c == 1.0;
    }
    EXPECT_NEAR(ones / 1e4, 0.5, 0.02);
}

TEST(SampleGoals, DeterministicPerSeed) {
    const auto a = sample_goals(9, GoalBounds{}, GoalSchedule{});
    const auto b = sample_goals(9, GoalBounds{}, GoalSchedule{});
    const auto c = sample_goals(10, GoalBounds{}, GoalSchedule{});
    EXPECT_EQ(a.goals, b.goals);
    EXPECT_NE(a.goals, c.goals);
}

TEST(ValidationGrid, DefaultGridCornersAndSize) {
    const auto grid = validation_goal_grid(GoalBounds{}, GoalSchedule{});
    ASSERT_EQ(grid.size(), 27u);
    auto has = [&](double v, double h) {
        for (const auto& s : grid)
            if (std::abs(s.goals[0].g_v - v) < 1e-15 && std::abs(s.goals[0].g_h - h) < 1e-15) return true;
        return false;
    };
    EXPECT_TRUE(has(0.08, 0.20));
    EXPECT_TRUE(has(-0.08, 0.10));
    EXPECT_TRUE(has(0.0, 0.15));
    for (const auto& s : grid) {
        EXPECT_NO_THROW(s.validate());
        for (const auto& g : s.goals) EXPECT_EQ(g, s.goals[0]);
    }
}

TEST(ValidationGrid, SinglePointBounds) {
    const auto grid = validation_goal_grid(GoalBounds{0.05, 0.05, 0.12, 0.12, 0.0, 0.0}, GoalSchedule{});
    ASSERT_EQ(grid.size(), 1u);
    EXPECT_EQ(grid[0].goals[0], (Goal{0.05, 0.12, 0.0}));
}

TEST(GoalBounds, ClampKeepsTargetsInBounds) {
    const GoalBounds b;
    const Goal g = b.clamp({1.0, -3.0, 0.7});
    EXPECT_EQ(g.g_v, 0.08);
    EXPECT_EQ(g.g_h, 0.1);
    EXPECT_EQ(g.g_c, 0.0); // crawling not allowed by these bounds
    EXPECT_THROW((GoalBounds{0.1, -0.1}).validate(), ConfigError);
}
