#include "diffloco/design_io.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <random>

using namespace diffloco;

namespace {

std::string data(const std::string& f) { return std::string(DIFFLOCO_TEST_DATA) + "/" + f; }
std::string bundled(const std::string& f) { return std::string(DIFFLOCO_DESIGNS) + "/" + f; }

SimState random_state(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> u(-2.0, 2.0);
    SimState s;
    for (int i = 0; i < n; ++i) {
        s.x.emplace_back(u(rng), u(rng));
        s.v.emplace_back(u(rng), u(rng));
    }
    return s;
}

AgentDesign point_masses(const std::vector<double>& masses) {
    AgentDesign d;
    for (std::size_t i = 0; i < masses.size(); ++i) d.nodes.emplace_back(double(i), 0.0);
    d.node_mass = masses;
    if (masses.size() >= 2) {
        d.springs.push_back({0, 1, 1.0, true});
        d.actuator_groups = {{0}};
    }
    d.finalize();
    return d;
}

} // namespace

TEST(LoadDesign, UnitSquareRestLengths) {
    const auto d = load_design(data("unit_square.json"));
    ASSERT_EQ(d.springs.size(), 6u);
    const double r2 = std::sqrt(2.0);
    const std::vector<double> expected{1, 1, 1, 1, r2, r2};
    for (std::size_t s = 0; s < 6; ++s) EXPECT_DOUBLE_EQ(d.rest_length[s], expected[s]);
    EXPECT_EQ(d.num_actuators(), 6); // one group per actuated spring by default
    EXPECT_DOUBLE_EQ(d.node_mass[0], kDefaultNodeMass);
    EXPECT_DOUBLE_EQ(d.springs[0].stiffness, kDefaultStiffness);
}

TEST(LoadDesign, DegenerateSpringIsNamed) {
    try {
        load_design(data("degenerate_spring.json"));
        FAIL() << "expected DesignError";
    } catch (const DesignError& e) {
        EXPECT_EQ(e.invariant(), "degenerate spring endpoints");
    }
}

TEST(LoadDesign, SyntaxErrorReportsLine) {
    try {
        load_design(data("malformed.json"));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.where(), "line 4");
    }
}

TEST(LoadDesign, FieldErrorReportsPath) {
    try {
        load_design(data("bad_field.json"));
        FAIL() << "expected ParseError";
    } catch (const ParseError& e) {
        EXPECT_EQ(e.where(), "springs[0].b");
    }
}

TEST(LoadDesign, MissingFile) { EXPECT_THROW(load_design(data("nope.json")), ParseError); }

TEST(LoadDesign, DuplicateSpringRejected) {
    const char* text = R"({"nodes": [[0,0],[1,0]], "springs": [{"a":0,"b":1,"actuated":true},{"a":1,"b":0}]})";
    try {
        parse_design(text);
        FAIL();
    } catch (const DesignError& e) {
        EXPECT_EQ(e.invariant(), "no duplicate springs");
    }
}

TEST(LoadDesign, ActuatorInTwoGroupsRejected) {
    const char* text =
        R"({"nodes": [[0,0],[1,0]], "springs": [{"a":0,"b":1,"actuated":true}], "actuator_groups": [[0],[0]]})";
    EXPECT_THROW(parse_design(text), DesignError);
}

TEST(LoadDesign, UngroupedActuatedSpringRejected) {
    const char* text = R"({"nodes": [[0,0],[1,0],[0,1]],
        "springs": [{"a":0,"b":1,"actuated":true},{"a":0,"b":2,"actuated":true}], "actuator_groups": [[0]]})";
    try {
        parse_design(text);
        FAIL();
    } catch (const DesignError& e) {
        EXPECT_EQ(e.invariant(), "actuator in exactly one group");
    }
}

TEST(LoadDesign, QuadrupedActuatorCount) {
    // Hand count from the layout: each of the two legs is two stacked cells whose
    // four vertical edges are actuated; one group per actuated spring.
    const auto d = load_design(bundled("quadruped.json"));
    EXPECT_EQ(d.num_actuators(), 8);
    int actuated = 0;
    for (const auto& s : d.springs) actuated += s.actuated;
    EXPECT_EQ(actuated, 8);
    EXPECT_EQ(d.num_nodes(), 18);
}

TEST(LoadDesign, BundledDesignsLoad) {
    for (const char* f : {"square.json", "quadruped.json", "stool.json", "huge_stool.json", "mpm_block.json",
                          "mpm_quadruped.json"}) {
        EXPECT_NO_THROW(load_design(bundled(f))) << f;
    }
    EXPECT_EQ(load_design(bundled("mpm_block.json")).num_nodes(), 16);
    // the huge stool carries extra body actuators on top of the stool's leg actuators
    EXPECT_GT(load_design(bundled("huge_stool.json")).num_actuators(), load_design(bundled("stool.json")).num_actuators());
}

TEST(LoadDesign, SaveLoadIsIdentityOnCanonicalForm) {
    const auto tmp = std::filesystem::temp_directory_path() / "diffloco_roundtrip.json";
    for (const char* f : {"quadruped.json", "mpm_block.json"}) {
        const auto d = load_design(bundled(f));
        save_design(d, tmp.string());
        const auto again = load_design(tmp.string());
        EXPECT_EQ(design_to_json(d), design_to_json(again)) << f;
    }
    std::filesystem::remove(tmp);
}

TEST(Geometry, CenterOfMassUnitSquare) {
    const auto d = load_design(data("unit_square.json"));
    const Vec2 c = center_of_mass(initial_state(d), d);
    EXPECT_DOUBLE_EQ(c.x(), 0.5);
    EXPECT_DOUBLE_EQ(c.y(), 0.5);
}

TEST(Geometry, WeightedCenterOfMass) {
    const auto d = point_masses({1.0, 3.0});
    EXPECT_DOUBLE_EQ(center_of_mass(initial_state(d), d).x(), 0.75);
}

TEST(Geometry, CenterOfMassMatchesResummation) {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> um(0.1, 5.0);
    std::vector<double> masses;
    for (int i = 0; i < 10; ++i) masses.push_back(um(rng));
    const auto d = point_masses(masses);
    const auto s = random_state(rng, 10);
    double mx = 0, my = 0, m = 0;
    for (int i = 0; i < 10; ++i) {
        mx += masses[i] * s.x[i].x();
        my += masses[i] * s.x[i].y();
        m += masses[i];
    }
    const Vec2 c = center_of_mass(s, d);
    EXPECT_NEAR(c.x(), mx / m, 1e-12);
    EXPECT_NEAR(c.y(), my / m, 1e-12);
}

TEST(Geometry, CenterOfMassTranslationEquivariant) {
    std::mt19937_64 rng(11);
    const auto d = point_masses({1, 2, 3, 4, 5});
    for (int trial = 0; trial < 100; ++trial) {
        auto s = random_state(rng, 5);
        const Vec2 shift = 3.0 * Vec2::Random();
        const Vec2 c0 = center_of_mass(s, d);
        for (auto& x : s.x) x += shift;
        EXPECT_LT((center_of_mass(s, d) - (c0 + shift)).norm(), 1e-12);
    }
}

TEST(Geometry, LowestHighestUnitSquare) {
    const auto d = load_design(data("unit_square.json"));
    auto s = initial_state(d);
    EXPECT_DOUBLE_EQ(lowest_point(s, d), 0.0);
    EXPECT_DOUBLE_EQ(highest_point(s, d), 1.0);
    for (auto& x : s.x) x.y() += 0.3;
    EXPECT_DOUBLE_EQ(lowest_point(s, d), 0.3);
    EXPECT_DOUBLE_EQ(highest_point(s, d), 1.3);
}

TEST(Geometry, LowestHighestMatchScan) {
    std::mt19937_64 rng(3);
    const auto d = point_masses(std::vector<double>(12, 1.0));
    for (int trial = 0; trial < 200; ++trial) {
        const auto s = random_state(rng, 12);
        double lo = s.x[0].y(), hi = s.x[0].y();
        for (const auto& x : s.x) {
            lo = std::min(lo, x.y());
            hi = std::max(hi, x.y());
        }
        EXPECT_EQ(lowest_point(s, d), lo);
        EXPECT_EQ(highest_point(s, d), hi);
        EXPECT_LE(lowest_point(s, d), highest_point(s, d));
    }
}

TEST(Geometry, StateDesignMismatch) {
    const auto d = point_masses({1, 1});
    SimState s;
    s.x.resize(3);
    s.v.resize(3);
    EXPECT_THROW(center_of_mass(s, d), ContractViolation);
}
