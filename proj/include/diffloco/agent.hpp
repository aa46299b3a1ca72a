#pragma once

#include "diffloco/core.hpp"

#include <algorithm>
#include <limits>
#include <set>
#include <utility>

namespace diffloco {

enum class DesignKind { MassSpring, Mpm };

struct Spring {
    int a = 0;
    int b = 0;
    double stiffness = 0.0;
    bool actuated = false;
};

/// A robot: mass points joined by springs (MassSpring) or a particle cloud (Mpm).
/// Actuator groups hold spring indices for MassSpring and particle indices for Mpm;
/// Mpm muscles always pull along the material-space vertical axis.
struct AgentDesign {
    std::string name;
    DesignKind kind = DesignKind::MassSpring;
    std::vector<Vec2> nodes;
    std::vector<double> node_mass;
    std::vector<Spring> springs;
    std::vector<std::vector<int>> actuator_groups;

    // Filled by finalize().
    std::vector<double> rest_length;
    std::vector<int> member_group; // per spring (MassSpring) or particle (Mpm); -1 = passive
    double total_mass = 0.0;

    int num_nodes() const { return static_cast<int>(nodes.size()); }
    int num_actuators() const { return static_cast<int>(actuator_groups.size()); }

    /// Checks every structural invariant and fills the derived fields.
    /// Throws DesignError naming the violated invariant.
    void finalize();
};

/// Positions and velocities at one step; F and C are only populated for Mpm.
struct SimState {
    int t = 0;
    std::vector<Vec2> x;
    std::vector<Vec2> v;
    std::vector<Mat2> F;
    std::vector<Mat2> C;
};

inline void AgentDesign::finalize() {
    const int n = num_nodes();
    if (n == 0) throw DesignError("non-empty design", "no nodes");
    if (node_mass.size() != nodes.size())
        throw DesignError("one mass per node", std::to_string(node_mass.size()) + " masses for " +
                                                   std::to_string(n) + " nodes");
    total_mass = 0.0;
    for (int i = 0; i < n; ++i) {
        if (!all_finite(nodes[i])) throw DesignError("finite node positions", "node " + std::to_string(i));
        if (!(node_mass[i] > 0.0) || !std::isfinite(node_mass[i]))
            throw DesignError("positive node mass", "node " + std::to_string(i));
        total_mass += node_mass[i];
    }

    if (kind == DesignKind::Mpm && !springs.empty())
        throw DesignError("springs only in mass-spring designs", "");

    std::set<std::pair<int, int>> seen;
    rest_length.assign(springs.size(), 0.0);
    for (std::size_t s = 0; s < springs.size(); ++s) {
        const auto& sp = springs[s];
        const std::string id = "spring " + std::to_string(s);
        if (sp.a < 0 || sp.a >= n || sp.b < 0 || sp.b >= n)
            throw DesignError("valid spring endpoints", id);
        if (sp.a == sp.b) throw DesignError("degenerate spring endpoints", id);
        auto key = std::minmax(sp.a, sp.b);
        if (!seen.insert(key).second) throw DesignError("no duplicate springs", id);
        if (!(sp.stiffness >= 0.0) || !std::isfinite(sp.stiffness))
            throw DesignError("non-negative stiffness", id);
        rest_length[s] = (nodes[sp.b] - nodes[sp.a]).norm();
        if (!(rest_length[s] > 0.0)) throw DesignError("positive rest length", id);
    }

    const std::size_t members = kind == DesignKind::MassSpring ? springs.size() : nodes.size();
    member_group.assign(members, -1);
    for (std::size_t g = 0; g < actuator_groups.size(); ++g) {
        if (actuator_groups[g].empty())
            throw DesignError("non-empty actuator group", "group " + std::to_string(g));
        for (int m : actuator_groups[g]) {
            if (m < 0 || static_cast<std::size_t>(m) >= members)
                throw DesignError("valid actuator member", "group " + std::to_string(g));
            if (member_group[m] != -1)
                throw DesignError("actuator in exactly one group", "member " + std::to_string(m));
            if (kind == DesignKind::MassSpring && !springs[m].actuated)
                throw DesignError("grouped springs are actuated", "spring " + std::to_string(m));
            member_group[m] = static_cast<int>(g);
        }
    }
    if (kind == DesignKind::MassSpring) {
        for (std::size_t s = 0; s < springs.size(); ++s)
            if (springs[s].actuated && member_group[s] < 0)
                throw DesignError("actuator in exactly one group", "spring " + std::to_string(s));
    }
}

/// Initial state: rest pose, zero velocity, identity deformation.
inline SimState initial_state(const AgentDesign& design) {
    SimState s;
    s.x = design.nodes;
    s.v.assign(design.nodes.size(), Vec2::Zero());
    if (design.kind == DesignKind::Mpm) {
        s.F.assign(design.nodes.size(), Mat2::Identity());
        s.C.assign(design.nodes.size(), Mat2::Zero());
    }
    return s;
}

inline void check_matches(const SimState& state, const AgentDesign& design) {
    if (state.x.size() != design.nodes.size() || state.v.size() != design.nodes.size())
        throw ContractViolation("state size does not match design");
}

inline Vec2 center_of_mass(const SimState& state, const AgentDesign& design) {
    check_matches(state, design);
    Vec2 c = Vec2::Zero();
    for (std::size_t i = 0; i < state.x.size(); ++i) c += design.node_mass[i] * state.x[i];
    return c / design.total_mass;
}

/// Height of the lowest node and its index (earliest on ties).
inline std::pair<double, int> lowest_node(const SimState& state) {
    double h = std::numeric_limits<double>::infinity();
    int arg = -1;
    for (std::size_t i = 0; i < state.x.size(); ++i)
        if (state.x[i].y() < h) {
            h = state.x[i].y();
            arg = static_cast<int>(i);
        }
    return {h, arg};
}

inline std::pair<double, int> highest_node(const SimState& state) {
    double h = -std::numeric_limits<double>::infinity();
    int arg = -1;
    for (std::size_t i = 0; i < state.x.size(); ++i)
        if (state.x[i].y() > h) {
            h = state.x[i].y();
            arg = static_cast<int>(i);
        }
    return {h, arg};
}

inline double lowest_point(const SimState& state, const AgentDesign& design) {
    check_matches(state, design);
    return lowest_node(state).first;
}

inline double highest_point(const SimState& state, const AgentDesign& design) {
    check_matches(state, design);
    return highest_node(state).first;
}

} // namespace diffloco
