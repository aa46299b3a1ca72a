#pragma once

#include "diffloco/agent.hpp"
#include "diffloco/mass_spring.hpp"

#include <numbers>
#include <string>

namespace diffloco {

/// Per-period targets: velocity (m/s), jump height (m), crawl flag.
struct Goal {
    double g_v = 0.0;
    double g_h = 0.0;
    double g_c = 0.0;

    bool operator==(const Goal&) const = default;
};

struct TargetChannel {
    std::string name; // g_v, g_h or g_c
    int duplication = 16;
    double scale = 1.0; // multiplies the raw target before it enters the network
};

struct FeatureSpec {
    int n_periodic = 8;
    double signal_period = 200.0; // steps
    std::vector<double> phases;   // empty: evenly spaced in [0, 2 pi)
    bool include_velocities = true;
    double position_scale = 1.0;
    double velocity_scale = 1.0;
    std::vector<TargetChannel> targets{{"g_v", 16, 1.0}, {"g_h", 16, 1.0}, {"g_c", 16, 1.0}};

    // ablation switches
    bool periodic_on = true;
    bool state_on = true;
    bool targets_on = true;

    int periodic_count() const { return periodic_on ? (phases.empty() ? n_periodic : int(phases.size())) : 0; }

    double phase(int k) const {
        return phases.empty() ? 2.0 * std::numbers::pi * k / n_periodic : phases[std::size_t(k)];
    }

    Eigen::Index state_dim(const AgentDesign& d) const {
        if (!state_on) return 0;
        return Eigen::Index(d.nodes.size()) * (include_velocities ? 4 : 2);
    }

    Eigen::Index target_dim() const {
        if (!targets_on) return 0;
        Eigen::Index n = 0;
        for (const auto& c : targets) n += c.duplication;
        return n;
    }

    Eigen::Index input_dim(const AgentDesign& d) const { return periodic_count() + state_dim(d) + target_dim(); }

    void validate() const {
        if (n_periodic < 0) throw ConfigError("features.n_periodic must be >= 0");
        if (!(signal_period > 0.0)) throw ConfigError("features.signal_period must be > 0");
        for (const auto& c : targets) {
            if (c.name != "g_v" && c.name != "g_h" && c.name != "g_c")
                throw ConfigError("missing target channel \"" + c.name + "\"");
            if (c.duplication < 1) throw ConfigError("target channel " + c.name + ": duplication must be >= 1");
            if (!std::isfinite(c.scale)) throw ConfigError("target channel " + c.name + ": scale must be finite");
        }
    }
};

inline double goal_value(const Goal& g, const std::string& name) {
    if (name == "g_v") return g.g_v;
    if (name == "g_h") return g.g_h;
    if (name == "g_c") return g.g_c;
    throw ConfigError("missing target channel \"" + name + "\"");
}

/// [periodic signals] ++ [x_i - CoM] ++ [v_i] ++ [duplicated targets]
inline VecX assemble_features(const SimState& state, int t, const Goal& goal, const FeatureSpec& spec,
                              const AgentDesign& design) {
    VecX f(spec.input_dim(design));
    Eigen::Index k = 0;
    const int np = spec.periodic_count();
    for (int p = 0; p < np; ++p)
        f[k++] = std::sin(2.0 * std::numbers::pi * (t / spec.signal_period) + spec.phase(p));
    if (spec.state_on) {
        const Vec2 c = center_of_mass(state, design);
        for (const auto& x : state.x) {
            f[k++] = spec.position_scale * (x.x() - c.x());
            f[k++] = spec.position_scale * (x.y() - c.y());
        }
        if (spec.include_velocities)
            for (const auto& v : state.v) {
                f[k++] = spec.velocity_scale * v.x();
                f[k++] = spec.velocity_scale * v.y();
            }
    }
    if (spec.targets_on)
        for (const auto& c : spec.targets) {
            const double value = c.scale * goal_value(goal, c.name);
            for (int d = 0; d < c.duplication; ++d) f[k++] = value;
        }
    return f;
}

/// Adds d(features)/d(state)^T g to `grad` (positions through the CoM subtraction, velocities directly).
inline void features_adjoint(const VecX& g, const FeatureSpec& spec, const AgentDesign& design, StateAdjoint& grad) {
    if (!spec.state_on) return;
    const std::size_t n = design.nodes.size();
    const Eigen::Index off = spec.periodic_count();
    Vec2 sum = Vec2::Zero();
    for (std::size_t i = 0; i < n; ++i) {
        const Vec2 gi(g[off + 2 * Eigen::Index(i)], g[off + 2 * Eigen::Index(i) + 1]);
        grad.x[i] += spec.position_scale * gi;
        sum += gi;
    }
    for (std::size_t i = 0; i < n; ++i) grad.x[i] -= spec.position_scale * (design.node_mass[i] / design.total_mass) * sum;
    if (spec.include_velocities) {
        const Eigen::Index voff = off + 2 * Eigen::Index(n);
        for (std::size_t i = 0; i < n; ++i)
            grad.v[i] += spec.velocity_scale * Vec2(g[voff + 2 * Eigen::Index(i)], g[voff + 2 * Eigen::Index(i) + 1]);
    }
}

} // namespace diffloco
