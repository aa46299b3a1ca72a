#pragma once

#include "diffloco/checkpoint.hpp"
#include "diffloco/trainer.hpp"

#include <deque>
#include <optional>
#include <ostream>

namespace diffloco {

/// Parses {"type":"set_targets", "g_v":.., "g_h":.., "g_c":..}; absent fields keep their value in `current`.
/// The result is clamped into `bounds`. Throws ParseError on malformed input.
inline Goal parse_set_targets(const std::string& text, Goal current, const GoalBounds& bounds) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ParseError("message", std::string("invalid JSON: ") + e.what());
    }
    if (!j.is_object() || !j.contains("type") || j["type"] != "set_targets")
        throw ParseError("message", "expected {\"type\":\"set_targets\", ...}");
    for (const char* k : {"g_v", "g_h", "g_c"}) {
        if (!j.contains(k)) continue;
        if (!j[k].is_number()) throw ParseError("message", std::string(k) + " must be a number");
        const double v = j[k].get<double>();
        if (!std::isfinite(v)) throw ParseError("message", std::string(k) + " must be finite");
        (k[2] == 'v' ? current.g_v : k[2] == 'h' ? current.g_h : current.g_c) = v;
    }
    return bounds.clamp(current);
}

/// Closed-loop simulation driven by live targets: the state behind `serve` and `replay`.
class LiveSession {
public:
    explicit LiveSession(Checkpoint ck, double rate_hz = 30.0)
        : ck_(std::move(ck)), fs_(ck_.config.effective_features()), rate_hz_(rate_hz) {
        if (!(rate_hz > 0.0)) throw ConfigError("frame rate must be > 0");
        substeps_ = std::max(1, int(std::lround((1.0 / rate_hz) / ck_.config.sim_dt())));
        const auto& b = ck_.config.goal_bounds;
        goal_ = b.clamp({0.0, b.h_lo, b.c_lo});
        reset();
    }

    const Checkpoint& checkpoint() const { return ck_; }
    int substeps() const { return substeps_; }
    const Goal& targets() const { return goal_; }
    const SimState& state() const { return state_; }
    std::uint64_t tick_count() const { return ticks_; }

    void reset() {
        state_ = initial_state(ck_.design);
        t_ = 0;
        com_.clear();
        com_.push_back(center_of_mass(state_, ck_.design));
        act_ = VecX::Zero(ck_.design.num_actuators());
    }

    /// Clamps into the configured bounds; returns the goal actually applied.
    const Goal& set_targets(const Goal& g) {
        goal_ = ck_.config.goal_bounds.clamp(g);
        return goal_;
    }

    /// Applies a set_targets message (see parse_set_targets).
    const Goal& apply_message(const std::string& text) {
        return goal_ = parse_set_targets(text, goal_, ck_.config.goal_bounds);
    }

    /// Advances one frame (substeps controller+simulation steps). On divergence the pose is reset
    /// and the error text returned.
    std::optional<std::string> tick() {
        ++ticks_;
        try {
            for (int k = 0; k < substeps_; ++k) {
                const VecX f = assemble_features(state_, t_, goal_, fs_, ck_.design);
                act_ = forward(ck_.params, f);
                if (ck_.design.kind == DesignKind::MassSpring)
                    state_ = step(state_, act_, ck_.config.sim.mass_spring, ck_.design).first;
                else
                    state_ = mpm_step(state_, act_, ck_.config.sim.mpm, ck_.design).first;
                ++t_;
                com_.push_back(center_of_mass(state_, ck_.design));
                if (int(com_.size()) > ck_.config.schedule.velocity_window + 1) com_.pop_front();
            }
        } catch (const SimulationDiverged& e) {
            reset();
            return std::string(e.what());
        } catch (const NumericError& e) {
            reset();
            return std::string(e.what());
        }
        return std::nullopt;
    }

    /// Windowed CoM velocity over the last velocity_window steps (m/s); 0 until the window fills.
    double velocity() const {
        const int w = int(com_.size()) - 1;
        if (w < ck_.config.schedule.velocity_window) return 0.0;
        return (com_.back().x() - com_.front().x()) / (w * ck_.config.sim_dt());
    }

    json springs_json() const {
        json s = json::array();
        for (const auto& sp : ck_.design.springs) s.push_back({sp.a, sp.b});
        return s;
    }

    json hello() const {
        const auto& b = ck_.config.goal_bounds;
        return {{"type", "hello"},
                {"design",
                 {{"name", ck_.design.name},
                  {"kind", to_string(ck_.design.kind)},
                  {"nodes", ck_.design.num_nodes()},
                  {"actuators", ck_.design.num_actuators()},
                  {"springs", springs_json()}}},
                {"bounds", {{"g_v", {b.v_lo, b.v_hi}}, {"g_h", {b.h_lo, b.h_hi}}, {"g_c", {b.c_lo, b.c_hi}}}},
                {"ground_height", ground_height()},
                {"dt", ck_.config.sim_dt()},
                {"substeps", substeps_},
                {"rate_hz", rate_hz_},
                {"targets", targets_json()}};
    }

    json frame(bool with_springs = false) const {
        json pos = json::array();
        for (const auto& x : state_.x) pos.push_back({x.x(), x.y()});
        const Vec2 c = com_.back();
        json f = {{"type", "frame"},
                  {"t", t_},
                  {"positions", std::move(pos)},
                  {"actuation", std::vector<double>(act_.data(), act_.data() + act_.size())},
                  {"com", {c.x(), c.y()}},
                  {"velocity", velocity()},
                  {"targets", targets_json()}};
        if (with_springs) f["springs"] = springs_json();
        return f;
    }

private:
    json targets_json() const { return {{"g_v", goal_.g_v}, {"g_h", goal_.g_h}, {"g_c", goal_.g_c}}; }
    double ground_height() const {
        return ck_.design.kind == DesignKind::MassSpring ? ck_.config.sim.mass_spring.ground_height
                                                        : ck_.config.sim.mpm.ground_height;
    }

    Checkpoint ck_;
    FeatureSpec fs_;
    double rate_hz_;
    int substeps_ = 1;
    Goal goal_{};
    SimState state_;
    int t_ = 0;
    std::deque<Vec2> com_;
    VecX act_;
    std::uint64_t ticks_ = 0;
};

inline json error_message(const std::string& msg) { return {{"type", "error"}, {"msg", msg}}; }

/// Target changes for `replay`: {"ticks": N, "targets": [{"tick": k, "g_v": .., "g_h": .., "g_c": ..}, ...]}.
struct GoalScript {
    int ticks = 0;
    std::vector<std::pair<int, Goal>> changes; // sorted by tick; fields not given keep their previous value

    static GoalScript from_json(const json& j, const Goal& start) {
        detail::reject_unknown(j, {"ticks", "targets"}, "goals");
        GoalScript s;
        detail::read_opt(j, "ticks", s.ticks, "goals");
        if (s.ticks < 1) throw ConfigError("goals.ticks must be >= 1");
        Goal cur = start;
        int last = -1;
        if (j.contains("targets")) {
            if (!j["targets"].is_array()) throw ConfigError("goals.targets: expected an array");
            for (const auto& e : j["targets"]) {
                detail::reject_unknown(e, {"tick", "g_v", "g_h", "g_c"}, "goals.targets");
                int tick = 0;
                detail::read_opt(e, "tick", tick, "goals.targets");
                if (tick < last || tick < 0) throw ConfigError("goals.targets must be sorted by tick");
                last = tick;
                detail::read_opt(e, "g_v", cur.g_v, "goals.targets");
                detail::read_opt(e, "g_h", cur.g_h, "goals.targets");
                detail::read_opt(e, "g_c", cur.g_c, "goals.targets");
                s.changes.emplace_back(tick, cur);
            }
        }
        return s;
    }
};

/// Runs a goal script headless and writes one frame per line; the first frame also carries the springs.
inline int replay(const Checkpoint& ck, const GoalScript& script, std::ostream& out, double rate_hz = 30.0) {
    LiveSession s(ck, rate_hz);
    std::size_t next = 0;
    int errors = 0;
    for (int k = 0; k < script.ticks; ++k) {
        while (next < script.changes.size() && script.changes[next].first <= k) s.set_targets(script.changes[next++].second);
        if (auto err = s.tick()) {
            out << error_message(*err).dump() << '\n';
            ++errors;
        }
        out << s.frame(k == 0).dump() << '\n';
    }
    return errors;
}

} // namespace diffloco
