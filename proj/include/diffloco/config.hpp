#pragma once

#include "diffloco/controller.hpp"
#include "diffloco/design_io.hpp"
#include "diffloco/mpm.hpp"
#include "diffloco/objectives.hpp"
#include "diffloco/optim.hpp"

#include <set>

namespace diffloco {

struct SimConfig {
    MassSpringConfig mass_spring;
    MpmConfig mpm;
};

struct ControllerConfig {
    int hidden_dim = 64;
    Activation activation_hidden = Activation::Sin;
    Activation activation_output = Activation::Sin;
    double omega0 = 1.0;
    double output_init_scale = 1.0; // multiplies the initial output layer
};

struct AblationSwitches {
    bool periodic_signal_on = true;
    bool state_vector_on = true;
    bool targets_on = true;
    bool tailored_loss_on = true;
};

inline FeatureSpec default_training_features() {
    FeatureSpec f;
    // keep every input channel O(1): targets by their bound, centred positions by agent size
    f.position_scale = 10.0;
    // node velocities make the closed loop chaotic over 1000 contact-rich steps and the gradient useless
    f.include_velocities = false;
    f.velocity_scale = 1.0;
    f.targets = {{"g_v", 16, 1.0 / 0.08}, {"g_h", 16, 1.0 / 0.2}, {"g_c", 16, 1.0}};
    return f;
}

struct TrainConfig {
    DesignKind backend = DesignKind::MassSpring;
    int batch_size = 32;
    int iterations = 10000;
    std::uint64_t seed = 0;
    int validation_every = 100;
    OptimizerConfig optimizer{};
    GoalBounds goal_bounds{};
    LossWeights loss_weights{};
    GoalSchedule schedule{}; // shape only; goals are sampled
    SimConfig sim{};
    FeatureSpec features = default_training_features();
    ControllerConfig controller{};
    AblationSwitches ablation{};
    bool shared_batch_schedule = false; // all batch members follow one sampled schedule
    int validation_velocities = 9;
    int validation_heights = 3;

    double sim_dt() const { return backend == DesignKind::MassSpring ? sim.mass_spring.dt : sim.mpm.dt; }

    /// Schedule shape with the velocity time unit set to the simulation step.
    GoalSchedule schedule_shape() const {
        GoalSchedule s = schedule;
        s.goals.clear();
        s.step_dt = sim_dt();
        return s;
    }

    FeatureSpec effective_features() const {
        FeatureSpec f = features;
        f.periodic_on = ablation.periodic_signal_on;
        f.state_on = ablation.state_vector_on;
        f.targets_on = ablation.targets_on;
        return f;
    }

    VelocityLoss velocity_loss() const {
        return ablation.tailored_loss_on ? VelocityLoss::Windowed : VelocityLoss::Naive;
    }

    void validate() const {
        if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
        if (iterations < 0) throw ConfigError("iterations must be >= 0");
        if (validation_every < 1) throw ConfigError("validation_every must be >= 1");
        if (controller.hidden_dim < 1) throw ConfigError("controller.hidden_dim must be >= 1");
        if (!(controller.output_init_scale >= 0.0) || !std::isfinite(controller.output_init_scale))
            throw ConfigError("controller.output_init_scale must be finite and >= 0");
        if (validation_velocities < 1 || validation_heights < 1) throw ConfigError("validation grid must be non-empty");
        optimizer.validate();
        goal_bounds.validate();
        loss_weights.validate();
        features.validate();
        if (backend == DesignKind::MassSpring)
            sim.mass_spring.validate();
        else
            sim.mpm.validate();
        GoalSchedule s = schedule_shape();
        s.goals.assign(std::size_t(std::max(s.num_periods(), 0)), Goal{});
        try {
            s.validate();
        } catch (const ContractViolation& e) {
            throw ConfigError(e.what());
        }
    }
};

namespace detail {

inline void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key())) throw ConfigError(where + ": unknown key \"" + it.key() + "\"");
}

template <class T>
void read_opt(const json& j, const char* key, T& out, const std::string& where) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError(where + "." + key + ": wrong type");
    }
}

inline json contact_to_json(const ContactModel& c) {
    const char* k = c.kind == ContactKind::Sticky ? "sticky" : c.kind == ContactKind::Coulomb ? "coulomb" : "frictionless";
    return {{"kind", k}, {"mu", c.mu}};
}

inline ContactModel contact_from_json(const json& j, const std::string& where) {
    reject_unknown(j, {"kind", "mu"}, where);
    ContactModel c;
    std::string k = "sticky";
    read_opt(j, "kind", k, where);
    if (k == "sticky") c.kind = ContactKind::Sticky;
    else if (k == "coulomb") c.kind = ContactKind::Coulomb;
    else if (k == "frictionless") c.kind = ContactKind::Frictionless;
    else throw ConfigError(where + ".kind: unknown contact \"" + k + "\"");
    read_opt(j, "mu", c.mu, where);
    return c;
}

inline json pair_json(double lo, double hi) { return json::array({lo, hi}); }

inline void read_pair(const json& j, const char* key, double& lo, double& hi, const std::string& where) {
    if (!j.contains(key)) return;
    const auto& v = j.at(key);
    if (!v.is_array() || v.size() != 2 || !v[0].is_number() || !v[1].is_number())
        throw ConfigError(where + "." + key + ": expected [lo, hi]");
    lo = v[0].get<double>();
    hi = v[1].get<double>();
}

} // namespace detail

inline json features_to_json(const FeatureSpec& f) {
    json targets = json::array();
    for (const auto& c : f.targets) targets.push_back({{"name", c.name}, {"duplication", c.duplication}, {"scale", c.scale}});
    return {{"n_periodic", f.n_periodic},         {"signal_period", f.signal_period},
            {"phases", f.phases},                 {"include_velocities", f.include_velocities},
            {"position_scale", f.position_scale}, {"velocity_scale", f.velocity_scale},
            {"targets", targets},                 {"periodic_on", f.periodic_on},
            {"state_on", f.state_on},             {"targets_on", f.targets_on}};
}

inline FeatureSpec features_from_json(const json& j, FeatureSpec f = default_training_features()) {
    const std::string w = "features";
    detail::reject_unknown(j,
                           {"n_periodic", "signal_period", "phases", "include_velocities", "position_scale",
                            "velocity_scale", "targets", "periodic_on", "state_on", "targets_on"},
                           w);
    detail::read_opt(j, "n_periodic", f.n_periodic, w);
    detail::read_opt(j, "signal_period", f.signal_period, w);
    detail::read_opt(j, "phases", f.phases, w);
    detail::read_opt(j, "include_velocities", f.include_velocities, w);
    detail::read_opt(j, "position_scale", f.position_scale, w);
    detail::read_opt(j, "velocity_scale", f.velocity_scale, w);
    detail::read_opt(j, "periodic_on", f.periodic_on, w);
    detail::read_opt(j, "state_on", f.state_on, w);
    detail::read_opt(j, "targets_on", f.targets_on, w);
    if (j.contains("targets")) {
        if (!j["targets"].is_array()) throw ConfigError("features.targets: expected an array");
        f.targets.clear();
        for (std::size_t i = 0; i < j["targets"].size(); ++i) {
            const auto& t = j["targets"][i];
            const std::string tw = w + ".targets[" + std::to_string(i) + "]";
            detail::reject_unknown(t, {"name", "duplication", "scale"}, tw);
            TargetChannel c;
            detail::read_opt(t, "name", c.name, tw);
            detail::read_opt(t, "duplication", c.duplication, tw);
            detail::read_opt(t, "scale", c.scale, tw);
            f.targets.push_back(c);
        }
    }
    f.validate();
    return f;
}

inline json config_to_json(const TrainConfig& c) {
    const auto& ms = c.sim.mass_spring;
    const auto& mp = c.sim.mpm;
    return {
        {"backend", to_string(c.backend)},
        {"batch_size", c.batch_size},
        {"iterations", c.iterations},
        {"seed", c.seed},
        {"validation_every", c.validation_every},
        {"optimizer",
         {{"kind", c.optimizer.kind == OptimizerKind::Adam ? "adam" : "sgd"},
          {"lr", c.optimizer.lr},
          {"beta1", c.optimizer.beta1},
          {"beta2", c.optimizer.beta2},
          {"eps", c.optimizer.eps},
          {"clip_norm", c.optimizer.clip_norm}}},
        {"goal_bounds",
         {{"g_v", detail::pair_json(c.goal_bounds.v_lo, c.goal_bounds.v_hi)},
          {"g_h", detail::pair_json(c.goal_bounds.h_lo, c.goal_bounds.h_hi)},
          {"g_c", detail::pair_json(c.goal_bounds.c_lo, c.goal_bounds.c_hi)}}},
        {"loss_weights",
         {{"lambda_v", c.loss_weights.lambda_v},
          {"lambda_h", c.loss_weights.lambda_h},
          {"lambda_c", c.loss_weights.lambda_c},
          {"lambda_a", c.loss_weights.lambda_a},
          {"mu", c.loss_weights.mu}}},
        {"schedule",
         {{"total_steps", c.schedule.total_steps},
          {"period", c.schedule.period},
          {"velocity_window", c.schedule.velocity_window}}},
        {"sim",
         {{"mass_spring",
           {{"dt", ms.dt},
            {"gravity", ms.gravity},
            {"dashpot", ms.dashpot},
            {"act_limit", ms.act_limit},
            {"ground_height", ms.ground_height},
            {"contact", detail::contact_to_json(ms.contact)}}},
          {"mpm",
           {{"dt", mp.dt},
            {"grid_dx", mp.grid_dx},
            {"grid_extent", mp.grid_extent},
            {"margin", mp.margin},
            {"gravity", mp.gravity},
            {"youngs_modulus", mp.youngs_modulus},
            {"poisson_ratio", mp.poisson_ratio},
            {"particle_volume", mp.particle_volume},
            {"particle_mass", mp.particle_mass},
            {"act_stress_bound", mp.act_stress_bound},
            {"ground_height", mp.ground_height},
            {"contact", detail::contact_to_json(mp.contact)}}}}},
        {"features", features_to_json(c.features)},
        {"controller",
         {{"hidden_dim", c.controller.hidden_dim},
          {"activation_hidden", to_string(c.controller.activation_hidden)},
          {"activation_output", to_string(c.controller.activation_output)},
          {"omega0", c.controller.omega0},
          {"output_init_scale", c.controller.output_init_scale}}},
        {"ablation",
         {{"periodic_signal_on", c.ablation.periodic_signal_on},
          {"state_vector_on", c.ablation.state_vector_on},
          {"targets_on", c.ablation.targets_on},
          {"tailored_loss_on", c.ablation.tailored_loss_on}}},
        {"shared_batch_schedule", c.shared_batch_schedule},
        {"validation_velocities", c.validation_velocities},
        {"validation_heights", c.validation_heights},
    };
}

inline TrainConfig config_from_json(const json& j) {
    using detail::read_opt;
    using detail::reject_unknown;
    TrainConfig c;
    reject_unknown(j,
                   {"backend", "batch_size", "iterations", "seed", "validation_every", "optimizer", "goal_bounds",
                    "loss_weights", "schedule", "sim", "features", "controller", "ablation", "shared_batch_schedule",
                    "validation_velocities", "validation_heights"},
                   "config");
    const std::string w = "config";
    if (j.contains("backend")) {
        std::string b;
        read_opt(j, "backend", b, w);
        if (b == "mass_spring" || b == "ms") c.backend = DesignKind::MassSpring;
        else if (b == "mpm") c.backend = DesignKind::Mpm;
        else throw ConfigError("config.backend: unknown backend \"" + b + "\"");
    }
    read_opt(j, "batch_size", c.batch_size, w);
    read_opt(j, "iterations", c.iterations, w);
    read_opt(j, "seed", c.seed, w);
    read_opt(j, "validation_every", c.validation_every, w);
    read_opt(j, "shared_batch_schedule", c.shared_batch_schedule, w);
    read_opt(j, "validation_velocities", c.validation_velocities, w);
    read_opt(j, "validation_heights", c.validation_heights, w);

    if (j.contains("optimizer")) {
        const auto& o = j["optimizer"];
        reject_unknown(o, {"kind", "lr", "beta1", "beta2", "eps", "clip_norm"}, "optimizer");
        if (o.contains("kind")) {
            std::string k;
            read_opt(o, "kind", k, "optimizer");
            if (k == "adam") c.optimizer.kind = OptimizerKind::Adam;
            else if (k == "sgd") {
                c.optimizer.kind = OptimizerKind::Sgd;
                c.optimizer.lr = 1e-2;
            } else throw ConfigError("optimizer.kind: unknown optimizer \"" + k + "\"");
        }
        read_opt(o, "lr", c.optimizer.lr, "optimizer");
        read_opt(o, "beta1", c.optimizer.beta1, "optimizer");
        read_opt(o, "beta2", c.optimizer.beta2, "optimizer");
        read_opt(o, "eps", c.optimizer.eps, "optimizer");
        read_opt(o, "clip_norm", c.optimizer.clip_norm, "optimizer");
    }
    if (j.contains("goal_bounds")) {
        const auto& g = j["goal_bounds"];
        reject_unknown(g, {"g_v", "g_h", "g_c"}, "goal_bounds");
        detail::read_pair(g, "g_v", c.goal_bounds.v_lo, c.goal_bounds.v_hi, "goal_bounds");
        detail::read_pair(g, "g_h", c.goal_bounds.h_lo, c.goal_bounds.h_hi, "goal_bounds");
        detail::read_pair(g, "g_c", c.goal_bounds.c_lo, c.goal_bounds.c_hi, "goal_bounds");
    }
    if (j.contains("loss_weights")) {
        const auto& l = j["loss_weights"];
        reject_unknown(l, {"lambda_v", "lambda_h", "lambda_c", "lambda_a", "mu"}, "loss_weights");
        read_opt(l, "lambda_v", c.loss_weights.lambda_v, "loss_weights");
        read_opt(l, "lambda_h", c.loss_weights.lambda_h, "loss_weights");
        read_opt(l, "lambda_c", c.loss_weights.lambda_c, "loss_weights");
        read_opt(l, "lambda_a", c.loss_weights.lambda_a, "loss_weights");
        read_opt(l, "mu", c.loss_weights.mu, "loss_weights");
    }
    if (j.contains("schedule")) {
        const auto& s = j["schedule"];
        reject_unknown(s, {"total_steps", "period", "velocity_window"}, "schedule");
        read_opt(s, "total_steps", c.schedule.total_steps, "schedule");
        read_opt(s, "period", c.schedule.period, "schedule");
        read_opt(s, "velocity_window", c.schedule.velocity_window, "schedule");
    }
    if (j.contains("sim")) {
        const auto& s = j["sim"];
        reject_unknown(s, {"mass_spring", "mpm"}, "sim");
        if (s.contains("mass_spring")) {
            const auto& m = s["mass_spring"];
            const std::string mw = "sim.mass_spring";
            auto& ms = c.sim.mass_spring;
            reject_unknown(m, {"dt", "gravity", "dashpot", "act_limit", "ground_height", "contact"}, mw);
            read_opt(m, "dt", ms.dt, mw);
            read_opt(m, "gravity", ms.gravity, mw);
            read_opt(m, "dashpot", ms.dashpot, mw);
            read_opt(m, "act_limit", ms.act_limit, mw);
            read_opt(m, "ground_height", ms.ground_height, mw);
            if (m.contains("contact")) ms.contact = detail::contact_from_json(m["contact"], mw + ".contact");
        }
        if (s.contains("mpm")) {
            const auto& m = s["mpm"];
            const std::string mw = "sim.mpm";
            auto& mp = c.sim.mpm;
            reject_unknown(m,
                           {"dt", "grid_dx", "grid_extent", "margin", "gravity", "youngs_modulus", "poisson_ratio",
                            "particle_volume", "particle_mass", "act_stress_bound", "ground_height", "contact"},
                           mw);
            read_opt(m, "dt", mp.dt, mw);
            read_opt(m, "grid_dx", mp.grid_dx, mw);
            read_opt(m, "grid_extent", mp.grid_extent, mw);
            read_opt(m, "margin", mp.margin, mw);
            read_opt(m, "gravity", mp.gravity, mw);
            read_opt(m, "youngs_modulus", mp.youngs_modulus, mw);
            read_opt(m, "poisson_ratio", mp.poisson_ratio, mw);
            read_opt(m, "particle_volume", mp.particle_volume, mw);
            read_opt(m, "particle_mass", mp.particle_mass, mw);
            read_opt(m, "act_stress_bound", mp.act_stress_bound, mw);
            read_opt(m, "ground_height", mp.ground_height, mw);
            if (m.contains("contact")) mp.contact = detail::contact_from_json(m["contact"], mw + ".contact");
        }
    }
    if (j.contains("features")) c.features = features_from_json(j["features"]);
    if (j.contains("controller")) {
        const auto& n = j["controller"];
        reject_unknown(n, {"hidden_dim", "activation_hidden", "activation_output", "omega0", "output_init_scale"},
                       "controller");
        read_opt(n, "hidden_dim", c.controller.hidden_dim, "controller");
        read_opt(n, "omega0", c.controller.omega0, "controller");
        read_opt(n, "output_init_scale", c.controller.output_init_scale, "controller");
        std::string a;
        if (n.contains("activation_hidden")) {
            read_opt(n, "activation_hidden", a, "controller");
            c.controller.activation_hidden = activation_from_string(a);
        }
        if (n.contains("activation_output")) {
            read_opt(n, "activation_output", a, "controller");
            c.controller.activation_output = activation_from_string(a);
        }
    }
    if (j.contains("ablation")) {
        const auto& a = j["ablation"];
        reject_unknown(a, {"periodic_signal_on", "state_vector_on", "targets_on", "tailored_loss_on"}, "ablation");
        read_opt(a, "periodic_signal_on", c.ablation.periodic_signal_on, "ablation");
        read_opt(a, "state_vector_on", c.ablation.state_vector_on, "ablation");
        read_opt(a, "targets_on", c.ablation.targets_on, "ablation");
        read_opt(a, "tailored_loss_on", c.ablation.tailored_loss_on, "ablation");
    }
    c.validate();
    return c;
}

inline TrainConfig load_config(const std::string& path) {
    const std::string text = detail::read_file(path);
    return config_from_json(detail::parse_json_text(text));
}

/// FNV-1a over the canonical JSON dump; stable across builds and platforms.
inline std::uint64_t config_hash(const TrainConfig& c) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : config_to_json(c).dump()) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    return h;
}

} // namespace diffloco
