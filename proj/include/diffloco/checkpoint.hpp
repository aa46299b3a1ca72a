#pragma once

#include "diffloco/config.hpp"

#include <filesystem>

namespace diffloco {

/// Mean validation losses over the goal grid, or their ratios to a baseline.
struct ValidationLosses {
    double task = 0.0;
    double run = 0.0;
    double jump = 0.0;
    double crawl = 0.0;

    bool operator==(const ValidationLosses&) const = default;
};

inline json validation_to_json(const ValidationLosses& v) {
    return {{"task", v.task}, {"run", v.run}, {"jump", v.jump}, {"crawl", v.crawl}};
}

inline ValidationLosses validation_from_json(const json& j) {
    ValidationLosses v;
    v.task = j.at("task").get<double>();
    v.run = j.at("run").get<double>();
    v.jump = j.at("jump").get<double>();
    v.crawl = j.value("crawl", 0.0);
    return v;
}

struct Checkpoint {
    TrainConfig config;
    AgentDesign design;
    ControllerParams params;
    int iteration = 0;
    ValidationLosses baseline; // raw validation losses of the iteration-0 controller
};

namespace detail {

inline json matrix_rows(const MatX& m) {
    json rows = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json r = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) r.push_back(m(i, j));
        rows.push_back(std::move(r));
    }
    return rows;
}

inline MatX matrix_from_rows(const json& j, Eigen::Index rows, Eigen::Index cols, const std::string& field) {
    if (!j.is_array() || Eigen::Index(j.size()) != rows) throw ParseError(field, "expected " + std::to_string(rows) + " rows");
    MatX m(rows, cols);
    for (Eigen::Index i = 0; i < rows; ++i) {
        const auto& r = j[std::size_t(i)];
        if (!r.is_array() || Eigen::Index(r.size()) != cols)
            throw ParseError(field + "[" + std::to_string(i) + "]", "expected " + std::to_string(cols) + " columns");
        for (Eigen::Index c = 0; c < cols; ++c) m(i, c) = get_number(r[std::size_t(c)], field);
    }
    return m;
}

inline VecX vector_from_json(const json& j, Eigen::Index n, const std::string& field) {
    if (!j.is_array() || Eigen::Index(j.size()) != n) throw ParseError(field, "expected " + std::to_string(n) + " values");
    VecX v(n);
    for (Eigen::Index i = 0; i < n; ++i) v[i] = get_number(j[std::size_t(i)], field);
    return v;
}

} // namespace detail

inline json checkpoint_to_json(const Checkpoint& c) {
    const auto& p = c.params;
    return {{"format", "diffloco-checkpoint"},
            {"version", 1},
            {"feature_spec", features_to_json(c.config.effective_features())},
            {"hidden_dim", p.hidden_dim()},
            {"activations", {{"hidden", to_string(p.hidden)}, {"output", to_string(p.output)}}},
            {"omega0", p.omega0},
            {"W1", detail::matrix_rows(p.W1)},
            {"b1", std::vector<double>(p.b1.data(), p.b1.data() + p.b1.size())},
            {"W2", detail::matrix_rows(p.W2)},
            {"b2", std::vector<double>(p.b2.data(), p.b2.data() + p.b2.size())},
            {"metadata",
             {{"iteration", c.iteration}, {"seed", c.config.seed}, {"config_hash", config_hash(c.config)}}},
            {"baseline_validation", validation_to_json(c.baseline)},
            {"config", config_to_json(c.config)},
            {"design", design_to_json(c.design)}};
}

inline Checkpoint checkpoint_from_json(const json& j) {
    if (!j.is_object() || j.value("format", "") != "diffloco-checkpoint")
        throw ParseError("format", "not a diffloco checkpoint");
    Checkpoint c;
    try {
        c.config = config_from_json(j.at("config"));
        c.design = design_from_json(j.at("design"));
        c.iteration = j.at("metadata").at("iteration").get<int>();
        c.baseline = validation_from_json(j.at("baseline_validation"));
        auto& p = c.params;
        p.hidden = activation_from_string(j.at("activations").at("hidden").get<std::string>());
        p.output = activation_from_string(j.at("activations").at("output").get<std::string>());
        p.omega0 = j.at("omega0").get<double>();
        const Eigen::Index hidden = j.at("hidden_dim").get<Eigen::Index>();
        const Eigen::Index in = c.config.effective_features().input_dim(c.design);
        const Eigen::Index out = c.design.num_actuators();
        p.W1 = detail::matrix_from_rows(j.at("W1"), hidden, in, "W1");
        p.b1 = detail::vector_from_json(j.at("b1"), hidden, "b1");
        p.W2 = detail::matrix_from_rows(j.at("W2"), out, hidden, "W2");
        p.b2 = detail::vector_from_json(j.at("b2"), out, "b2");
    } catch (const json::exception& e) {
        throw ParseError("checkpoint", e.what());
    }
    if (!c.params.W1.allFinite() || !c.params.W2.allFinite() || !c.params.b1.allFinite() || !c.params.b2.allFinite())
        throw ParseError("checkpoint", "non-finite parameters");
    return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
    const std::filesystem::path p(path);
    if (p.has_parent_path()) std::filesystem::create_directories(p.parent_path());
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw std::runtime_error("cannot write checkpoint " + path);
        out << checkpoint_to_json(c).dump(1) << '\n';
    }
    std::filesystem::rename(tmp, path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    return checkpoint_from_json(detail::parse_json_text(detail::read_file(path)));
}

} // namespace diffloco
