#pragma once

#include "diffloco/agent.hpp"

#include <nlohmann/json.hpp>

#include <fstream>
#include <sstream>

namespace diffloco {

using json = nlohmann::json;

namespace detail {

inline std::string line_of(const std::string& text, std::size_t byte) {
    const std::size_t end = std::min(byte, text.size());
    return "line " + std::to_string(1 + std::count(text.begin(), text.begin() + end, '\n'));
}

/// Parses `text`, mapping syntax errors to ParseError("line N", ...).
inline json parse_json_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ParseError(line_of(text, e.byte), e.what());
    }
}

inline std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError(path, "cannot open file");
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline double get_number(const json& j, const std::string& field) {
    if (!j.is_number()) throw ParseError(field, "expected number");
    return j.get<double>();
}

inline int get_index(const json& j, const std::string& field) {
    if (!j.is_number_integer()) throw ParseError(field, "expected integer index");
    return j.get<int>();
}

inline Vec2 get_vec2(const json& j, const std::string& field) {
    if (!j.is_array() || j.size() != 2) throw ParseError(field, "expected [x, y]");
    return {get_number(j[0], field + "[0]"), get_number(j[1], field + "[1]")};
}

} // namespace detail

inline constexpr double kDefaultStiffness = 1.0e4;
inline constexpr double kDefaultNodeMass = 1.0;

inline const char* to_string(DesignKind k) { return k == DesignKind::MassSpring ? "mass_spring" : "mpm"; }

inline AgentDesign design_from_json(const json& j) {
    using namespace detail;
    if (!j.is_object()) throw ParseError("<root>", "expected object");
    AgentDesign d;
    if (j.contains("name")) d.name = j["name"].get<std::string>();

    const std::string kind = j.value("kind", std::string("mass_spring"));
    if (kind == "mass_spring")
        d.kind = DesignKind::MassSpring;
    else if (kind == "mpm")
        d.kind = DesignKind::Mpm;
    else
        throw ParseError("kind", "expected \"mass_spring\" or \"mpm\", got \"" + kind + "\"");

    if (!j.contains("nodes") || !j["nodes"].is_array()) throw ParseError("nodes", "expected array");
    for (std::size_t i = 0; i < j["nodes"].size(); ++i)
        d.nodes.push_back(get_vec2(j["nodes"][i], "nodes[" + std::to_string(i) + "]"));

    if (!j.contains("node_mass")) {
        d.node_mass.assign(d.nodes.size(), kDefaultNodeMass);
    } else if (j["node_mass"].is_number()) {
        d.node_mass.assign(d.nodes.size(), get_number(j["node_mass"], "node_mass"));
    } else if (j["node_mass"].is_array()) {
        for (std::size_t i = 0; i < j["node_mass"].size(); ++i)
            d.node_mass.push_back(get_number(j["node_mass"][i], "node_mass[" + std::to_string(i) + "]"));
    } else {
        throw ParseError("node_mass", "expected number or array");
    }

    const double default_k =
        j.contains("default_stiffness") ? get_number(j["default_stiffness"], "default_stiffness") : kDefaultStiffness;

    if (j.contains("springs")) {
        if (!j["springs"].is_array()) throw ParseError("springs", "expected array");
        for (std::size_t s = 0; s < j["springs"].size(); ++s) {
            const auto& js = j["springs"][s];
            const std::string f = "springs[" + std::to_string(s) + "]";
            if (!js.is_object()) throw ParseError(f, "expected object");
            if (!js.contains("a") || !js.contains("b")) throw ParseError(f, "missing endpoint a/b");
            Spring sp;
            sp.a = get_index(js["a"], f + ".a");
            sp.b = get_index(js["b"], f + ".b");
            sp.stiffness = js.contains("stiffness") ? get_number(js["stiffness"], f + ".stiffness") : default_k;
            if (js.contains("actuated")) {
                if (!js["actuated"].is_boolean()) throw ParseError(f + ".actuated", "expected boolean");
                sp.actuated = js["actuated"].get<bool>();
            }
            d.springs.push_back(sp);
        }
    }

    if (j.contains("actuator_groups")) {
        const auto& jg = j["actuator_groups"];
        if (!jg.is_array()) throw ParseError("actuator_groups", "expected array of index arrays");
        for (std::size_t g = 0; g < jg.size(); ++g) {
            const std::string f = "actuator_groups[" + std::to_string(g) + "]";
            if (!jg[g].is_array()) throw ParseError(f, "expected index array");
            std::vector<int> members;
            for (std::size_t k = 0; k < jg[g].size(); ++k)
                members.push_back(get_index(jg[g][k], f + "[" + std::to_string(k) + "]"));
            d.actuator_groups.push_back(std::move(members));
        }
    } else if (d.kind == DesignKind::MassSpring) {
        for (std::size_t s = 0; s < d.springs.size(); ++s)
            if (d.springs[s].actuated) d.actuator_groups.push_back({static_cast<int>(s)});
    }

    d.finalize();
    return d;
}

/// Canonical form: every default made explicit.
inline json design_to_json(const AgentDesign& d) {
    json j;
    j["name"] = d.name;
    j["kind"] = to_string(d.kind);
    j["nodes"] = json::array();
    for (const auto& p : d.nodes) j["nodes"].push_back({p.x(), p.y()});
    j["node_mass"] = d.node_mass;
    j["springs"] = json::array();
    for (const auto& s : d.springs)
        j["springs"].push_back({{"a", s.a}, {"b", s.b}, {"stiffness", s.stiffness}, {"actuated", s.actuated}});
    j["actuator_groups"] = d.actuator_groups;
    return j;
}

inline AgentDesign parse_design(const std::string& text) { return design_from_json(detail::parse_json_text(text)); }

inline AgentDesign load_design(const std::string& path) { return parse_design(detail::read_file(path)); }

inline void save_design(const AgentDesign& d, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path);
    out << design_to_json(d).dump(2) << '\n';
}

} // namespace diffloco
