#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace diffloco {

using Vec2 = Eigen::Vector2d;
using Mat2 = Eigen::Matrix2d;
using VecX = Eigen::VectorXd;
using MatX = Eigen::MatrixXd;

// Row-major storage for the tape matrices so one time step is one contiguous row.
using RowMatX = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Malformed design/config/checkpoint file. `where` is "line N" or a JSON field path.
class ParseError : public std::runtime_error {
public:
    ParseError(std::string where, const std::string& what)
        : std::runtime_error(where + ": " + what), where_(std::move(where)) {}
    const std::string& where() const noexcept { return where_; }

private:
    std::string where_;
};

/// A named structural invariant of an AgentDesign does not hold.
class DesignError : public std::runtime_error {
public:
    DesignError(std::string invariant, const std::string& detail)
        : std::runtime_error(invariant + (detail.empty() ? "" : ": " + detail)),
          invariant_(std::move(invariant)) {}
    const std::string& invariant() const noexcept { return invariant_; }

private:
    std::string invariant_;
};

/// Forward simulation produced a non-finite or inverted state.
class SimulationDiverged : public std::runtime_error {
public:
    SimulationDiverged(int step, const std::string& what)
        : std::runtime_error("simulation diverged at step " + std::to_string(step) + ": " + what),
          step_(step), detail_(what) {}
    int step() const noexcept { return step_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    int step_;
    std::string detail_;
};

/// Reverse sweep produced a non-finite gradient.
class GradientExplosion : public std::runtime_error {
public:
    GradientExplosion(int step, const std::string& what)
        : std::runtime_error("non-finite gradient at step " + std::to_string(step) + ": " + what),
          step_(step) {}
    int step() const noexcept { return step_; }

private:
    int step_;
};

/// Caller broke a shape or pairing precondition.
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const char* what) {
    if (!cond) throw ContractViolation(what);
}

inline bool all_finite(const Vec2& v) { return std::isfinite(v.x()) && std::isfinite(v.y()); }

template <class Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

template <class T>
bool all_finite(const std::vector<T>& xs) {
    for (const auto& x : xs)
        if (!all_finite(x)) return false;
    return true;
}

} // namespace diffloco
