#pragma once

#include "diffloco/core.hpp"
#include "diffloco/rng.hpp"

#include <array>
#include <string_view>

namespace diffloco {

enum class Activation { Sin, Tanh, Relu, Gelu, Sigmoid };

inline constexpr std::array<Activation, 5> kAllActivations{Activation::Sin, Activation::Tanh, Activation::Relu,
                                                           Activation::Gelu, Activation::Sigmoid};

inline const char* to_string(Activation a) {
    switch (a) {
    case Activation::Sin: return "sin";
    case Activation::Tanh: return "tanh";
    case Activation::Relu: return "relu";
    case Activation::Gelu: return "gelu";
    case Activation::Sigmoid: return "sigmoid";
    }
    return "?";
}

inline Activation activation_from_string(std::string_view s) {
    for (auto a : kAllActivations)
        if (s == to_string(a)) return a;
    throw ConfigError("unknown activation \"" + std::string(s) + "\"");
}

/// Two fully connected layers: a = out(W2 hid(W1 f + b1) + b2).
struct ControllerParams {
    MatX W1; // hidden x input
    VecX b1;
    MatX W2; // output x hidden
    VecX b2;
    Activation hidden = Activation::Sin;
    Activation output = Activation::Sin;
    double omega0 = 1.0; // frequency multiplier inside sine activations

    Eigen::Index input_dim() const { return W1.cols(); }
    Eigen::Index hidden_dim() const { return W1.rows(); }
    Eigen::Index output_dim() const { return W2.rows(); }
    Eigen::Index size() const { return W1.size() + b1.size() + W2.size() + b2.size(); }

    void check() const {
        if (b1.size() != W1.rows() || W2.cols() != W1.rows() || b2.size() != W2.rows())
            throw ContractViolation("controller parameter dimensions are inconsistent");
    }
};

/// Gradient with the same layout as ControllerParams.
struct ControllerGrad {
    MatX W1;
    VecX b1;
    MatX W2;
    VecX b2;

    static ControllerGrad zeros_like(const ControllerParams& p) {
        return {MatX::Zero(p.W1.rows(), p.W1.cols()), VecX::Zero(p.b1.size()), MatX::Zero(p.W2.rows(), p.W2.cols()),
                VecX::Zero(p.b2.size())};
    }
};

struct ActivationCache {
    VecX features;
    VecX z1;
    VecX hidden;
    VecX z2;
    VecX out;
};

namespace detail {

inline double gelu(double z) {
    constexpr double k = 0.7978845608028654; // sqrt(2 / pi)
    return 0.5 * z * (1.0 + std::tanh(k * (z + 0.044715 * z * z * z)));
}

inline double gelu_grad(double z) {
    constexpr double k = 0.7978845608028654;
    const double u = k * (z + 0.044715 * z * z * z);
    const double th = std::tanh(u);
    return 0.5 * (1.0 + th) + 0.5 * z * (1.0 - th * th) * k * (1.0 + 3.0 * 0.044715 * z * z);
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }

inline double hidden_value(Activation a, double z, double w0) {
    switch (a) {
    case Activation::Sin: return std::sin(w0 * z);
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu: return z > 0.0 ? z : 0.0;
    case Activation::Gelu: return gelu(z);
    case Activation::Sigmoid: return sigmoid(z);
    }
    return 0.0;
}

inline double hidden_grad(Activation a, double z, double w0) {
    switch (a) {
    case Activation::Sin: return w0 * std::cos(w0 * z);
    case Activation::Tanh: {
        const double t = std::tanh(z);
        return 1.0 - t * t;
    }
    case Activation::Relu: return z > 0.0 ? 1.0 : 0.0;
    case Activation::Gelu: return gelu_grad(z);
    case Activation::Sigmoid: {
        const double s = sigmoid(z);
        return s * (1.0 - s);
    }
    }
    return 0.0;
}

// Output layer maps into [-1, 1]: relu/gelu shifted by -1 then clamped, sigmoid rescaled.
inline double output_value(Activation a, double z, double w0) {
    switch (a) {
    case Activation::Sin: return std::sin(w0 * z);
    case Activation::Tanh: return std::tanh(z);
    case Activation::Relu:
    case Activation::Gelu: return std::clamp(hidden_value(a, z, w0) - 1.0, -1.0, 1.0);
    case Activation::Sigmoid: return 2.0 * sigmoid(z) - 1.0;
    }
    return 0.0;
}

inline double output_grad(Activation a, double z, double w0) {
    switch (a) {
    case Activation::Relu:
    case Activation::Gelu: {
        const double raw = hidden_value(a, z, w0) - 1.0;
        return (raw > 1.0 || raw < -1.0) ? 0.0 : hidden_grad(a, z, w0);
    }
    case Activation::Sigmoid: return 2.0 * hidden_grad(a, z, w0);
    default: return hidden_grad(a, z, w0);
    }
}

} // namespace detail

inline VecX forward(const ControllerParams& p, const VecX& features, ActivationCache* cache = nullptr) {
    if (features.size() != p.input_dim()) throw ContractViolation("feature length does not match controller input");
    VecX z1 = p.W1 * features + p.b1;
    VecX h = z1.unaryExpr([&](double z) { return detail::hidden_value(p.hidden, z, p.omega0); });
    if (!h.allFinite()) throw NumericError("controller hidden layer produced non-finite values");
    VecX z2 = p.W2 * h + p.b2;
    VecX a = z2.unaryExpr([&](double z) { return detail::output_value(p.output, z, p.omega0); });
    if (!a.allFinite()) throw NumericError("controller output layer produced non-finite values");
    if (cache) *cache = {features, std::move(z1), std::move(h), std::move(z2), a};
    return a;
}

/// Pre-activation adjoints of one evaluation; weight gradients are outer products
/// of these with the cached layer inputs.
struct LayerAdjoint {
    VecX g_z1;
    VecX g_z2;
    VecX g_features;
};

inline LayerAdjoint backward_layers(const ControllerParams& p, const ActivationCache& c, const VecX& g_act) {
    if (g_act.size() != p.output_dim() || c.z2.size() != p.output_dim() || c.z1.size() != p.hidden_dim())
        throw ContractViolation("controller backward: shape mismatch");
    LayerAdjoint out;
    out.g_z2 = g_act.cwiseProduct(c.z2.unaryExpr([&](double z) { return detail::output_grad(p.output, z, p.omega0); }));
    const VecX g_h = p.W2.transpose() * out.g_z2;
    out.g_z1 = g_h.cwiseProduct(c.z1.unaryExpr([&](double z) { return detail::hidden_grad(p.hidden, z, p.omega0); }));
    out.g_features = p.W1.transpose() * out.g_z1;
    return out;
}

/// Full vector-Jacobian product: accumulates into `grad` and returns d/d features.
inline VecX backward(const ControllerParams& p, const ActivationCache& c, const VecX& g_act, ControllerGrad& grad) {
    auto la = backward_layers(p, c, g_act);
    grad.W2.noalias() += la.g_z2 * c.hidden.transpose();
    grad.b2 += la.g_z2;
    grad.W1.noalias() += la.g_z1 * c.features.transpose();
    grad.b1 += la.g_z1;
    return std::move(la.g_features);
}

/// SIREN-style init: weights U(-sqrt(6/fan_in)/omega0, +), biases U(-1/sqrt(fan_in), +).
inline ControllerParams init_params(Eigen::Index input_dim, Eigen::Index hidden_dim, Eigen::Index output_dim,
                                    std::uint64_t seed, Activation hidden = Activation::Sin,
                                    Activation output = Activation::Sin, double omega0 = 1.0) {
    if (input_dim < 1 || hidden_dim < 1 || output_dim < 1) throw ConfigError("controller dimensions must be >= 1");
    Rng rng(seed);
    auto fill = [&](auto& m, double bound) {
        for (Eigen::Index i = 0; i < m.rows(); ++i)
            for (Eigen::Index j = 0; j < m.cols(); ++j) m(i, j) = uniform(rng, -bound, bound);
    };
    ControllerParams p;
    p.hidden = hidden;
    p.output = output;
    p.omega0 = omega0;
    p.W1.resize(hidden_dim, input_dim);
    p.b1.resize(hidden_dim);
    p.W2.resize(output_dim, hidden_dim);
    p.b2.resize(output_dim);
    fill(p.W1, std::sqrt(6.0 / input_dim) / omega0);
    fill(p.b1, 1.0 / std::sqrt(double(input_dim)));
    fill(p.W2, std::sqrt(6.0 / hidden_dim) / omega0);
    fill(p.b2, 1.0 / std::sqrt(double(hidden_dim)));
    return p;
}

/// Flat view, row-major per matrix: W1, b1, W2, b2.
inline VecX flatten(const ControllerParams& p) {
    VecX v(p.size());
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < p.W1.rows(); ++i)
        for (Eigen::Index j = 0; j < p.W1.cols(); ++j) v[k++] = p.W1(i, j);
    v.segment(k, p.b1.size()) = p.b1;
    k += p.b1.size();
    for (Eigen::Index i = 0; i < p.W2.rows(); ++i)
        for (Eigen::Index j = 0; j < p.W2.cols(); ++j) v[k++] = p.W2(i, j);
    v.segment(k, p.b2.size()) = p.b2;
    return v;
}

inline VecX flatten(const ControllerGrad& g) {
    ControllerParams view;
    view.W1 = g.W1;
    view.b1 = g.b1;
    view.W2 = g.W2;
    view.b2 = g.b2;
    return flatten(view);
}

inline void assign_flat(ControllerParams& p, const VecX& v) {
    if (v.size() != p.size()) throw ContractViolation("flat parameter size mismatch");
    Eigen::Index k = 0;
    for (Eigen::Index i = 0; i < p.W1.rows(); ++i)
        for (Eigen::Index j = 0; j < p.W1.cols(); ++j) p.W1(i, j) = v[k++];
    p.b1 = v.segment(k, p.b1.size());
    k += p.b1.size();
    for (Eigen::Index i = 0; i < p.W2.rows(); ++i)
        for (Eigen::Index j = 0; j < p.W2.cols(); ++j) p.W2(i, j) = v[k++];
    p.b2 = v.segment(k, p.b2.size());
}

} // namespace diffloco
