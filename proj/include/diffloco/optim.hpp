#pragma once

#include "diffloco/core.hpp"

namespace diffloco {

enum class OptimizerKind { Adam, Sgd };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::Adam;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.9;
    double eps = 1e-8;
    double clip_norm = 0.0; // 0 disables

    void validate() const {
        if (!(lr > 0.0)) throw ConfigError("optimizer.lr must be > 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ConfigError("optimizer betas must be in [0, 1)");
        if (!(eps > 0.0)) throw ConfigError("optimizer.eps must be > 0");
        if (!(clip_norm >= 0.0)) throw ConfigError("optimizer.clip_norm must be >= 0");
    }
};

/// Adam with bias-corrected moments, or plain SGD, over a flat parameter vector.
class Optimizer {
public:
    explicit Optimizer(OptimizerConfig cfg, Eigen::Index n) : cfg_(cfg), m_(VecX::Zero(n)), v_(VecX::Zero(n)) {
        cfg_.validate();
    }

    void step(VecX& params, VecX grad) {
        if (grad.size() != params.size() || grad.size() != m_.size()) throw ContractViolation("optimizer size mismatch");
        if (!grad.allFinite()) throw NumericError("non-finite gradient passed to optimizer");
        if (cfg_.clip_norm > 0.0) {
            const double n = grad.norm();
            if (n > cfg_.clip_norm) grad *= cfg_.clip_norm / n;
        }
        ++t_;
        if (cfg_.kind == OptimizerKind::Sgd) {
            params -= cfg_.lr * grad;
            return;
        }
        m_ = cfg_.beta1 * m_ + (1.0 - cfg_.beta1) * grad;
        v_ = cfg_.beta2 * v_ + (1.0 - cfg_.beta2) * grad.cwiseAbs2();
        const double c1 = 1.0 - std::pow(cfg_.beta1, double(t_));
        const double c2 = 1.0 - std::pow(cfg_.beta2, double(t_));
        params.array() -= cfg_.lr * (m_.array() / c1) / ((v_.array() / c2).sqrt() + cfg_.eps);
    }

    long steps() const { return t_; }
    const VecX& first_moment() const { return m_; }
    const VecX& second_moment() const { return v_; }

private:
    OptimizerConfig cfg_;
    VecX m_, v_;
    long t_ = 0;
};

} // namespace diffloco
