#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

#include "cvae/tape.hpp"

namespace cvae {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-7;
};

// One state per parameter; t is shared across the set and incremented once
// per step.
class Adam {
   public:
    explicit Adam(AdamConfig cfg = {}) : cfg_(cfg) {}

    const AdamConfig& config() const { return cfg_; }
    void set_lr(double lr) { cfg_.lr = lr; }
    long step_count() const { return t_; }
    void set_step_count(long t) { t_ = t; }

    // Applies one update from the grads accumulated in each param. Returns
    // false (and leaves parameters untouched) if any gradient is non-finite.
    bool step(std::vector<Param*>& params) {
        for (Param* p : params) {
            p->value.ensure_grad();
            for (double g : p->value.grad)
                if (!std::isfinite(g)) return false;
        }
        if (m_.empty()) {
            for (Param* p : params) {
                m_.emplace_back(p->value.numel(), 0.0);
                v_.emplace_back(p->value.numel(), 0.0);
            }
        }
        if (m_.size() != params.size())
            throw ContractError("adam: parameter set changed between steps");
        ++t_;
        double bc1 = 1.0 - std::pow(cfg_.beta1, (double)t_);
        double bc2 = 1.0 - std::pow(cfg_.beta2, (double)t_);
        for (std::size_t pi = 0; pi < params.size(); ++pi) {
            Param& p = *params[pi];
            auto& m = m_[pi];
            auto& v = v_[pi];
            if (m.size() != p.value.numel())
                throw ContractError("adam: parameter shape changed");
            for (std::size_t i = 0; i < m.size(); ++i) {
                double g = p.value.grad[i];
                m[i] = cfg_.beta1 * m[i] + (1.0 - cfg_.beta1) * g;
                v[i] = cfg_.beta2 * v[i] + (1.0 - cfg_.beta2) * g * g;
                double mh = m[i] / bc1;
                double vh = v[i] / bc2;
                p.value.data[i] -=
                    cfg_.lr * p.lr_scale * mh / (std::sqrt(vh) + cfg_.eps);
            }
        }
        return true;
    }

    const std::vector<std::vector<double>>& first_moments() const { return m_; }
    const std::vector<std::vector<double>>& second_moments() const { return v_; }
    std::vector<std::vector<double>>& first_moments() { return m_; }
    std::vector<std::vector<double>>& second_moments() { return v_; }

   private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

}  // namespace cvae
