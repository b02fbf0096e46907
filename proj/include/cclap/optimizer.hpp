#pragma once

#include <cmath>
#include <unordered_map>

#include "cclap/nn.hpp"

namespace cclap {

// Momentum-free adaptive step: per-parameter second-moment scaling,
// p -= lr * g / (sqrt(v) + eps) with v an EMA of g^2.
class AdaptiveOptimizer {
public:
    explicit AdaptiveOptimizer(float lr = 2e-4f, float beta2 = 0.99f, float eps = 1e-8f)
        : lr_(lr), beta2_(beta2), eps_(eps) {}

    void step(NamedParams& params) {
        for (auto& [name, p] : params) {
            if (!p->grad) continue;
            auto& v = second_moment_[p->data.get()];
            if (v.size() != p->numel()) v.assign(p->numel(), 0.f);
            for (size_t i = 0; i < p->numel(); ++i) {
                float g = (*p->grad)[i];
                v[i] = beta2_ * v[i] + (1.f - beta2_) * g * g;
                (*p->data)[i] -= lr_ * g / (std::sqrt(v[i]) + eps_);
            }
        }
    }

    static void zero_grads(NamedParams& params) {
        for (auto& [name, p] : params) p->zero_grad();
    }

    void set_lr(float lr) { lr_ = lr; }
    float lr() const { return lr_; }

private:
    float lr_, beta2_, eps_;
    std::unordered_map<const void*, std::vector<float>> second_moment_;
};

}  // namespace cclap
