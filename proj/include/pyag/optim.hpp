#pragma once

#include <cstdint>
#include <vector>

#include "pyag/nn.hpp"

namespace pyag {

/// Adam with bias correction. Moment buffers are indexed by parameter position, so the
/// parameter list must be presented in the same order on every call.
class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
        : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

    void step(const std::vector<nn::Param*>& params);

    std::int64_t steps() const { return t_; }
    double lr() const { return lr_; }

    // Checkpoint access.
    std::vector<Tensor>& first_moments() { return m_; }
    std::vector<Tensor>& second_moments() { return v_; }
    void set_steps(std::int64_t t) { t_ = t; }

private:
    double lr_, beta1_, beta2_, eps_;
    std::int64_t t_ = 0;
    std::vector<Tensor> m_, v_;
};

}  // namespace pyag
