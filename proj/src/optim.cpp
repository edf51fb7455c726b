#include "pyag/optim.hpp"

#include <cmath>

#include "pyag/common.hpp"

namespace pyag {

void Adam::step(const std::vector<nn::Param*>& params) {
    if (m_.empty()) {
        for (const auto* p : params) {
            m_.emplace_back(p->value.n(), p->value.c(), p->value.h(), p->value.w());
            v_.emplace_back(p->value.n(), p->value.c(), p->value.h(), p->value.w());
        }
    }
    if (m_.size() != params.size()) fail(ErrorKind::InvalidArgument, "Adam: parameter list changed size");
    ++t_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        auto w = params[i]->value.values();
        auto g = params[i]->grad.values();
        auto m = m_[i].values();
        auto v = v_[i].values();
        if (m.size() != w.size()) fail(ErrorKind::InvalidArgument, "Adam: moment shape mismatch for " + params[i]->name);
        for (std::size_t j = 0; j < w.size(); ++j) {
            m[j] = beta1_ * m[j] + (1 - beta1_) * g[j];
            v[j] = beta2_ * v[j] + (1 - beta2_) * g[j] * g[j];
            w[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
        }
    }
}

}  // namespace pyag
