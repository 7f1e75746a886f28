#include "sdil/adam.hpp"

#include <cmath>

namespace sdil::diff {

Adam::Adam(std::vector<Parameter*> params, AdamConfig cfg)
    : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Parameter* p : params_) {
        m_.emplace_back(p->value.shape(), 0.0f);
        v_.emplace_back(p->value.shape(), 0.0f);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(t_));
    for (std::size_t i = 0; i < params_.size(); ++i) {
        Parameter& p = *params_[i];
        if (!p.trainable) continue;
        Tensor& m = m_[i];
        Tensor& v = v_[i];
        for (std::int64_t j = 0; j < p.value.size(); ++j) {
            const double g = p.grad[j];
            const double mj = cfg_.beta1 * m[j] + (1.0 - cfg_.beta1) * g;
            const double vj = cfg_.beta2 * v[j] + (1.0 - cfg_.beta2) * g * g;
            m[j] = static_cast<float>(mj);
            v[j] = static_cast<float>(vj);
            const double mhat = mj / bc1;
            const double vhat = vj / bc2;
            const double w = p.value[j];
            p.value[j] = static_cast<float>(
                w - cfg_.lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * w));
        }
        p.zero_grad();
    }
}

} // namespace sdil::diff
