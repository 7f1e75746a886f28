#pragma once

#include <cstdint>
#include <vector>

#include "sdil/tensor.hpp"

namespace sdil::diff {

struct AdamConfig {
    double lr = 1e-3;
    double weight_decay = 5e-4; // decoupled (applied directly to the weights)
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Adam with decoupled weight decay over a fixed, ordered parameter group.
// Per-parameter first/second moment tensors mirror the parameter shapes.
// Updates are elementwise in 64-bit and deterministic.
class Adam {
public:
    Adam(std::vector<Parameter*> params, AdamConfig cfg);

    // Consumes Parameter::grad of every trainable parameter and zeroes it.
    void step();

    std::int64_t step_count() const { return t_; }
    const AdamConfig& config() const { return cfg_; }

private:
    std::vector<Parameter*> params_;
    std::vector<Tensor> m_;
    std::vector<Tensor> v_;
    AdamConfig cfg_;
    std::int64_t t_ = 0;
};

} // namespace sdil::diff
