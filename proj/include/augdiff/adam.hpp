#pragma once

#include <cstdint>
#include <vector>

#include "augdiff/tensor.hpp"

namespace augdiff {

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

// Bias-corrected Adam. m/v shapes mirror the parameter list; the step counter
// increases by exactly one per adam_step call.
struct AdamState {
    AdamConfig cfg;
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    int64_t step = 0;
};

AdamState make_adam_state(const AdamConfig& cfg, const std::vector<Tensor*>& params);

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads);

}  // namespace augdiff
