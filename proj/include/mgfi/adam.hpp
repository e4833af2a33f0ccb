#pragma once

#include <vector>

#include "mgfi/tensor.hpp"

namespace mgfi {

// Adam state aligned with a fixed parameter ordering. Moments are allocated
// lazily on the first step.
struct AdamState {
    std::vector<Tensor> m;
    std::vector<Tensor> v;
    std::int64_t t = 0;
    float beta1 = 0.9f;
    float beta2 = 0.999f;
    float eps = 1e-8f;
    float learning_rate = 1e-3f;
};

// m <- b1*m + (1-b1)*g; v <- b2*v + (1-b2)*g^2; bias-corrected update
// theta <- theta - lr * m_hat / (sqrt(v_hat) + eps). Element math runs in
// 64-bit and rounds back to float32 storage.
void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state);

}  // namespace mgfi
