#include "mgfi/adam.hpp"

#include <cmath>
#include <stdexcept>

namespace mgfi {

void adam_step(std::vector<Tensor>& params, const std::vector<Tensor>& grads,
               AdamState& state) {
    if (params.size() != grads.size()) {
        throw std::invalid_argument("adam_step: " + std::to_string(params.size()) +
                                    " params vs " + std::to_string(grads.size()) +
                                    " grads");
    }
    if (state.m.empty()) {
        state.m.reserve(params.size());
        state.v.reserve(params.size());
        for (const Tensor& p : params) {
            state.m.push_back(Tensor::zeros(p.shape()));
            state.v.push_back(Tensor::zeros(p.shape()));
        }
    }
    if (state.m.size() != params.size()) {
        throw std::invalid_argument("adam_step: state holds " +
                                    std::to_string(state.m.size()) +
                                    " moment slots, got " + std::to_string(params.size()) +
                                    " params");
    }

    state.t += 1;
    const double b1 = state.beta1;
    const double b2 = state.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));
    const double lr = state.learning_rate;
    const double eps = state.eps;

    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].shape() != grads[i].shape()) {
            throw std::invalid_argument("adam_step: param/grad shape mismatch at slot " +
                                        std::to_string(i) + ": " +
                                        to_string(params[i].shape()) + " vs " +
                                        to_string(grads[i].shape()));
        }
        const std::int64_t n = params[i].size();
        std::vector<float> new_p(static_cast<std::size_t>(n));
        std::vector<float> new_m(static_cast<std::size_t>(n));
        std::vector<float> new_v(static_cast<std::size_t>(n));
        const float* p = params[i].data();
        const float* g = grads[i].data();
        const float* m = state.m[i].data();
        const float* v = state.v[i].data();
        for (std::int64_t j = 0; j < n; ++j) {
            const double gj = g[j];
            const double mj = b1 * m[j] + (1.0 - b1) * gj;
            const double vj = b2 * v[j] + (1.0 - b2) * gj * gj;
            const double m_hat = mj / bc1;
            const double v_hat = vj / bc2;
            new_m[j] = static_cast<float>(mj);
            new_v[j] = static_cast<float>(vj);
            new_p[j] = static_cast<float>(p[j] - lr * m_hat / (std::sqrt(v_hat) + eps));
        }
        params[i] = Tensor(params[i].shape(), std::move(new_p));
        state.m[i] = Tensor(state.m[i].shape(), std::move(new_m));
        state.v[i] = Tensor(state.v[i].shape(), std::move(new_v));
    }
}

}  // namespace mgfi
