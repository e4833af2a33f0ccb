#include "mgfi/gradcheck.hpp"

#include <cmath>
#include <stdexcept>

#include "mgfi/tape.hpp"

namespace mgfi {

double grad_check(const ScalarClosure& op, const std::vector<Tensor>& inputs,
                  double eps) {
    if (eps <= 0.0) {
        throw std::invalid_argument("grad_check: eps must be positive");
    }

    std::vector<Tensor> analytic;
    {
        Tape tape;
        std::vector<Tensor> watched;
        watched.reserve(inputs.size());
        for (const Tensor& t : inputs) watched.push_back(tape.watch(t));
        Tensor loss = op(watched);
        if (!loss.is_scalar()) {
            throw std::invalid_argument("grad_check: closure output must be scalar, got " +
                                        to_string(loss.shape()));
        }
        GradientMap grads = tape.backward(loss);
        for (const Tensor& w : watched) analytic.push_back(grads.at(w));
    }

    double max_rel = 0.0;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        const std::int64_t n = inputs[t].size();
        for (std::int64_t i = 0; i < n; ++i) {
            // the probe value rounds to float32, so divide by the step that
            // was actually applied, not the nominal 2*eps
            const double center = static_cast<double>(inputs[t].data()[i]);
            const float v_plus = static_cast<float>(center + eps);
            const float v_minus = static_cast<float>(center - eps);
            auto eval_at = [&](float v) {
                std::vector<Tensor> probe = inputs;
                std::vector<float> vals = inputs[t].values();
                vals[static_cast<std::size_t>(i)] = v;
                probe[t] = Tensor(inputs[t].shape(), std::move(vals));
                Tensor out = op(probe);
                if (!out.is_scalar()) {
                    throw std::invalid_argument("grad_check: closure output must be scalar");
                }
                return out.scalar_f64();
            };
            const double plus = eval_at(v_plus);
            const double minus = eval_at(v_minus);
            const double numeric = (plus - minus) / (static_cast<double>(v_plus) -
                                                     static_cast<double>(v_minus));
            const double a = static_cast<double>(analytic[t].data()[i]);
            const double denom = std::max({std::fabs(a), std::fabs(numeric), 1e-8});
            const double rel = std::fabs(a - numeric) / denom;
            if (rel > max_rel) max_rel = rel;
        }
    }
    return max_rel;
}

}  // namespace mgfi
