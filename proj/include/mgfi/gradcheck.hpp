#pragma once

#include <functional>
#include <vector>

#include "mgfi/tensor.hpp"

namespace mgfi {

using ScalarClosure = std::function<Tensor(const std::vector<Tensor>&)>;

// Compares analytic gradients of a scalar-valued closure against central
// finite differences with step eps, accumulated in 64-bit. Returns the
// maximum over all input elements of
//   |analytic - numeric| / max(|analytic|, |numeric|, 1e-8).
// The closure must map the inputs to a (1,1,1,1) tensor.
double grad_check(const ScalarClosure& op, const std::vector<Tensor>& inputs,
                  double eps);

}  // namespace mgfi
