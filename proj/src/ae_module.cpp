#include "mgfi/ae_module.hpp"

#include "mgfi/network.hpp"
#include "mgfi/rng.hpp"

namespace mgfi {

AEParams make_ae_params(int in_channels, Rng& rng) {
    AEParams p;
    p.offset_conv = init::zero_conv(in_channels, 18, 3, 1, 1);
    p.deform = init::conv(rng, in_channels, in_channels, 3, 1, 1);
    p.compress = init::conv(rng, in_channels, 1, 1, 1, 0);
    return p;
}

Tensor ae_forward(const Tensor& f, const AEParams& params) {
    Tensor offsets = conv2d(f, params.offset_conv);
    Tensor y = deform_conv2d(f, params.deform, offsets);
    return sigmoid(pointwise_conv(y, params.compress.weight, params.compress.bias));
}

}  // namespace mgfi
