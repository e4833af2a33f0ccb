#pragma once

#include "mgfi/ops.hpp"

namespace mgfi {

class Rng;

// Adaptive edge head: a 3x3 convolution generates per-tap offsets, a
// deformable convolution samples along them, and a 1x1 compression with a
// sigmoid yields a single-channel edge probability map.
struct AEParams {
    ConvParams offset_conv;  // in -> 18, 3x3 p1
    ConvParams deform;       // in -> in, 3x3 p1
    ConvParams compress;     // in -> 1, 1x1
};

AEParams make_ae_params(int in_channels, Rng& rng);

// (n, c, h, w) -> (n, 1, h, w) edge probabilities in (0, 1).
Tensor ae_forward(const Tensor& f, const AEParams& params);

}  // namespace mgfi
