#pragma once

#include <vector>

#include "mgfi/tape.hpp"
#include "mgfi/tensor.hpp"

namespace mgfi {

// Weights of a 2-D convolution. weight is (out_ch, in_ch, kh, kw); bias is an
// optional (1, out_ch, 1, 1) tensor. Kernel sides must be odd.
struct ConvParams {
    Tensor weight;
    Tensor bias;  // undefined when absent
    int stride = 1;
    int padding = 0;
    int dilation = 1;
};

// Per-channel batch normalization state. gamma/beta are learnable,
// running_mean/running_var are inference statistics updated in training mode.
// All four are shaped (1, c, 1, 1).
struct BatchNormState {
    Tensor gamma;
    Tensor beta;
    Tensor running_mean;
    Tensor running_var;
    float momentum = 0.1f;
    float eps = 1e-5f;
};

BatchNormState make_batchnorm(int channels, float momentum = 0.1f,
                              float eps = 1e-5f);

// ---- elementwise / reshape -------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, float s);
// Sum of all elements into a (1,1,1,1) scalar; accumulates in 64-bit.
Tensor sum_all(const Tensor& x);

Tensor concat_channels(const std::vector<Tensor>& parts);
Tensor slice_channels(const Tensor& x, int first, int count);

// (n,c,h,w) -> (n, h*w, c, 1); element (n, y*w+x, c, 0) = input (n, c, y, x).
Tensor flatten_transpose(const Tensor& x);
// Inverse of flatten_transpose for the given spatial dims.
Tensor flatten_inverse(const Tensor& x, int h, int w);

// ---- activations -----------------------------------------------------------

Tensor relu(const Tensor& x);
Tensor sigmoid(const Tensor& x);
// Per-pixel softmax over the channel dimension.
Tensor softmax_channels(const Tensor& x);

// ---- convolutions ----------------------------------------------------------

// Standard/atrous convolution with zero padding. Output spatial size is
// floor((H + 2*pad - dilation*(k-1) - 1)/stride) + 1 and must be >= 1.
Tensor conv2d(const Tensor& x, const ConvParams& p);

// Per-channel convolution: channel m of the output reads only channel m of
// the input. w is (c, 1, kh, kw); no bias.
Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride,
                        int padding);

// 1x1 cross-channel convolution; bias may be undefined.
Tensor pointwise_conv(const Tensor& x, const Tensor& w, const Tensor& bias);

// Learned 3x3 stride-2 pad-1 halving; requires H, W >= 2.
Tensor overlap_downsample(const Tensor& x, const ConvParams& p);

// ---- deformable convolution ------------------------------------------------

// Value of plane (n,c) at fractional position (py, px): bilinear blend of the
// four neighbours, where neighbours outside the image are zero and positions
// fully outside [-1, H] x [-1, W] give 0.
float bilinear_sample(const Tensor& x, int n, int c, float py, float px);

// Convolution whose tap positions are shifted by per-tap offsets. offsets is
// (n, 2K, oh, ow) with channel 2k holding dx and 2k+1 holding dy for tap k in
// row-major tap order. Requires p.dilation == 1.
Tensor deform_conv2d(const Tensor& x, const ConvParams& p,
                     const Tensor& offsets);

// ---- normalization / resampling ---------------------------------------------

// training: normalize by batch statistics over (n,h,w) per channel and update
// running stats with momentum; inference: normalize by running stats.
Tensor batchnorm(const Tensor& x, BatchNormState& s, bool training);

// Bilinear upsampling by an integer factor >= 2, align-corners false.
Tensor upsample_bilinear(const Tensor& x, int factor);

// Output spatial size of a convolution along one axis.
int conv_out_size(int in, int k, int stride, int pad, int dilation);

// Finite-difference checks are only valid away from subgradient kinks. While
// an audit is installed (thread-local), relu records the smallest |input|,
// deformable sampling records the distance of every coordinate to the
// nearest integer, and cross-entropy records the smallest true-class
// probability. Test harnesses use these margins to reject degenerate seeds.
struct KinkAudit {
    float min_relu_margin = 1e30f;
    float min_coord_margin = 1e30f;
    float min_true_prob = 1e30f;
};
KinkAudit* set_kink_audit(KinkAudit* audit);  // returns the previous one
KinkAudit* kink_audit();

}  // namespace mgfi
