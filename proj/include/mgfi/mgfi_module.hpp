#pragma once

#include <utility>

#include "mgfi/ops.hpp"

namespace mgfi {

class Rng;

// Bottleneck block geometry. All kernels are 3x3; the atrous branch must use
// a dilation of at least 2 so it differs from the standard branch.
struct MGFIConfig {
    int in_channels = 0;
    int mid_channels = 0;     // per-branch width of the lower section
    int atrous_dilation = 2;

    void validate() const;
};

// Weights of one MGFI block: the upper section (overlapping downsample,
// depthwise-separable pair, fuse conv + batchnorm) and the lower section
// (offset conv + deformable weights, atrous, standard, 1x1 compression).
struct MGFIParams {
    ConvParams overlap;       // in -> in, 3x3 s2 p1
    Tensor dw_kernels;        // (in, 1, 3, 3)
    ConvParams dw_point;      // in -> in, 1x1
    ConvParams fuse;          // in -> in, 3x3 p1
    BatchNormState fuse_bn;
    ConvParams offset_conv;   // in -> 18, 3x3 p1
    ConvParams deform;        // in -> mid, 3x3 p1
    ConvParams atrous;        // in -> mid, 3x3, pad = dilation
    ConvParams standard;      // in -> mid, 3x3 p1
    ConvParams compress;      // 3*mid -> in, 1x1
};

MGFIParams make_mgfi_params(const MGFIConfig& cfg, Rng& rng);
void init_mgfi_upper(MGFIParams& p, int in_channels, Rng& rng);
void init_mgfi_lower(MGFIParams& p, const MGFIConfig& cfg, Rng& rng);

// Upper section: halves the spatial dims, extracts local features, fuses
// them with the downsampled map and re-injects the downsampled map through a
// flatten/transpose residual. Returns (residual output, downsampled map).
std::pair<Tensor, Tensor> mgfi_upper(const Tensor& f_in, MGFIParams& params,
                                     bool training);

// Lower section: deformable/atrous/standard branches concatenated and
// compressed back to the input channel count; shape preserving.
Tensor mgfi_lower(const Tensor& f, const MGFIConfig& cfg, MGFIParams& params);

// Full block: lower section applied to the upper section's residual output.
Tensor mgfi_forward(const Tensor& f_in, const MGFIConfig& cfg, MGFIParams& params,
                    bool training);

}  // namespace mgfi
