#include "mgfi/mgfi_module.hpp"

#include <stdexcept>

#include "mgfi/network.hpp"
#include "mgfi/rng.hpp"

namespace mgfi {

void MGFIConfig::validate() const {
    if (in_channels < 1 || mid_channels < 1) {
        throw std::invalid_argument("MGFIConfig: channel counts must be >= 1");
    }
    if (atrous_dilation < 2) {
        throw std::invalid_argument(
            "MGFIConfig: atrous dilation must be >= 2 (1 would duplicate the standard branch)");
    }
}

void init_mgfi_upper(MGFIParams& p, int in, Rng& rng) {
    p.overlap = init::conv(rng, in, in, 3, /*stride=*/2, /*pad=*/1);
    p.dw_kernels = init::kaiming(rng, Shape{in, 1, 3, 3}, /*fan_in=*/9);
    p.dw_point = init::conv(rng, in, in, 1, 1, 0);
    p.fuse = init::conv(rng, in, in, 3, 1, 1, 1, /*bias=*/false);
    p.fuse_bn = make_batchnorm(in);
}

void init_mgfi_lower(MGFIParams& p, const MGFIConfig& cfg, Rng& rng) {
    const int in = cfg.in_channels;
    const int mid = cfg.mid_channels;
    p.offset_conv = init::zero_conv(in, 18, 3, 1, 1);
    p.deform = init::conv(rng, in, mid, 3, 1, 1);
    p.atrous = init::conv(rng, in, mid, 3, 1, cfg.atrous_dilation, cfg.atrous_dilation);
    p.standard = init::conv(rng, in, mid, 3, 1, 1);
    p.compress = init::conv(rng, 3 * mid, in, 1, 1, 0);
}

MGFIParams make_mgfi_params(const MGFIConfig& cfg, Rng& rng) {
    cfg.validate();
    MGFIParams p;
    init_mgfi_upper(p, cfg.in_channels, rng);
    init_mgfi_lower(p, cfg, rng);
    return p;
}

std::pair<Tensor, Tensor> mgfi_upper(const Tensor& f_in, MGFIParams& params,
                                     bool training) {
    Tensor f_overlap = overlap_downsample(f_in, params.overlap);
    Tensor dw = depthwise_conv2d(f_overlap, params.dw_kernels, /*stride=*/1,
                                 /*padding=*/1);
    Tensor f_dw = pointwise_conv(dw, params.dw_point.weight, params.dw_point.bias);
    if (f_dw.shape() != f_overlap.shape()) {
        throw std::invalid_argument("mgfi_upper: local branch shape " +
                                    to_string(f_dw.shape()) + " does not match " +
                                    to_string(f_overlap.shape()));
    }
    Tensor fused = conv2d(add(f_overlap, f_dw), params.fuse);
    Tensor f_concat = relu(batchnorm(fused, params.fuse_bn, training));
    // residual re-injection in flattened space
    Tensor flat = add(flatten_transpose(f_concat), flatten_transpose(f_overlap));
    Tensor residual =
        flatten_inverse(flat, f_overlap.shape().h, f_overlap.shape().w);
    return {residual, f_overlap};
}

Tensor mgfi_lower(const Tensor& f, const MGFIConfig& cfg, MGFIParams& params) {
    if (f.shape().c != cfg.in_channels) {
        throw std::invalid_argument("mgfi_lower: input has " +
                                    std::to_string(f.shape().c) + " channels, config expects " +
                                    std::to_string(cfg.in_channels));
    }
    Tensor offsets = conv2d(f, params.offset_conv);
    Tensor f_deform = deform_conv2d(f, params.deform, offsets);
    Tensor f_atrous = conv2d(f, params.atrous);
    Tensor f_standard = conv2d(f, params.standard);
    if (f_deform.shape() != f_atrous.shape() || f_atrous.shape() != f_standard.shape()) {
        throw std::logic_error("mgfi_lower: branch outputs disagree on shape");
    }
    Tensor cat = concat_channels({f_deform, f_atrous, f_standard});
    return pointwise_conv(cat, params.compress.weight, params.compress.bias);
}

Tensor mgfi_forward(const Tensor& f_in, const MGFIConfig& cfg, MGFIParams& params,
                    bool training) {
    auto [residual, f_overlap] = mgfi_upper(f_in, params, training);
    (void)f_overlap;  // consumed only by the residual path
    return mgfi_lower(residual, cfg, params);
}

}  // namespace mgfi
