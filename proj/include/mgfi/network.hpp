#pragma once

#include <functional>
#include <string>
#include <vector>

#include "mgfi/ae_module.hpp"
#include "mgfi/mgfi_module.hpp"
#include "mgfi/ops.hpp"
#include "mgfi/rng.hpp"

namespace mgfi {

namespace init {
// Kaiming-style fan-in scaled normal draws.
Tensor kaiming(Rng& rng, const Shape& s, int fan_in);
ConvParams conv(Rng& rng, int in_ch, int out_ch, int k, int stride, int pad,
                int dilation = 1, bool bias = true);
// Zero weights and bias: deformable branches start as standard convolutions.
ConvParams zero_conv(int in_ch, int out_ch, int k, int stride, int pad);
}  // namespace init

// Everything the architecture leaves open. Binary tasks use class_count = 2.
struct ModelConfig {
    int input_channels = 3;
    int class_count = 2;
    std::vector<int> stage_channels = {16, 32, 64, 128};
    int blocks_per_stage = 2;
    int mgfi_mid_channels = 64;
    int atrous_dilation = 2;
    float lambda_boundary = 1.0f;
    std::uint64_t seed = 0;
    // ablation switches mirroring the variant studies
    bool no_mgfi_upper = false;
    bool no_mgfi_lower = false;
    bool no_mgfi = false;
    bool no_ae = false;

    void validate() const;
    int stages() const { return static_cast<int>(stage_channels.size()); }
    // Inputs must be divisible by 2^(stages+1): one halving per stage plus
    // the MGFI downsample (kept uniform across ablation variants).
    int required_divisor() const { return 1 << (stages() + 1); }
    bool mgfi_upper_enabled() const { return !no_mgfi && !no_mgfi_upper; }
    bool mgfi_lower_enabled() const { return !no_mgfi && !no_mgfi_lower; }
    bool mgfi_enabled() const { return mgfi_upper_enabled() || mgfi_lower_enabled(); }
    bool ae_enabled() const { return !no_ae; }
    MGFIConfig mgfi_config() const;
    std::string variant_name() const;
};

struct ResBlockParams {
    ConvParams conv1;
    BatchNormState bn1;
    ConvParams conv2;
    BatchNormState bn2;
    ConvParams projection;  // 1x1; weight undefined for identity shortcuts
};

struct DecoderLevelParams {
    ConvParams conv;  // 3x3 p1 after upsample (+ optional skip concat)
    BatchNormState bn;
};

struct NetworkParams {
    ConvParams stem;
    BatchNormState stem_bn;
    std::vector<std::vector<ResBlockParams>> stages;
    MGFIParams mgfi;
    std::vector<DecoderLevelParams> decoder;
    ConvParams seg_head;  // 1x1 -> class_count
    AEParams ae;
};

// Deterministic initialization: conv weights are fan-in scaled normals,
// biases zero, batchnorm gamma 1 / beta 0, offset convolutions all zero.
// Identical seeds give bit-identical parameters.
NetworkParams param_init(const ModelConfig& config, std::uint64_t seed);

// Visits every learnable tensor in a fixed order with a stable dotted name.
void for_each_param(NetworkParams& p, const ModelConfig& config,
                    const std::function<void(const std::string&, Tensor&)>& fn);
// Batchnorm running statistics (saved in checkpoints, not updated by the
// optimizer).
void for_each_buffer(NetworkParams& p, const ModelConfig& config,
                     const std::function<void(const std::string&, Tensor&)>& fn);

std::int64_t parameter_count(const ModelConfig& config);

// Encoder features s1..s4 at halved resolutions (stage i output has
// stage_channels[i] channels at H/2^(i+1)).
std::vector<Tensor> encoder_forward(const Tensor& x, NetworkParams& params,
                                    const ModelConfig& config, bool training);

struct ModelOutput {
    Tensor seg_logits;  // (n, C, H, W)
    Tensor edge_map;    // (n, 1, H, W); undefined when the AE head is ablated
};

ModelOutput model_forward(const Tensor& x, NetworkParams& params,
                          const ModelConfig& config, bool training);

}  // namespace mgfi
