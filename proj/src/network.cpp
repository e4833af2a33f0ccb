#include "mgfi/network.hpp"

#include <stdexcept>

namespace mgfi {

namespace init {

Tensor kaiming(Rng& rng, const Shape& s, int fan_in) {
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    Tensor t = Tensor::zeros(s);
    float* d = t.mutable_data();
    for (std::int64_t i = 0; i < t.size(); ++i) {
        d[i] = static_cast<float>(rng.normal(0.0, stddev));
    }
    return t;
}

ConvParams conv(Rng& rng, int in_ch, int out_ch, int k, int stride, int pad,
                int dilation, bool bias) {
    ConvParams p;
    p.weight = kaiming(rng, Shape{out_ch, in_ch, k, k}, in_ch * k * k);
    if (bias) p.bias = Tensor::zeros(Shape{1, out_ch, 1, 1});
    p.stride = stride;
    p.padding = pad;
    p.dilation = dilation;
    return p;
}

ConvParams zero_conv(int in_ch, int out_ch, int k, int stride, int pad) {
    ConvParams p;
    p.weight = Tensor::zeros(Shape{out_ch, in_ch, k, k});
    p.bias = Tensor::zeros(Shape{1, out_ch, 1, 1});
    p.stride = stride;
    p.padding = pad;
    p.dilation = 1;
    return p;
}

}  // namespace init

void ModelConfig::validate() const {
    if (stage_channels.size() < 2) {
        throw std::invalid_argument("ModelConfig: at least 2 encoder stages required");
    }
    for (int c : stage_channels) {
        if (c < 1) throw std::invalid_argument("ModelConfig: stage channels must be >= 1");
    }
    if (class_count < 2) {
        throw std::invalid_argument("ModelConfig: class_count must be >= 2 (binary tasks use 2)");
    }
    if (input_channels != 1 && input_channels != 3) {
        throw std::invalid_argument("ModelConfig: input_channels must be 1 or 3");
    }
    if (blocks_per_stage < 1) {
        throw std::invalid_argument("ModelConfig: blocks_per_stage must be >= 1");
    }
    if (mgfi_enabled()) mgfi_config().validate();
}

MGFIConfig ModelConfig::mgfi_config() const {
    MGFIConfig c;
    c.in_channels = stage_channels.back();
    c.mid_channels = mgfi_mid_channels;
    c.atrous_dilation = atrous_dilation;
    return c;
}

std::string ModelConfig::variant_name() const {
    if (no_mgfi) return "no-mgfi";
    if (no_mgfi_upper) return "no-mgfi-upper";
    if (no_mgfi_lower) return "no-mgfi-lower";
    if (no_ae) return "no-ae";
    return "mgfi-net";
}

namespace {

ResBlockParams make_res_block(Rng& rng, int in_ch, int out_ch, int stride) {
    ResBlockParams b;
    b.conv1 = init::conv(rng, in_ch, out_ch, 3, stride, 1, 1, /*bias=*/false);
    b.bn1 = make_batchnorm(out_ch);
    b.conv2 = init::conv(rng, out_ch, out_ch, 3, 1, 1, 1, /*bias=*/false);
    b.bn2 = make_batchnorm(out_ch);
    if (stride != 1 || in_ch != out_ch) {
        b.projection = init::conv(rng, in_ch, out_ch, 1, stride, 0, 1, /*bias=*/false);
    }
    return b;
}

Tensor res_block_forward(const Tensor& x, ResBlockParams& b, bool training) {
    Tensor y = relu(batchnorm(conv2d(x, b.conv1), b.bn1, training));
    y = batchnorm(conv2d(y, b.conv2), b.bn2, training);
    Tensor shortcut = b.projection.weight.defined() ? conv2d(x, b.projection) : x;
    return relu(add(y, shortcut));
}

struct DecoderPlan {
    int levels = 0;
    std::vector<int> in_ch;    // conv input channels (after any concat)
    std::vector<int> out_ch;
    std::vector<int> skip;     // index into encoder features, -1 for none
};

DecoderPlan decoder_plan(const ModelConfig& cfg) {
    const int s = cfg.stages();
    DecoderPlan plan;
    plan.levels = cfg.mgfi_upper_enabled() ? s + 1 : s;
    int carried = cfg.stage_channels.back();
    for (int j = 0; j < plan.levels; ++j) {
        const bool last = j == plan.levels - 1;
        const int skip_stage = last ? -1 : plan.levels - 2 - j;  // 0-based into s1..sS
        const int out = last ? cfg.stage_channels.front() : cfg.stage_channels[skip_stage];
        const int in = carried + (skip_stage >= 0 ? cfg.stage_channels[skip_stage] : 0);
        plan.in_ch.push_back(in);
        plan.out_ch.push_back(out);
        plan.skip.push_back(skip_stage);
        carried = out;
    }
    return plan;
}

}  // namespace

NetworkParams param_init(const ModelConfig& config, std::uint64_t seed) {
    config.validate();
    Rng rng(seed);
    NetworkParams p;
    const int stem_ch = config.stage_channels.front();
    p.stem = init::conv(rng, config.input_channels, stem_ch, 3, 1, 1, 1, /*bias=*/false);
    p.stem_bn = make_batchnorm(stem_ch);

    int in_ch = stem_ch;
    for (int s = 0; s < config.stages(); ++s) {
        const int out_ch = config.stage_channels[s];
        std::vector<ResBlockParams> blocks;
        for (int b = 0; b < config.blocks_per_stage; ++b) {
            blocks.push_back(make_res_block(rng, b == 0 ? in_ch : out_ch, out_ch,
                                            b == 0 ? 2 : 1));
        }
        p.stages.push_back(std::move(blocks));
        in_ch = out_ch;
    }

    if (config.mgfi_enabled()) {
        const MGFIConfig mc = config.mgfi_config();
        if (config.mgfi_upper_enabled()) init_mgfi_upper(p.mgfi, mc.in_channels, rng);
        if (config.mgfi_lower_enabled()) init_mgfi_lower(p.mgfi, mc, rng);
    }

    const DecoderPlan plan = decoder_plan(config);
    for (int j = 0; j < plan.levels; ++j) {
        DecoderLevelParams lvl;
        lvl.conv = init::conv(rng, plan.in_ch[j], plan.out_ch[j], 3, 1, 1, 1,
                              /*bias=*/false);
        lvl.bn = make_batchnorm(plan.out_ch[j]);
        p.decoder.push_back(std::move(lvl));
    }

    p.seg_head = init::conv(rng, config.stage_channels.front(), config.class_count,
                            1, 1, 0);
    if (config.ae_enabled()) {
        p.ae = make_ae_params(config.stage_channels.front(), rng);
    }
    return p;
}

namespace {

void visit_conv(const std::string& name, ConvParams& c,
                const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(name + ".weight", c.weight);
    if (c.bias.defined()) fn(name + ".bias", c.bias);
}

void visit_bn(const std::string& name, BatchNormState& b,
              const std::function<void(const std::string&, Tensor&)>& fn) {
    fn(name + ".gamma", b.gamma);
    fn(name + ".beta", b.beta);
}

}  // namespace

void for_each_param(NetworkParams& p, const ModelConfig& config,
                    const std::function<void(const std::string&, Tensor&)>& fn) {
    visit_conv("stem", p.stem, fn);
    visit_bn("stem_bn", p.stem_bn, fn);
    for (std::size_t s = 0; s < p.stages.size(); ++s) {
        for (std::size_t b = 0; b < p.stages[s].size(); ++b) {
            const std::string base =
                "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
            ResBlockParams& blk = p.stages[s][b];
            visit_conv(base + ".conv1", blk.conv1, fn);
            visit_bn(base + ".bn1", blk.bn1, fn);
            visit_conv(base + ".conv2", blk.conv2, fn);
            visit_bn(base + ".bn2", blk.bn2, fn);
            if (blk.projection.weight.defined()) {
                visit_conv(base + ".proj", blk.projection, fn);
            }
        }
    }
    if (config.mgfi_upper_enabled()) {
        visit_conv("mgfi.overlap", p.mgfi.overlap, fn);
        fn("mgfi.dw_kernels", p.mgfi.dw_kernels);
        visit_conv("mgfi.dw_point", p.mgfi.dw_point, fn);
        visit_conv("mgfi.fuse", p.mgfi.fuse, fn);
        visit_bn("mgfi.fuse_bn", p.mgfi.fuse_bn, fn);
    }
    if (config.mgfi_lower_enabled()) {
        visit_conv("mgfi.offset", p.mgfi.offset_conv, fn);
        visit_conv("mgfi.deform", p.mgfi.deform, fn);
        visit_conv("mgfi.atrous", p.mgfi.atrous, fn);
        visit_conv("mgfi.standard", p.mgfi.standard, fn);
        visit_conv("mgfi.compress", p.mgfi.compress, fn);
    }
    for (std::size_t j = 0; j < p.decoder.size(); ++j) {
        const std::string base = "decoder" + std::to_string(j);
        visit_conv(base + ".conv", p.decoder[j].conv, fn);
        visit_bn(base + ".bn", p.decoder[j].bn, fn);
    }
    visit_conv("seg_head", p.seg_head, fn);
    if (config.ae_enabled()) {
        visit_conv("ae.offset", p.ae.offset_conv, fn);
        visit_conv("ae.deform", p.ae.deform, fn);
        visit_conv("ae.compress", p.ae.compress, fn);
    }
}

void for_each_buffer(NetworkParams& p, const ModelConfig& config,
                     const std::function<void(const std::string&, Tensor&)>& fn) {
    auto bn_buffers = [&fn](const std::string& name, BatchNormState& b) {
        fn(name + ".running_mean", b.running_mean);
        fn(name + ".running_var", b.running_var);
    };
    bn_buffers("stem_bn", p.stem_bn);
    for (std::size_t s = 0; s < p.stages.size(); ++s) {
        for (std::size_t b = 0; b < p.stages[s].size(); ++b) {
            const std::string base =
                "stage" + std::to_string(s + 1) + ".block" + std::to_string(b);
            bn_buffers(base + ".bn1", p.stages[s][b].bn1);
            bn_buffers(base + ".bn2", p.stages[s][b].bn2);
        }
    }
    if (config.mgfi_upper_enabled()) bn_buffers("mgfi.fuse_bn", p.mgfi.fuse_bn);
    for (std::size_t j = 0; j < p.decoder.size(); ++j) {
        bn_buffers("decoder" + std::to_string(j) + ".bn", p.decoder[j].bn);
    }
}

std::int64_t parameter_count(const ModelConfig& config) {
    NetworkParams p = param_init(config, 0);
    std::int64_t count = 0;
    for_each_param(p, config, [&count](const std::string&, Tensor& t) {
        count += t.size();
    });
    return count;
}

std::vector<Tensor> encoder_forward(const Tensor& x, NetworkParams& params,
                                    const ModelConfig& config, bool training) {
    Tensor y = relu(batchnorm(conv2d(x, params.stem), params.stem_bn, training));
    std::vector<Tensor> skips;
    for (auto& stage : params.stages) {
        for (auto& block : stage) {
            y = res_block_forward(y, block, training);
        }
        skips.push_back(y);
    }
    (void)config;
    return skips;
}

ModelOutput model_forward(const Tensor& x, NetworkParams& params,
                          const ModelConfig& config, bool training) {
    config.validate();
    const Shape xs = x.shape();
    const int div = config.required_divisor();
    if (xs.h % div != 0 || xs.w % div != 0) {
        throw std::invalid_argument("model_forward: input " + to_string(xs) +
                                    " must have H and W divisible by " +
                                    std::to_string(div));
    }
    if (xs.c != config.input_channels) {
        throw std::invalid_argument("model_forward: expected " +
                                    std::to_string(config.input_channels) +
                                    " input channels, got " + std::to_string(xs.c));
    }

    std::vector<Tensor> skips = encoder_forward(x, params, config, training);
    Tensor bottleneck = skips.back();
    const MGFIConfig mc = config.mgfi_config();
    if (config.mgfi_upper_enabled() && config.mgfi_lower_enabled()) {
        bottleneck = mgfi_forward(bottleneck, mc, params.mgfi, training);
    } else if (config.mgfi_upper_enabled()) {
        bottleneck = mgfi_upper(bottleneck, params.mgfi, training).first;
    } else if (config.mgfi_lower_enabled()) {
        bottleneck = mgfi_lower(bottleneck, mc, params.mgfi);
    }

    const DecoderPlan plan = decoder_plan(config);
    Tensor y = bottleneck;
    for (int j = 0; j < plan.levels; ++j) {
        y = upsample_bilinear(y, 2);
        if (plan.skip[j] >= 0) {
            y = concat_channels({y, skips[static_cast<std::size_t>(plan.skip[j])]});
        }
        y = relu(batchnorm(conv2d(y, params.decoder[j].conv), params.decoder[j].bn,
                           training));
    }

    ModelOutput out;
    out.seg_logits = pointwise_conv(y, params.seg_head.weight, params.seg_head.bias);
    if (config.ae_enabled()) {
        out.edge_map = ae_forward(y, params.ae);
    }
    return out;
}

}  // namespace mgfi
