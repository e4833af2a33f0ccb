#include <doctest.h>

#include <set>

#include "mgfi/network.hpp"
#include "oracles.hpp"

using namespace mgfi;

namespace {

ModelConfig micro_config() {
    ModelConfig c;
    c.input_channels = 1;
    c.class_count = 2;
    c.stage_channels = {4, 8};
    c.blocks_per_stage = 1;
    c.mgfi_mid_channels = 4;
    return c;
}

std::vector<std::string> param_names(const ModelConfig& cfg) {
    NetworkParams p = param_init(cfg, 1);
    std::vector<std::string> names;
    for_each_param(p, cfg, [&names](const std::string& n, Tensor&) {
        names.push_back(n);
    });
    return names;
}

}  // namespace

TEST_CASE("param_init is bit-identical for identical seeds") {
    ModelConfig cfg;  // defaults
    NetworkParams a = param_init(cfg, 7);
    NetworkParams b = param_init(cfg, 7);
    NetworkParams c = param_init(cfg, 8);
    bool all_equal = true;
    bool any_differs_from_c = false;
    std::vector<Tensor> av, bv, cv;
    for_each_param(a, cfg, [&av](const std::string&, Tensor& t) { av.push_back(t); });
    for_each_param(b, cfg, [&bv](const std::string&, Tensor& t) { bv.push_back(t); });
    for_each_param(c, cfg, [&cv](const std::string&, Tensor& t) { cv.push_back(t); });
    for (std::size_t i = 0; i < av.size(); ++i) {
        if (oracle::max_abs_diff(av[i], bv[i]) != 0.0) all_equal = false;
        if (oracle::max_abs_diff(av[i], cv[i]) != 0.0) any_differs_from_c = true;
    }
    CHECK(all_equal);
    CHECK(any_differs_from_c);
}

TEST_CASE("offset convolutions start at zero so deform begins as standard conv") {
    ModelConfig cfg;
    NetworkParams p = param_init(cfg, 3);
    for (const Tensor* t : {&p.mgfi.offset_conv.weight, &p.mgfi.offset_conv.bias,
                            &p.ae.offset_conv.weight, &p.ae.offset_conv.bias}) {
        for (std::int64_t i = 0; i < t->size(); ++i) CHECK(t->data()[i] == 0.0f);
    }
}

TEST_CASE("parameter count for the default config is stable and documented") {
    ModelConfig cfg;
    const std::int64_t count = parameter_count(cfg);
    CHECK(count == parameter_count(cfg));
    // golden value recorded from the first build of the default architecture
    CHECK(count == 1727639);
}

TEST_CASE("encoder shapes follow the stride arithmetic") {
    ModelConfig cfg;  // stages {16,32,64,128}
    NetworkParams p = param_init(cfg, 5);
    Rng rng(81);
    Tensor x = oracle::random_tensor(rng, Shape{1, 3, 64, 64}, 0.0, 1.0);
    std::vector<Tensor> skips = encoder_forward(x, p, cfg, /*training=*/true);
    REQUIRE(skips.size() == 4);
    CHECK(skips[0].shape() == Shape{1, 16, 32, 32});
    CHECK(skips[1].shape() == Shape{1, 32, 16, 16});
    CHECK(skips[2].shape() == Shape{1, 64, 8, 8});
    CHECK(skips[3].shape() == Shape{1, 128, 4, 4});
}

TEST_CASE("zero input with zero biases and beta gives all-zero features") {
    ModelConfig cfg = micro_config();
    NetworkParams p = param_init(cfg, 6);  // biases and betas start at zero
    Tensor x = Tensor::zeros(Shape{2, 1, 16, 16});
    std::vector<Tensor> skips = encoder_forward(x, p, cfg, /*training=*/true);
    for (const Tensor& s : skips) {
        for (std::int64_t i = 0; i < s.size(); ++i) CHECK(s.data()[i] == 0.0f);
    }
}

TEST_CASE("model_forward output shapes and input validation") {
    ModelConfig cfg;
    NetworkParams p = param_init(cfg, 9);
    Rng rng(82);
    Tensor x = oracle::random_tensor(rng, Shape{1, 3, 64, 64}, 0.0, 1.0);
    ModelOutput out = model_forward(x, p, cfg, /*training=*/false);
    CHECK(out.seg_logits.shape() == Shape{1, 2, 64, 64});
    CHECK(out.edge_map.shape() == Shape{1, 1, 64, 64});

    Tensor bad = oracle::random_tensor(rng, Shape{1, 3, 48, 48}, 0.0, 1.0);
    CHECK_THROWS_WITH_AS(model_forward(bad, p, cfg, false),
                         doctest::Contains("divisible by 32"), std::invalid_argument);
}

TEST_CASE("model_forward is deterministic") {
    ModelConfig cfg = micro_config();
    NetworkParams p = param_init(cfg, 10);
    Rng rng(83);
    Tensor x = oracle::random_tensor(rng, Shape{2, 1, 16, 16}, 0.0, 1.0);
    NetworkParams p1 = p;
    NetworkParams p2 = p;
    ModelOutput a = model_forward(x, p1, cfg, true);
    ModelOutput b = model_forward(x, p2, cfg, true);
    CHECK(oracle::max_abs_diff(a.seg_logits, b.seg_logits) == 0.0);
    CHECK(oracle::max_abs_diff(a.edge_map, b.edge_map) == 0.0);
}

TEST_CASE("ablation switches change the architecture as expected") {
    ModelConfig base = micro_config();
    Rng rng(84);
    Tensor x = oracle::random_tensor(rng, Shape{1, 1, 16, 16}, 0.0, 1.0);

    ModelConfig no_mgfi = base;
    no_mgfi.no_mgfi = true;
    NetworkParams p1 = param_init(no_mgfi, 11);
    ModelOutput o1 = model_forward(x, p1, no_mgfi, false);
    CHECK(o1.seg_logits.shape() == Shape{1, 2, 16, 16});

    ModelConfig no_upper = base;
    no_upper.no_mgfi_upper = true;
    NetworkParams p2 = param_init(no_upper, 11);
    ModelOutput o2 = model_forward(x, p2, no_upper, false);
    CHECK(o2.seg_logits.shape() == Shape{1, 2, 16, 16});

    ModelConfig no_lower = base;
    no_lower.no_mgfi_lower = true;
    NetworkParams p3 = param_init(no_lower, 11);
    ModelOutput o3 = model_forward(x, p3, no_lower, false);
    CHECK(o3.seg_logits.shape() == Shape{1, 2, 16, 16});

    ModelConfig no_ae = base;
    no_ae.no_ae = true;
    NetworkParams p4 = param_init(no_ae, 11);
    ModelOutput o4 = model_forward(x, p4, no_ae, false);
    CHECK_FALSE(o4.edge_map.defined());

    // inventory changes: no-ae removes exactly the ae.* names
    const std::vector<std::string> full_names = param_names(base);
    const std::vector<std::string> no_ae_names = param_names(no_ae);
    std::set<std::string> full(full_names.begin(), full_names.end());
    std::set<std::string> without(no_ae_names.begin(), no_ae_names.end());
    for (const std::string& n : without) CHECK(full.count(n) == 1);
    for (const std::string& n : full) {
        if (without.count(n) == 0) CHECK(n.substr(0, 3) == "ae.");
    }
    CHECK(full.size() > without.size());

    // no-mgfi-upper keeps the lower-section tensors only
    const std::vector<std::string> lower_names = param_names(no_upper);
    std::set<std::string> lower_only(lower_names.begin(), lower_names.end());
    CHECK(lower_only.count("mgfi.deform.weight") == 1);
    CHECK(lower_only.count("mgfi.overlap.weight") == 0);
}

TEST_CASE("variant names mirror the ablation rows") {
    ModelConfig cfg;
    CHECK(cfg.variant_name() == "mgfi-net");
    cfg.no_ae = true;
    CHECK(cfg.variant_name() == "no-ae");
    ModelConfig u;
    u.no_mgfi_upper = true;
    CHECK(u.variant_name() == "no-mgfi-upper");
}
