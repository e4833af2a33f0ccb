#include <doctest.h>

#include "mgfi/ops.hpp"
#include "oracles.hpp"

using namespace mgfi;

TEST_CASE("conv2d: nine ones sum to nine") {
    Tensor x = Tensor::full(Shape{1, 1, 3, 3}, 1.0f);
    ConvParams p;
    p.weight = Tensor::full(Shape{1, 1, 3, 3}, 1.0f);
    Tensor y = conv2d(x, p);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.scalar() == doctest::Approx(9.0));
}

TEST_CASE("conv2d: dilation 2 samples nine ones across a 5x5 input") {
    Tensor x = Tensor::full(Shape{1, 1, 5, 5}, 1.0f);
    ConvParams p;
    p.weight = Tensor::full(Shape{1, 1, 3, 3}, 1.0f);
    p.dilation = 2;
    Tensor y = conv2d(x, p);
    CHECK(y.shape() == Shape{1, 1, 1, 1});
    CHECK(y.scalar() == doctest::Approx(9.0));
}

TEST_CASE("conv2d matches the naive loop oracle") {
    Rng rng(42);
    Tensor x = oracle::random_tensor(rng, Shape{2, 3, 8, 8}, -1.0, 1.0);
    Tensor w = oracle::random_tensor(rng, Shape{4, 3, 3, 3}, -0.5, 0.5);
    Tensor b = oracle::random_tensor(rng, Shape{1, 4, 1, 1}, -0.2, 0.2);
    for (int stride : {1, 2}) {
        for (int pad : {0, 1}) {
            ConvParams p;
            p.weight = w;
            p.bias = b;
            p.stride = stride;
            p.padding = pad;
            Tensor got = conv2d(x, p);
            Tensor want = oracle::conv2d_naive(x, w, b, stride, pad, 1);
            CHECK(got.shape() == want.shape());
            CHECK(oracle::max_abs_diff(got, want) <= 1e-5);
        }
    }
}

TEST_CASE("conv2d atrous matches the oracle with dilation") {
    Rng rng(43);
    Tensor x = oracle::random_tensor(rng, Shape{1, 2, 9, 9}, -1.0, 1.0);
    Tensor w = oracle::random_tensor(rng, Shape{2, 2, 3, 3}, -0.5, 0.5);
    ConvParams p;
    p.weight = w;
    p.padding = 2;
    p.dilation = 2;
    Tensor got = conv2d(x, p);
    Tensor want = oracle::conv2d_naive(x, w, Tensor{}, 1, 2, 2);
    CHECK(got.shape() == Shape{1, 2, 9, 9});  // pad = dilation preserves dims
    CHECK(oracle::max_abs_diff(got, want) <= 1e-5);
}

TEST_CASE("conv2d rejects bad geometry") {
    Tensor x = Tensor::full(Shape{1, 2, 4, 4}, 1.0f);
    ConvParams p;
    p.weight = Tensor::full(Shape{1, 3, 3, 3}, 1.0f);  // channel mismatch
    CHECK_THROWS(conv2d(x, p));
    ConvParams q;
    q.weight = Tensor::full(Shape{1, 2, 3, 3}, 1.0f);
    Tensor tiny = Tensor::full(Shape{1, 2, 2, 2}, 1.0f);
    CHECK_THROWS(conv2d(tiny, q));  // non-positive output
}

TEST_CASE("depthwise: identity kernels reproduce the input") {
    Rng rng(5);
    Tensor x = oracle::random_tensor(rng, Shape{1, 3, 5, 5}, -1.0, 1.0);
    Tensor w = Tensor::zeros(Shape{3, 1, 3, 3});
    for (int m = 0; m < 3; ++m) w.mutable_data()[m * 9 + 4] = 1.0f;  // center tap
    Tensor y = depthwise_conv2d(x, w, 1, 1);
    CHECK(oracle::max_abs_diff(x, y) == 0.0);
}

TEST_CASE("depthwise: zeroed channel stays zero regardless of the other") {
    Rng rng(6);
    Tensor x = Tensor::zeros(Shape{1, 2, 6, 6});
    for (int i = 0; i < 36; ++i) {
        x.mutable_data()[i] = static_cast<float>(rng.uniform(-1.0, 1.0));
    }
    // channel 1 stays all-zero
    Tensor w = oracle::random_tensor(rng, Shape{2, 1, 3, 3}, -1.0, 1.0);
    Tensor y = depthwise_conv2d(x, w, 1, 1);
    for (int i = 0; i < 36; ++i) CHECK(y.data()[36 + i] == 0.0f);
}

TEST_CASE("depthwise matches the per-channel oracle") {
    Rng rng(7);
    Tensor x = oracle::random_tensor(rng, Shape{1, 3, 6, 6}, -1.0, 1.0);
    Tensor w = oracle::random_tensor(rng, Shape{3, 1, 3, 3}, -0.5, 0.5);
    Tensor got = depthwise_conv2d(x, w, 1, 1);
    Tensor want = oracle::depthwise_naive(x, w, 1, 1);
    CHECK(oracle::max_abs_diff(got, want) <= 1e-6);
    CHECK_THROWS(depthwise_conv2d(x, oracle::random_tensor(rng, Shape{2, 1, 3, 3}, 0, 1), 1, 1));
}

TEST_CASE("pointwise: channel identity and channel sum") {
    Rng rng(8);
    Tensor x = oracle::random_tensor(rng, Shape{1, 3, 4, 4}, -1.0, 1.0);
    Tensor eye = Tensor::zeros(Shape{3, 3, 1, 1});
    for (int c = 0; c < 3; ++c) eye.mutable_data()[c * 3 + c] = 1.0f;
    CHECK(oracle::max_abs_diff(pointwise_conv(x, eye, Tensor{}), x) == 0.0);

    Tensor ones = Tensor::full(Shape{1, 3, 1, 1}, 1.0f);
    Tensor summed = pointwise_conv(x, ones, Tensor{});
    for (int y = 0; y < 4; ++y) {
        for (int xx = 0; xx < 4; ++xx) {
            float want = x.at(0, 0, y, xx) + x.at(0, 1, y, xx) + x.at(0, 2, y, xx);
            CHECK(summed.at(0, 0, y, xx) == doctest::Approx(want));
        }
    }
}

TEST_CASE("pointwise equals conv2d with k=1") {
    Rng rng(9);
    Tensor x = oracle::random_tensor(rng, Shape{2, 4, 5, 5}, -1.0, 1.0);
    Tensor w = oracle::random_tensor(rng, Shape{3, 4, 1, 1}, -0.5, 0.5);
    Tensor b = oracle::random_tensor(rng, Shape{1, 3, 1, 1}, -0.2, 0.2);
    ConvParams p;
    p.weight = w;
    p.bias = b;
    CHECK(oracle::max_abs_diff(pointwise_conv(x, w, b), conv2d(x, p)) == 0.0);
}

TEST_CASE("overlap_downsample halves spatial dims (ceil)") {
    Rng rng(10);
    Tensor w = oracle::random_tensor(rng, Shape{2, 2, 3, 3}, -0.5, 0.5);
    ConvParams p;
    p.weight = w;
    p.stride = 2;
    p.padding = 1;
    Tensor x64 = oracle::random_tensor(rng, Shape{1, 2, 64, 64}, 0.0, 1.0);
    CHECK(overlap_downsample(x64, p).shape() == Shape{1, 2, 32, 32});
    Tensor x65 = oracle::random_tensor(rng, Shape{1, 2, 65, 65}, 0.0, 1.0);
    CHECK(overlap_downsample(x65, p).shape() == Shape{1, 2, 33, 33});
    // equals plain conv2d with the same weights
    CHECK(oracle::max_abs_diff(overlap_downsample(x64, p), conv2d(x64, p)) == 0.0);
    Tensor undersized = Tensor::full(Shape{1, 2, 1, 4}, 1.0f);
    CHECK_THROWS(overlap_downsample(undersized, p));
}
