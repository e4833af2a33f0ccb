#include <doctest.h>

#include <cmath>

#include "mgfi/ops.hpp"
#include "oracles.hpp"

using namespace mgfi;

TEST_CASE("activations: fixed points") {
    Tensor x(Shape{1, 1, 1, 3}, {-1.0f, 0.0f, 2.0f});
    Tensor r = relu(x);
    CHECK(r.data()[0] == 0.0f);
    CHECK(r.data()[1] == 0.0f);
    CHECK(r.data()[2] == 2.0f);
    CHECK(sigmoid(Tensor::scalar_value(0.0f)).scalar() == doctest::Approx(0.5));
}

TEST_CASE("softmax over equal logits is uniform and always sums to one") {
    Tensor eq = Tensor::full(Shape{1, 2, 3, 3}, 0.7f);
    Tensor p = softmax_channels(eq);
    for (std::int64_t i = 0; i < p.size(); ++i) {
        CHECK(p.data()[i] == doctest::Approx(0.5));
    }
    Rng rng(31);
    Tensor x = oracle::random_tensor(rng, Shape{2, 5, 4, 4}, -3.0, 3.0);
    Tensor q = softmax_channels(x);
    for (int n = 0; n < 2; ++n) {
        for (int y = 0; y < 4; ++y) {
            for (int xx = 0; xx < 4; ++xx) {
                double s = 0.0;
                for (int c = 0; c < 5; ++c) s += q.at(n, c, y, xx);
                CHECK(s == doctest::Approx(1.0).epsilon(1e-6));
            }
        }
    }
}

TEST_CASE("batchnorm training normalizes per channel") {
    Rng rng(32);
    Tensor x = oracle::random_tensor(rng, Shape{4, 3, 8, 8}, -2.0, 5.0);
    BatchNormState s = make_batchnorm(3);
    Tensor y = batchnorm(x, s, /*training=*/true);
    const std::int64_t plane = 64;
    for (int c = 0; c < 3; ++c) {
        double mean = 0.0, var = 0.0;
        for (int n = 0; n < 4; ++n) {
            for (std::int64_t i = 0; i < plane; ++i) {
                mean += y.data()[(n * 3 + c) * plane + i];
            }
        }
        mean /= 4 * plane;
        for (int n = 0; n < 4; ++n) {
            for (std::int64_t i = 0; i < plane; ++i) {
                const double d = y.data()[(n * 3 + c) * plane + i] - mean;
                var += d * d;
            }
        }
        var /= 4 * plane;
        CHECK(std::fabs(mean) <= 1e-5);
        CHECK(std::fabs(var - 1.0) <= 1e-3);
    }
}

TEST_CASE("batchnorm: constant channel collapses to beta") {
    Tensor x = Tensor::full(Shape{2, 1, 3, 3}, 7.5f);
    BatchNormState s = make_batchnorm(1);
    s.beta = Tensor::full(Shape{1, 1, 1, 1}, 0.25f);
    Tensor y = batchnorm(x, s, true);
    for (std::int64_t i = 0; i < y.size(); ++i) {
        CHECK(y.data()[i] == doctest::Approx(0.25).epsilon(1e-6));
    }
}

TEST_CASE("batchnorm inference is the affine map of running stats") {
    Rng rng(33);
    Tensor x = oracle::random_tensor(rng, Shape{1, 2, 4, 4}, -1.0, 1.0);
    BatchNormState s = make_batchnorm(2, 0.1f, 1e-5f);
    s.gamma = Tensor::full(Shape{1, 2, 1, 1}, 2.0f);
    s.beta = Tensor::full(Shape{1, 2, 1, 1}, 1.0f);
    Tensor y = batchnorm(x, s, /*training=*/false);
    for (std::int64_t i = 0; i < x.size(); ++i) {
        CHECK(y.data()[i] == doctest::Approx(2.0f * x.data()[i] + 1.0f).epsilon(1e-4));
    }
}

TEST_CASE("batchnorm training rejects degenerate batches") {
    Tensor x = Tensor::full(Shape{1, 2, 1, 1}, 1.0f);
    BatchNormState s = make_batchnorm(2);
    CHECK_THROWS(batchnorm(x, s, true));
    CHECK_NOTHROW(batchnorm(x, s, false));
}

TEST_CASE("batchnorm running stats move with momentum") {
    Tensor x = Tensor::full(Shape{2, 1, 2, 2}, 10.0f);
    // tiny wiggle so variance is defined but small
    x.mutable_data()[0] = 10.1f;
    x.mutable_data()[7] = 9.9f;
    BatchNormState s = make_batchnorm(1, 0.5f);
    batchnorm(x, s, true);
    CHECK(s.running_mean.data()[0] == doctest::Approx(5.0).epsilon(1e-3));
    CHECK(s.running_var.data()[0] < 1.0f);
}

TEST_CASE("upsample_bilinear basics") {
    Tensor c = Tensor::full(Shape{1, 2, 3, 3}, 0.6f);
    Tensor up = upsample_bilinear(c, 2);
    CHECK(up.shape() == Shape{1, 2, 6, 6});
    for (std::int64_t i = 0; i < up.size(); ++i) {
        CHECK(up.data()[i] == doctest::Approx(0.6));
    }
    Tensor one(Shape{1, 1, 1, 1}, {3.5f});
    Tensor up2 = upsample_bilinear(one, 2);
    for (int i = 0; i < 4; ++i) CHECK(up2.data()[i] == 3.5f);
    CHECK_THROWS(upsample_bilinear(c, 1));
}

TEST_CASE("upsample_bilinear preserves a ramp's slope mid-image") {
    // coarse ramp f(x) = x; with align-corners false the interior output is
    // (ox + 0.5)/2 - 0.5, so adjacent outputs differ by exactly 0.5
    Tensor ramp = Tensor::zeros(Shape{1, 1, 4, 8});
    for (int y = 0; y < 4; ++y) {
        for (int x = 0; x < 8; ++x) {
            ramp.mutable_data()[y * 8 + x] = static_cast<float>(x);
        }
    }
    Tensor up = upsample_bilinear(ramp, 2);
    for (int y = 2; y < 6; ++y) {
        for (int x = 1; x < 15; ++x) {
            const float expected = (static_cast<float>(x) + 0.5f) / 2.0f - 0.5f;
            CHECK(std::fabs(up.at(0, 0, y, x) - expected) <= 1e-4);
        }
    }
}

TEST_CASE("concat_channels stacks and validates") {
    Rng rng(34);
    Tensor a = oracle::random_tensor(rng, Shape{1, 2, 4, 4}, 0.0, 1.0);
    Tensor b = oracle::random_tensor(rng, Shape{1, 3, 4, 4}, 0.0, 1.0);
    Tensor cat = concat_channels({a, b});
    CHECK(cat.shape() == Shape{1, 5, 4, 4});
    CHECK(oracle::max_abs_diff(slice_channels(cat, 0, 2), a) == 0.0);
    CHECK(oracle::max_abs_diff(slice_channels(cat, 2, 3), b) == 0.0);
    CHECK(oracle::max_abs_diff(concat_channels({a}), a) == 0.0);
    Tensor bad = Tensor::zeros(Shape{1, 2, 3, 4});
    CHECK_THROWS(concat_channels({a, bad}));
}

TEST_CASE("flatten_transpose: explicit index map and exact round trip") {
    Tensor x(Shape{1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    Tensor flat = flatten_transpose(x);
    CHECK(flat.shape() == Shape{1, 4, 2, 1});
    // element (n, y*w+x, c) = input (n, c, y, x)
    CHECK(flat.at(0, 0, 0, 0) == 1.0f);
    CHECK(flat.at(0, 0, 1, 0) == 5.0f);
    CHECK(flat.at(0, 3, 0, 0) == 4.0f);
    CHECK(flat.at(0, 3, 1, 0) == 8.0f);

    Rng rng(35);
    Tensor r = oracle::random_tensor(rng, Shape{2, 3, 4, 5}, -1.0, 1.0);
    CHECK(oracle::max_abs_diff(flatten_inverse(flatten_transpose(r), 4, 5), r) == 0.0);
    CHECK_THROWS(flatten_inverse(flatten_transpose(r), 3, 5));
}

TEST_CASE("adding in flat space equals adding in image space") {
    Rng rng(36);
    Tensor a = oracle::random_tensor(rng, Shape{1, 3, 4, 4}, -1.0, 1.0);
    Tensor b = oracle::random_tensor(rng, Shape{1, 3, 4, 4}, -1.0, 1.0);
    Tensor via_flat =
        flatten_inverse(add(flatten_transpose(a), flatten_transpose(b)), 4, 4);
    CHECK(oracle::max_abs_diff(via_flat, add(a, b)) == 0.0);
}
