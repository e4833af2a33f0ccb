#include <doctest.h>

#include <cmath>

#include "mgfi/loss.hpp"
#include "mgfi/ops.hpp"
#include "oracles.hpp"

using namespace mgfi;

namespace {

LabelMask random_labels(Rng& rng, int n, int h, int w, int classes) {
    Tensor t = Tensor::zeros(Shape{n, 1, h, w});
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t.mutable_data()[i] = static_cast<float>(rng.uniform_int(0, classes - 1));
    }
    return LabelMask{t};
}

Tensor one_hot_probs(const LabelMask& labels, int classes) {
    const Shape s = labels.values.shape();
    Tensor p = Tensor::zeros(Shape{s.n, classes, s.h, s.w});
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        for (std::int64_t i = 0; i < plane; ++i) {
            const int cls = static_cast<int>(labels.values.data()[n * plane + i]);
            p.mutable_data()[(static_cast<std::int64_t>(n) * classes + cls) * plane + i] =
                1.0f;
        }
    }
    return p;
}

}  // namespace

TEST_CASE("cross_entropy: uniform binary probs give ln 2") {
    Rng rng(41);
    LabelMask labels = random_labels(rng, 1, 4, 4, 2);
    Tensor probs = Tensor::full(Shape{1, 2, 4, 4}, 0.5f);
    CHECK(cross_entropy(probs, labels).scalar_f64() ==
          doctest::Approx(0.6931471805599453).epsilon(1e-6));
}

TEST_CASE("cross_entropy: perfect one-hot prediction is ~0") {
    Rng rng(42);
    LabelMask labels = random_labels(rng, 1, 4, 4, 3);
    Tensor probs = one_hot_probs(labels, 3);
    CHECK(cross_entropy(probs, labels).scalar_f64() <= 1e-6);
}

TEST_CASE("cross_entropy matches a 64-bit hand computation on a 2x2 case") {
    // pixels: labels {0,1,1,0}; probs for class1: {0.2, 0.7, 0.9, 0.4}
    Tensor labels(Shape{1, 1, 2, 2}, {0.0f, 1.0f, 1.0f, 0.0f});
    Tensor probs = Tensor::zeros(Shape{1, 2, 2, 2});
    const float p1[4] = {0.2f, 0.7f, 0.9f, 0.4f};
    for (int i = 0; i < 4; ++i) {
        probs.mutable_data()[i] = 1.0f - p1[i];
        probs.mutable_data()[4 + i] = p1[i];
    }
    const double want =
        -(std::log(0.8) + std::log(0.7) + std::log(0.9) + std::log(0.6)) / 4.0;
    CHECK(cross_entropy(probs, LabelMask{labels}).scalar_f64() ==
          doctest::Approx(want).epsilon(1e-6));
    // label out of range rejected
    Tensor bad(Shape{1, 1, 2, 2}, {0.0f, 1.0f, 2.0f, 0.0f});
    CHECK_THROWS(cross_entropy(probs, LabelMask{bad}));
}

TEST_CASE("dice_loss: perfect overlap ~0, disjoint ~1, half overlap 0.5") {
    Rng rng(43);
    LabelMask labels = random_labels(rng, 1, 4, 4, 2);
    CHECK(dice_loss(one_hot_probs(labels, 2), labels).scalar_f64() <= 1e-5);

    // disjoint: prediction is the complement
    Tensor flipped = Tensor::zeros(Shape{1, 1, 4, 4});
    for (int i = 0; i < 16; ++i) {
        flipped.mutable_data()[i] = 1.0f - labels.values.data()[i];
    }
    CHECK(dice_loss(one_hot_probs(LabelMask{flipped}, 2), labels).scalar_f64() >=
          1.0 - 1e-5);

    // |G| = |P| = 4, |G and P| = 2 in a 4x4 image
    Tensor g = Tensor::zeros(Shape{1, 1, 4, 4});
    Tensor p = Tensor::zeros(Shape{1, 1, 4, 4});
    for (int i = 0; i < 4; ++i) g.mutable_data()[i] = 1.0f;       // pixels 0..3
    for (int i = 2; i < 6; ++i) p.mutable_data()[i] = 1.0f;       // pixels 2..5
    const double loss =
        dice_loss(one_hot_probs(LabelMask{p}, 2), LabelMask{g}).scalar_f64();
    CHECK(loss == doctest::Approx(0.5).epsilon(1e-5));
}

TEST_CASE("boundary_loss: agreement, total miss, constant half") {
    Rng rng(44);
    Tensor gt = Tensor::zeros(Shape{1, 1, 6, 6});
    int b_count = 0;
    for (int i = 0; i < 36; ++i) {
        if (rng.uniform() < 0.25) {
            gt.mutable_data()[i] = 1.0f;
            ++b_count;
        }
    }
    if (b_count == 0) {
        gt.mutable_data()[7] = 1.0f;
        b_count = 1;
    }
    BoundaryMask bm{gt};
    CHECK(boundary_loss(gt, bm).scalar_f64() <= 1e-5);
    CHECK(boundary_loss(Tensor::zeros(Shape{1, 1, 6, 6}), bm).scalar_f64() >=
          1.0 - 1e-5);

    Tensor half = Tensor::full(Shape{1, 1, 6, 6}, 0.5f);
    const double want = 1.0 - static_cast<double>(b_count) /
                                  (static_cast<double>(b_count) + 0.5 * 36.0 + 1e-6);
    CHECK(boundary_loss(half, bm).scalar_f64() == doctest::Approx(want).epsilon(1e-6));
    CHECK_THROWS(boundary_loss(Tensor::zeros(Shape{1, 1, 5, 6}), bm));
}

TEST_CASE("hybrid_loss decomposes exactly") {
    Rng rng(45);
    for (int trial = 0; trial < 10; ++trial) {
        LabelMask labels = random_labels(rng, 2, 4, 4, 2);
        Tensor logits = oracle::random_tensor(rng, Shape{2, 2, 4, 4}, -2.0, 2.0);
        Tensor probs = softmax_channels(logits);
        Tensor edge = oracle::random_tensor(rng, Shape{2, 1, 4, 4}, 0.05, 0.95);
        BoundaryMask gt{Tensor::zeros(Shape{2, 1, 4, 4})};
        for (int i = 0; i < 32; ++i) {
            gt.values.mutable_data()[i] = rng.uniform() < 0.2 ? 1.0f : 0.0f;
        }
        const float lambda = static_cast<float>(rng.uniform(0.0, 2.0));
        LossBreakdown l = hybrid_loss(probs, edge, labels, gt, lambda);
        CHECK(std::fabs(l.total_value -
                        (l.ce + l.dice + static_cast<double>(lambda) * l.boundary)) <=
              1e-12);
    }
}

TEST_CASE("hybrid_loss with lambda 0 is region-only, perfect inputs near zero") {
    Rng rng(46);
    LabelMask labels = random_labels(rng, 1, 4, 4, 2);
    Tensor probs = one_hot_probs(labels, 2);
    Tensor edge = labels.values;  // [0,1] already
    BoundaryMask gt{labels.values};
    LossBreakdown at0 = hybrid_loss(probs, edge, labels, gt, 0.0f);
    CHECK(std::fabs(at0.total_value - (at0.ce + at0.dice)) <= 1e-12);
    LossBreakdown perfect = hybrid_loss(probs, edge, labels, gt, 1.0f);
    CHECK(perfect.total_value <= 3e-5);
}

TEST_CASE("hybrid_loss without an edge head drops the boundary term") {
    Rng rng(47);
    LabelMask labels = random_labels(rng, 1, 4, 4, 2);
    Tensor probs = softmax_channels(oracle::random_tensor(rng, Shape{1, 2, 4, 4}, -1, 1));
    LossBreakdown l = hybrid_loss(probs, Tensor{}, labels, BoundaryMask{}, 1.0f);
    CHECK(l.boundary == 0.0);
    CHECK(std::fabs(l.total_value - (l.ce + l.dice)) <= 1e-12);
}
