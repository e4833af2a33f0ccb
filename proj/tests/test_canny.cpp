#include <doctest.h>

#include "mgfi/loss.hpp"
#include "oracles.hpp"

using namespace mgfi;

TEST_CASE("canny: constant image yields no edges") {
    Tensor img = Tensor::full(Shape{1, 1, 16, 16}, 0.7f);
    BoundaryMask m = canny(img, CannyConfig{});
    for (std::int64_t i = 0; i < m.values.size(); ++i) {
        CHECK(m.values.data()[i] == 0.0f);
    }
}

TEST_CASE("canny output is always binary") {
    Rng rng(51);
    Tensor img = oracle::random_tensor(rng, Shape{2, 1, 16, 16}, 0.0, 1.0);
    BoundaryMask m = canny(img, CannyConfig{});
    for (std::int64_t i = 0; i < m.values.size(); ++i) {
        const float v = m.values.data()[i];
        CHECK((v == 0.0f || v == 1.0f));
    }
}

TEST_CASE("canny: vertical step gives one 1-px column within +-1 of the step") {
    const int h = 16, w = 16, step = 8;  // columns >= 8 are bright
    Tensor img = Tensor::zeros(Shape{1, 1, h, w});
    for (int y = 0; y < h; ++y) {
        for (int x = step; x < w; ++x) img.mutable_data()[y * w + x] = 1.0f;
    }
    BoundaryMask m = canny(img, CannyConfig{});
    for (int y = 0; y < h; ++y) {
        int count = 0;
        int where = -1;
        for (int x = 0; x < w; ++x) {
            if (m.values.data()[y * w + x] != 0.0f) {
                ++count;
                where = x;
            }
        }
        CHECK(count == 1);
        CHECK(std::abs(where - step) <= 1);
    }
}

TEST_CASE("canny: filled square produces a closed outline") {
    const int h = 16, w = 16;
    Tensor img = Tensor::zeros(Shape{1, 1, h, w});
    for (int y = 4; y < 12; ++y) {
        for (int x = 4; x < 12; ++x) img.mutable_data()[y * w + x] = 1.0f;
    }
    BoundaryMask m = canny(img, CannyConfig{});

    std::vector<std::uint8_t> blocked(static_cast<std::size_t>(h) * w, 0);
    int edge_pixels = 0;
    for (int i = 0; i < h * w; ++i) {
        blocked[i] = m.values.data()[i] != 0.0f ? 1 : 0;
        edge_pixels += blocked[i];
    }
    CHECK(edge_pixels > 0);
    // the outline must separate the interior from the border
    CHECK_FALSE(oracle::border_reaches(blocked, h, w, 7, 7));
    // edges hug the square: nothing farther than 2 px from its boundary
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!blocked[y * w + x]) continue;
            const bool near_boundary =
                (y >= 2 && y <= 13 && x >= 2 && x <= 13) &&
                !(y >= 6 && y <= 9 && x >= 6 && x <= 9);
            CHECK(near_boundary);
        }
    }
}

TEST_CASE("canny config validation and label scaling") {
    Tensor img = Tensor::full(Shape{1, 1, 16, 16}, 0.0f);
    CannyConfig bad;
    bad.low_fraction = 0.3f;
    bad.high_fraction = 0.2f;
    CHECK_THROWS(canny(img, bad));
    CHECK_THROWS(canny(Tensor::full(Shape{1, 3, 8, 8}, 0.0f), CannyConfig{}));

    // boundary_from_labels finds the blob outline of a {0,1} mask
    Tensor mask = Tensor::zeros(Shape{1, 1, 16, 16});
    for (int y = 5; y < 11; ++y) {
        for (int x = 5; x < 11; ++x) mask.mutable_data()[y * 16 + x] = 1.0f;
    }
    BoundaryMask b = boundary_from_labels(LabelMask{mask}, CannyConfig{});
    double total = 0.0;
    for (std::int64_t i = 0; i < b.values.size(); ++i) total += b.values.data()[i];
    CHECK(total > 0.0);
}
