#include <doctest.h>

#include <cmath>

#include "mgfi/metrics.hpp"
#include "oracles.hpp"

using namespace mgfi;

namespace {

LabelMask random_mask(Rng& rng, int h, int w, double p_one) {
    Tensor t = Tensor::zeros(Shape{1, 1, h, w});
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t.mutable_data()[i] = rng.uniform() < p_one ? 1.0f : 0.0f;
    }
    return LabelMask{t};
}

}  // namespace

TEST_CASE("confusion: identity and complement") {
    Rng rng(61);
    LabelMask gt = random_mask(rng, 8, 8, 0.3);
    ConfusionCounts same = confusion(gt, gt, 1);
    CHECK(same.fp == 0);
    CHECK(same.fn == 0);
    CHECK(same.total() == 64);

    Tensor flipped = Tensor::zeros(Shape{1, 1, 8, 8});
    for (int i = 0; i < 64; ++i) {
        flipped.mutable_data()[i] = 1.0f - gt.values.data()[i];
    }
    ConfusionCounts comp = confusion(LabelMask{flipped}, gt, 1);
    CHECK(comp.tp == 0);
    CHECK(comp.tn == 0);
}

TEST_CASE("confusion equals the brute-force tally") {
    Rng rng(62);
    for (int trial = 0; trial < 20; ++trial) {
        LabelMask a = random_mask(rng, 16, 16, rng.uniform(0.1, 0.9));
        LabelMask b = random_mask(rng, 16, 16, rng.uniform(0.1, 0.9));
        const ConfusionCounts got = confusion(a, b, 1);
        const ConfusionCounts want = oracle::tally(a, b, 1);
        CHECK(got.tp == want.tp);
        CHECK(got.fp == want.fp);
        CHECK(got.fn == want.fn);
        CHECK(got.tn == want.tn);
    }
}

TEST_CASE("report: perfect match, worked example, absent-class convention") {
    ConfusionCounts perfect{10, 0, 0, 54};
    MetricReport p = report(perfect);
    CHECK(p.accuracy == 1.0);
    CHECK(p.dice == 1.0);
    CHECK(p.iou == 1.0);
    CHECK(p.recall == 1.0);
    CHECK(p.precision == 1.0);

    ConfusionCounts c{2, 2, 2, 250};
    MetricReport r = report(c);
    CHECK(r.dice == doctest::Approx(0.5));
    CHECK(r.iou == doctest::Approx(1.0 / 3.0));
    CHECK(r.precision == doctest::Approx(0.5));
    CHECK(r.recall == doctest::Approx(0.5));

    ConfusionCounts absent{0, 0, 0, 64};
    MetricReport a = report(absent);
    CHECK(a.dice == 1.0);
    CHECK(a.iou == 1.0);
    CHECK(a.precision == 1.0);
    CHECK(a.recall == 1.0);

    // class present in gt only: 0/0 precision resolves to 0
    ConfusionCounts missed{0, 0, 5, 59};
    MetricReport m = report(missed);
    CHECK(m.precision == 0.0);
    CHECK(m.recall == 0.0);
    CHECK(m.dice == 0.0);
}

TEST_CASE("dice/iou/harmonic-mean identities on random masks") {
    Rng rng(63);
    for (int trial = 0; trial < 100; ++trial) {
        LabelMask a = random_mask(rng, 16, 16, rng.uniform(0.05, 0.95));
        LabelMask b = random_mask(rng, 16, 16, rng.uniform(0.05, 0.95));
        const MetricReport r = report(oracle::tally(a, b, 1));
        if (r.iou > 0.0) {
            CHECK(std::fabs(r.dice - 2.0 * r.iou / (1.0 + r.iou)) <= 1e-12);
        }
        CHECK(r.iou <= r.dice + 1e-12);
        if (r.precision > 0.0 && r.recall > 0.0) {
            const double hm = 2.0 * r.precision * r.recall / (r.precision + r.recall);
            CHECK(std::fabs(r.dice - hm) <= 1e-12);
        }
        for (double v : {r.accuracy, r.dice, r.iou, r.recall, r.precision}) {
            CHECK(v >= 0.0);
            CHECK(v <= 1.0);
        }
    }
}

TEST_CASE("metrics CSV matches the table column order at 4 decimals") {
    MetricReport r;
    r.accuracy = 0.98765;
    r.dice = 0.5;
    r.iou = 1.0 / 3.0;
    r.recall = 0.25;
    r.precision = 0.125;
    const std::string csv = metrics_csv({{"mgfi-net", r}});
    CHECK(csv ==
          "method,accuracy,dice,iou,recall,precision\n"
          "mgfi-net,0.9877,0.5000,0.3333,0.2500,0.1250\n");
}
