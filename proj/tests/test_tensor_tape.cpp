#include <doctest.h>

#include "mgfi/gradcheck.hpp"
#include "mgfi/ops.hpp"
#include "mgfi/tape.hpp"
#include "oracles.hpp"

using namespace mgfi;

TEST_CASE("tensor shape and data invariants") {
    CHECK_THROWS(Tensor(Shape{0, 1, 1, 1}, {}));
    CHECK_THROWS(Tensor(Shape{1, 1, 2, 2}, {1.0f, 2.0f, 3.0f}));  // length mismatch
    Tensor t(Shape{1, 2, 2, 2}, {1, 2, 3, 4, 5, 6, 7, 8});
    CHECK(t.size() == 8);
    CHECK(t.at(0, 1, 1, 0) == 7.0f);
    CHECK(t.all_finite());
}

TEST_CASE("recording requires exclusivity") {
    Tape tape;
    CHECK_THROWS_WITH_AS(Tape(), "record already active", std::logic_error);
}

TEST_CASE("relu under a record produces a gradient for x") {
    Tensor x(Shape{1, 1, 1, 3}, {-1.0f, 0.5f, 2.0f});
    Tape tape;
    Tensor wx = tape.watch(x);
    Tensor loss = sum_all(relu(wx));
    GradientMap grads = tape.backward(loss);
    REQUIRE(grads.contains(wx));
    const Tensor& g = grads.at(wx);
    CHECK(g.data()[0] == 0.0f);
    CHECK(g.data()[1] == 1.0f);
    CHECK(g.data()[2] == 1.0f);
}

TEST_CASE("backward on a constant with an empty record gives an empty map") {
    Tape tape;
    Tensor c = Tensor::scalar_value(5.0f);
    GradientMap grads = tape.backward(c);
    CHECK(grads.empty());
}

TEST_CASE("d(x*x)/dx = 2x and d(sum x)/dx = 1") {
    Tensor x = Tensor::scalar_value(3.0f);
    {
        Tape tape;
        Tensor wx = tape.watch(x);
        Tensor loss = sum_all(mul(wx, wx));
        CHECK(loss.scalar() == doctest::Approx(9.0));
        GradientMap grads = tape.backward(loss);
        CHECK(grads.at(wx).data()[0] == doctest::Approx(6.0));
    }
    {
        Tensor v(Shape{1, 1, 2, 2}, {1, -2, 3, 4});
        Tape tape;
        Tensor wv = tape.watch(v);
        GradientMap grads = tape.backward(sum_all(wv));
        for (int i = 0; i < 4; ++i) CHECK(grads.at(wv).data()[i] == 1.0f);
    }
}

TEST_CASE("backward rejects non-scalar and foreign losses") {
    Tensor x(Shape{1, 1, 1, 2}, {1.0f, 2.0f});
    Tensor foreign_loss;
    {
        Tape tape;
        Tensor wx = tape.watch(x);
        foreign_loss = sum_all(wx);
        CHECK_THROWS(tape.backward(relu(wx)));  // shape (1,1,1,2)
    }
    Tape other;
    CHECK_THROWS(other.backward(foreign_loss));
}

TEST_CASE("gradient accumulation is additive over reuse") {
    Tensor x(Shape{1, 1, 1, 3}, {1.0f, 2.0f, 3.0f});
    Tape tape;
    Tensor wx = tape.watch(x);
    Tensor loss = add(sum_all(wx), sum_all(wx));
    GradientMap grads = tape.backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(grads.at(wx).data()[i] == 2.0f);
}

TEST_CASE("backward is deterministic byte for byte") {
    Rng rng(7);
    Tensor x = oracle::random_tensor(rng, Shape{1, 2, 5, 5}, -1.0, 1.0);
    Tensor w = oracle::random_tensor(rng, Shape{3, 2, 3, 3}, -0.5, 0.5);
    Tape tape;
    Tensor wx = tape.watch(x);
    Tensor ww = tape.watch(w);
    ConvParams p;
    p.weight = ww;
    p.padding = 1;
    Tensor loss = sum_all(relu(conv2d(wx, p)));
    GradientMap g1 = tape.backward(loss);
    GradientMap g2 = tape.backward(loss);
    CHECK(oracle::max_abs_diff(g1.at(wx), g2.at(wx)) == 0.0);
    CHECK(oracle::max_abs_diff(g1.at(ww), g2.at(ww)) == 0.0);
}

TEST_CASE("disconnected watched leaves get zero gradients") {
    Tensor x = Tensor::scalar_value(1.0f);
    Tensor y = Tensor::scalar_value(2.0f);
    Tape tape;
    Tensor wx = tape.watch(x);
    Tensor wy = tape.watch(y);
    GradientMap grads = tape.backward(sum_all(wx));
    CHECK(grads.at(wy).data()[0] == 0.0f);
    CHECK(grads.size() == 2);
}

TEST_CASE("grad_check: linear closure is exact to rounding") {
    Tensor x(Shape{1, 1, 2, 2}, {0.3f, -0.7f, 1.1f, 0.4f});
    const double err = grad_check(
        [](const std::vector<Tensor>& in) { return sum_all(scale(in[0], 2.0f)); },
        {x}, 1e-3);
    CHECK(err <= 1e-6);
}

TEST_CASE("grad_check: relu closure away from kinks") {
    Rng rng(3);
    Tensor x = Tensor::zeros(Shape{1, 2, 3, 3});
    for (std::int64_t i = 0; i < x.size(); ++i) {
        const double m = rng.uniform(0.3, 1.0);
        x.mutable_data()[i] = static_cast<float>(rng.coin() ? m : -m);
    }
    const double err = grad_check(
        [](const std::vector<Tensor>& in) { return sum_all(relu(in[0])); }, {x}, 1e-3);
    CHECK(err <= 1e-3);
}

TEST_CASE("grad_check rejects non-scalar closures") {
    Tensor x(Shape{1, 1, 1, 2}, {1.0f, 2.0f});
    CHECK_THROWS(grad_check(
        [](const std::vector<Tensor>& in) { return relu(in[0]); }, {x}, 1e-3));
}

TEST_CASE("grad_check: composed relu of conv matches finite differences") {
    Rng rng(11);
    Tensor x = oracle::random_tensor(rng, Shape{1, 2, 4, 4}, 0.2, 1.2);
    Tensor w = oracle::random_tensor(rng, Shape{2, 2, 3, 3}, 0.1, 0.5);
    const double err = grad_check(
        [](const std::vector<Tensor>& in) {
            ConvParams p;
            p.weight = in[1];
            p.padding = 1;
            return sum_all(relu(conv2d(in[0], p)));
        },
        {x, w}, 1e-3);
    CHECK(err <= 1e-3);
}
