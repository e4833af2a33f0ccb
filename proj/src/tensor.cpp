#include "mgfi/tensor.hpp"

#include <cmath>
#include <stdexcept>

namespace mgfi {

std::string to_string(const Shape& s) {
    return "(" + std::to_string(s.n) + "," + std::to_string(s.c) + "," +
           std::to_string(s.h) + "," + std::to_string(s.w) + ")";
}

static void check_shape(const Shape& s) {
    if (s.n < 1 || s.c < 1 || s.h < 1 || s.w < 1) {
        throw std::invalid_argument("tensor dimensions must all be >= 1, got " +
                                    to_string(s));
    }
}

Tensor::Tensor(int n, int c, int h, int w) : shape_{n, c, h, w} {
    check_shape(shape_);
    data_ = std::make_shared<std::vector<float>>(shape_.count(), 0.0f);
}

Tensor::Tensor(const Shape& s, std::vector<float> values) : shape_(s) {
    check_shape(shape_);
    if (static_cast<std::int64_t>(values.size()) != shape_.count()) {
        throw std::invalid_argument(
            "tensor data length " + std::to_string(values.size()) +
            " does not match shape " + to_string(shape_));
    }
    data_ = std::make_shared<std::vector<float>>(std::move(values));
}

Tensor Tensor::zeros(const Shape& s) { return Tensor(s.n, s.c, s.h, s.w); }

Tensor Tensor::full(const Shape& s, float value) {
    Tensor t(s.n, s.c, s.h, s.w);
    std::fill(t.data_->begin(), t.data_->end(), value);
    return t;
}

Tensor Tensor::scalar_value(float v) {
    return Tensor(Shape{1, 1, 1, 1}, std::vector<float>{v});
}

float Tensor::at(int n, int c, int y, int x) const {
    const std::int64_t idx =
        ((static_cast<std::int64_t>(n) * shape_.c + c) * shape_.h + y) * shape_.w + x;
    return (*data_)[static_cast<std::size_t>(idx)];
}

float Tensor::scalar() const {
    if (!is_scalar()) {
        throw std::invalid_argument("scalar() on tensor of shape " +
                                    to_string(shape_));
    }
    return (*data_)[0];
}

double Tensor::scalar_f64() const {
    if (has_scalar_hint_) return scalar_hint_;
    return static_cast<double>(scalar());
}

bool Tensor::all_finite() const {
    if (!defined()) return true;
    for (float v : *data_) {
        if (!std::isfinite(v)) return false;
    }
    return true;
}

Tensor with_scalar_hint(Tensor t, double v) {
    t.scalar_hint_ = v;
    t.has_scalar_hint_ = true;
    return t;
}

}  // namespace mgfi
