#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <vector>

namespace mgfi {

// Dense rank-4 shape (batch, channels, rows, cols).
struct Shape {
    int n = 0;
    int c = 0;
    int h = 0;
    int w = 0;

    std::int64_t count() const {
        return static_cast<std::int64_t>(n) * c * h * w;
    }
    bool operator==(const Shape& o) const {
        return n == o.n && c == o.c && h == o.h && w == o.w;
    }
    bool operator!=(const Shape& o) const { return !(*this == o); }
};

std::string to_string(const Shape& s);

namespace detail {
// Handle into a recording tape. tape == 0 means "constant" (not recorded).
struct NodeRef {
    std::uint64_t tape = 0;
    int index = -1;
};
}  // namespace detail

// Immutable rank-4 float32 tensor. Data is flat row-major (n, c, h, w) and
// shared; copies are cheap handles. Once a tensor has been handed to an op
// its payload must not be mutated.
class Tensor {
public:
    Tensor() = default;
    Tensor(int n, int c, int h, int w);          // zero-filled
    Tensor(const Shape& s, std::vector<float> values);

    static Tensor zeros(const Shape& s);
    static Tensor full(const Shape& s, float value);
    static Tensor scalar_value(float v);         // shape (1,1,1,1)

    bool defined() const { return data_ != nullptr; }
    const Shape& shape() const { return shape_; }
    std::int64_t size() const { return shape_.count(); }

    const float* data() const { return data_->data(); }
    float* mutable_data() { return data_->data(); }
    const std::vector<float>& values() const { return *data_; }

    float at(int n, int c, int y, int x) const;
    bool is_scalar() const { return defined() && shape_.count() == 1; }
    // Single-element value; throws on non-scalar tensors.
    float scalar() const;
    // Reduction ops attach their 64-bit accumulation result so numeric
    // consumers (finite differences, loss reports) are not limited by the
    // final float32 rounding. Falls back to the stored float.
    double scalar_f64() const;

    bool all_finite() const;

    const detail::NodeRef& node() const { return node_; }

private:
    friend class Tape;
    friend Tensor with_scalar_hint(Tensor t, double v);

    Shape shape_{};
    std::shared_ptr<std::vector<float>> data_;
    detail::NodeRef node_{};
    double scalar_hint_ = 0.0;
    bool has_scalar_hint_ = false;
};

// Internal helper for reduction ops.
Tensor with_scalar_hint(Tensor t, double v);

}  // namespace mgfi
