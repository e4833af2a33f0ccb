#pragma once

#include "mgfi/tensor.hpp"

namespace mgfi {

// Integer class ids in [0, class_count) stored exactly in a float tensor of
// shape (n, 1, h, w).
struct LabelMask {
    Tensor values;
};

// Binary {0,1} ground-truth boundary map, shape (n, 1, h, w).
struct BoundaryMask {
    Tensor values;
};

LabelMask make_label_mask(Tensor t, int class_count);

// Edge-extraction parameters. Thresholds are fractions of the maximum
// gradient magnitude of each image.
struct CannyConfig {
    float sigma = 1.0f;       // 5x5 Gaussian
    float low_fraction = 0.1f;
    float high_fraction = 0.2f;
};

// Classic pipeline: Gaussian smoothing, Sobel gradients, 4-direction
// non-maximum suppression, double-threshold hysteresis (weak pixels survive
// only when 8-connected to a strong pixel). Deterministic; not recorded on
// the tape.
BoundaryMask canny(const Tensor& img, const CannyConfig& cfg);

// Boundary ground truth for a label mask: the mask rescaled to {0,255}
// grayscale and run through canny.
BoundaryMask boundary_from_labels(const LabelMask& labels, const CannyConfig& cfg);

// Scalar loss terms. Each returns a differentiable (1,1,1,1) tensor whose
// 64-bit accumulation value is retrievable via Tensor::scalar_f64().

// -(1/N) sum over pixels and classes of g*log(o), N = pixel count; probs are
// clamped at 1e-7 before the log.
Tensor cross_entropy(const Tensor& probs, const LabelMask& labels);

// 1 - 2*sum(g*o) / (sum(g) + sum(o) + 1e-6), averaged over foreground
// classes (ids 1..C-1).
Tensor dice_loss(const Tensor& probs, const LabelMask& labels);

// Dice-style overlap between the predicted edge map and the ground-truth
// boundary (single class-agnostic map).
Tensor boundary_loss(const Tensor& edge_pred, const BoundaryMask& gt);

struct LossBreakdown {
    Tensor total;   // differentiable
    double total_value = 0.0;
    double ce = 0.0;
    double dice = 0.0;
    double boundary = 0.0;
};

// total = ce + dice + lambda * boundary. Pass an undefined edge_pred to drop
// the boundary term (it reports as 0).
LossBreakdown hybrid_loss(const Tensor& probs, const Tensor& edge_pred,
                          const LabelMask& labels, const BoundaryMask& gt_boundary,
                          float lambda);

}  // namespace mgfi
