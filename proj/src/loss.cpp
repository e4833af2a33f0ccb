#include <cmath>
#include <stdexcept>

#include "mgfi/loss.hpp"
#include "mgfi/ops.hpp"
#include "mgfi/tape.hpp"

namespace mgfi {

namespace {
constexpr float kProbFloor = 1e-7f;
constexpr double kSmooth = 1e-6;
}  // namespace

LabelMask make_label_mask(Tensor t, int class_count) {
    const Shape& s = t.shape();
    if (s.c != 1) {
        throw std::invalid_argument("label mask must have a single channel, got " +
                                    to_string(s));
    }
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const float v = t.data()[i];
        if (v != std::floor(v) || v < 0.0f || v >= static_cast<float>(class_count)) {
            throw std::invalid_argument("label mask value " + std::to_string(v) +
                                        " outside [0, " + std::to_string(class_count) + ")");
        }
    }
    return LabelMask{std::move(t)};
}

static void require_label_shapes(const Shape& ps, const Shape& ls, const char* op) {
    if (ls.c != 1 || ps.n != ls.n || ps.h != ls.h || ps.w != ls.w) {
        throw std::invalid_argument(std::string(op) + ": probs " + to_string(ps) +
                                    " incompatible with labels " + to_string(ls));
    }
}

Tensor cross_entropy(const Tensor& probs, const LabelMask& labels) {
    const Shape ps = probs.shape();
    const Shape ls = labels.values.shape();
    require_label_shapes(ps, ls, "cross_entropy");
    const int C = ps.c;
    const std::int64_t plane = static_cast<std::int64_t>(ps.h) * ps.w;
    const std::int64_t pixels = static_cast<std::int64_t>(ps.n) * plane;

    double acc = 0.0;
    const float* pv = probs.data();
    const float* lv = labels.values.data();
    for (int n = 0; n < ps.n; ++n) {
        for (std::int64_t p = 0; p < plane; ++p) {
            const float raw = lv[n * plane + p];
            const int cls = static_cast<int>(raw);
            if (raw != std::floor(raw) || cls < 0 || cls >= C) {
                throw std::invalid_argument("cross_entropy: label id " +
                                            std::to_string(raw) + " outside [0, " +
                                            std::to_string(C) + ")");
            }
            const float o = pv[(static_cast<std::int64_t>(n) * C + cls) * plane + p];
            if (KinkAudit* audit = kink_audit()) {
                if (o < audit->min_true_prob) audit->min_true_prob = o;
            }
            acc += std::log(static_cast<double>(std::max(o, kProbFloor)));
        }
    }
    const double value = -acc / static_cast<double>(pixels);
    Tensor y = with_scalar_hint(Tensor::scalar_value(static_cast<float>(value)), value);

    if (Tape* t = Tape::active(); t && t->tracks(probs)) {
        Tensor cl = labels.values;
        Tensor cp = probs;
        t->attach(y, {&probs}, [cp, cl, ps, plane, pixels](const GradSink& g) {
            float* dp = g.grad(0);
            if (!dp) return;
            const float up = g.upstream()[0];
            const float* pv2 = cp.data();
            const float* lv2 = cl.data();
            const float inv_n = 1.0f / static_cast<float>(pixels);
            for (int n = 0; n < ps.n; ++n) {
                for (std::int64_t p = 0; p < plane; ++p) {
                    const int cls = static_cast<int>(lv2[n * plane + p]);
                    const std::int64_t idx =
                        (static_cast<std::int64_t>(n) * ps.c + cls) * plane + p;
                    const float o = pv2[idx];
                    if (o > kProbFloor) {
                        dp[idx] += up * (-inv_n / o);
                    }
                }
            }
        });
    }
    return y;
}

namespace {

// Shared Dice-style overlap: loss_c = 1 - 2*A_c/B_c with A = sum(g*o),
// B = sum(g) + sum(o) + smooth, averaged over the given class list.
struct DiceTerms {
    std::vector<double> a, b;  // per listed class
};

}  // namespace

Tensor dice_loss(const Tensor& probs, const LabelMask& labels) {
    const Shape ps = probs.shape();
    const Shape ls = labels.values.shape();
    require_label_shapes(ps, ls, "dice_loss");
    const int C = ps.c;
    if (C < 2) {
        throw std::invalid_argument("dice_loss: needs at least 2 classes");
    }
    const std::int64_t plane = static_cast<std::int64_t>(ps.h) * ps.w;
    const int n_fg = C - 1;

    DiceTerms terms;
    terms.a.assign(n_fg, 0.0);
    terms.b.assign(n_fg, 0.0);
    const float* pv = probs.data();
    const float* lv = labels.values.data();
    for (int cls = 1; cls < C; ++cls) {
        double a = 0.0, gsum = 0.0, osum = 0.0;
        for (int n = 0; n < ps.n; ++n) {
            const float* lp = lv + static_cast<std::int64_t>(n) * plane;
            const float* op = pv + (static_cast<std::int64_t>(n) * C + cls) * plane;
            for (std::int64_t p = 0; p < plane; ++p) {
                const double o = op[p];
                osum += o;
                if (lp[p] == static_cast<float>(cls)) {
                    a += o;
                    gsum += 1.0;
                }
            }
        }
        terms.a[cls - 1] = a;
        terms.b[cls - 1] = gsum + osum + kSmooth;
    }
    double value = 0.0;
    for (int i = 0; i < n_fg; ++i) value += 1.0 - 2.0 * terms.a[i] / terms.b[i];
    value /= static_cast<double>(n_fg);
    Tensor y = with_scalar_hint(Tensor::scalar_value(static_cast<float>(value)), value);

    if (Tape* t = Tape::active(); t && t->tracks(probs)) {
        Tensor cl = labels.values;
        t->attach(y, {&probs}, [cl, terms, ps, plane, n_fg](const GradSink& g) {
            float* dp = g.grad(0);
            if (!dp) return;
            const float up = g.upstream()[0];
            const float* lv2 = cl.data();
            for (int cls = 1; cls < ps.c; ++cls) {
                const double a = terms.a[cls - 1];
                const double b = terms.b[cls - 1];
                // d(1 - 2A/B)/do_i = -2*(g_i*B - A)/B^2
                const float k_fg = static_cast<float>(-2.0 * (b - a) / (b * b) /
                                                      static_cast<double>(n_fg));
                const float k_bg =
                    static_cast<float>(2.0 * a / (b * b) / static_cast<double>(n_fg));
                for (int n = 0; n < ps.n; ++n) {
                    const float* lp = lv2 + static_cast<std::int64_t>(n) * plane;
                    float* d = dp + (static_cast<std::int64_t>(n) * ps.c + cls) * plane;
                    for (std::int64_t p = 0; p < plane; ++p) {
                        d[p] += up * (lp[p] == static_cast<float>(cls) ? k_fg : k_bg);
                    }
                }
            }
        });
    }
    return y;
}

Tensor boundary_loss(const Tensor& edge_pred, const BoundaryMask& gt) {
    const Shape es = edge_pred.shape();
    const Shape gs = gt.values.shape();
    if (es != gs || es.c != 1) {
        throw std::invalid_argument("boundary_loss: edge map " + to_string(es) +
                                    " incompatible with boundary " + to_string(gs));
    }
    const std::int64_t n = edge_pred.size();
    const float* ev = edge_pred.data();
    const float* gv = gt.values.data();
    double a = 0.0, gsum = 0.0, osum = 0.0;
    for (std::int64_t i = 0; i < n; ++i) {
        osum += ev[i];
        if (gv[i] != 0.0f) {
            a += ev[i];
            gsum += 1.0;
        }
    }
    const double b = gsum + osum + kSmooth;
    const double value = 1.0 - 2.0 * a / b;
    Tensor y = with_scalar_hint(Tensor::scalar_value(static_cast<float>(value)), value);

    if (Tape* t = Tape::active(); t && t->tracks(edge_pred)) {
        Tensor cg = gt.values;
        t->attach(y, {&edge_pred}, [cg, a, b, n](const GradSink& g) {
            float* de = g.grad(0);
            if (!de) return;
            const float up = g.upstream()[0];
            const float k_fg = static_cast<float>(-2.0 * (b - a) / (b * b));
            const float k_bg = static_cast<float>(2.0 * a / (b * b));
            const float* gv2 = cg.data();
            for (std::int64_t i = 0; i < n; ++i) {
                de[i] += up * (gv2[i] != 0.0f ? k_fg : k_bg);
            }
        });
    }
    return y;
}

LossBreakdown hybrid_loss(const Tensor& probs, const Tensor& edge_pred,
                          const LabelMask& labels, const BoundaryMask& gt_boundary,
                          float lambda) {
    LossBreakdown out;
    Tensor ce = cross_entropy(probs, labels);
    Tensor dc = dice_loss(probs, labels);
    out.ce = ce.scalar_f64();
    out.dice = dc.scalar_f64();
    Tensor total = add(ce, dc);
    if (edge_pred.defined()) {
        Tensor bd = boundary_loss(edge_pred, gt_boundary);
        out.boundary = bd.scalar_f64();
        total = add(total, scale(bd, lambda));
    }
    out.total = total;
    out.total_value = out.ce + out.dice + static_cast<double>(lambda) * out.boundary;
    return out;
}

}  // namespace mgfi
