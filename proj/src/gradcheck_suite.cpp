#include "mgfi/gradcheck_suite.hpp"

#include <cmath>
#include <optional>
#include <stdexcept>

#include "mgfi/ae_module.hpp"
#include "mgfi/gradcheck.hpp"
#include "mgfi/loss.hpp"
#include "mgfi/mgfi_module.hpp"
#include "mgfi/network.hpp"
#include "mgfi/ops.hpp"
#include "mgfi/rng.hpp"
#include "mgfi/tape.hpp"

// Finite differences on float32 forwards can only certify gradients that sit
// well above the rounding noise floor (~1e-5 absolute for these graphs).
// Every check therefore conditions its data so the watched tensors have
// gradients bounded away from zero: positive weight/projection pairs for the
// linear kernels, ramp images for sampling-coordinate gradients, shifted
// batchnorm betas to keep relu inputs off the kink, and fractional offset
// biases to keep sampling positions off the bilinear grid. Where a bound is
// distributional rather than structural the runner searches seeds
// deterministically, rejecting any whose analytic gradients dip below a
// floor; tensors whose true gradients cross zero by construction (anything
// feeding a batchnorm, whose centering makes per-channel shifts
// unidentifiable) are certified through the op-level checks instead.

namespace mgfi {

namespace {

Tensor rand_uniform(Rng& rng, const Shape& s, double lo, double hi) {
    Tensor t = Tensor::zeros(s);
    float* d = t.mutable_data();
    for (std::int64_t i = 0; i < t.size(); ++i) {
        d[i] = static_cast<float>(rng.uniform(lo, hi));
    }
    return t;
}

// magnitudes in [lo, hi] with random signs
Tensor rand_signed(Rng& rng, const Shape& s, double lo, double hi) {
    Tensor t = Tensor::zeros(s);
    float* d = t.mutable_data();
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const double m = rng.uniform(lo, hi);
        d[i] = static_cast<float>(rng.coin() ? m : -m);
    }
    return t;
}

// fractional parts bounded away from the bilinear grid
Tensor rand_offsets(Rng& rng, const Shape& s) {
    Tensor t = Tensor::zeros(s);
    float* d = t.mutable_data();
    for (std::int64_t i = 0; i < t.size(); ++i) {
        const double m = rng.uniform(0.3, 0.7);
        d[i] = static_cast<float>(rng.coin() ? m : -m);
    }
    return t;
}

// monotone ramp plus jitter: strictly positive values with positive
// neighbour differences, so sampling-coordinate gradients stay positive
Tensor ramp_image(Rng& rng, const Shape& s) {
    Tensor t = Tensor::zeros(s);
    float* d = t.mutable_data();
    std::int64_t idx = 0;
    for (int n = 0; n < s.n; ++n) {
        for (int c = 0; c < s.c; ++c) {
            for (int y = 0; y < s.h; ++y) {
                for (int x = 0; x < s.w; ++x) {
                    d[idx++] = static_cast<float>(0.3 + 0.5 * x + 0.3 * y +
                                                  rng.uniform(0.0, 0.1));
                }
            }
        }
    }
    return t;
}

Tensor weighted(const Tensor& y, const Tensor& r) { return sum_all(mul(y, r)); }

// Runs grad_check only when every analytic gradient clears the floor;
// nullopt tells the seed search to move on.
std::optional<double> floored_check(const ScalarClosure& op,
                                    const std::vector<Tensor>& inputs, double eps,
                                    double grad_floor) {
    {
        Tape tape;
        std::vector<Tensor> watched;
        for (const Tensor& t : inputs) watched.push_back(tape.watch(t));
        GradientMap grads = tape.backward(op(watched));
        for (const Tensor& w : watched) {
            const Tensor& g = grads.at(w);
            for (std::int64_t i = 0; i < g.size(); ++i) {
                const double a = std::fabs(static_cast<double>(g.data()[i]));
                if (a != 0.0 && a < grad_floor) return std::nullopt;
            }
        }
    }
    return grad_check(op, inputs, eps);
}

using ShapeCheck = std::function<std::optional<double>(std::uint64_t seed)>;

// Deterministic seed scan: the first seed whose preconditions hold decides.
double run_seed_search(const ShapeCheck& check, std::uint64_t start) {
    for (std::uint64_t seed = start; seed < start + 96; ++seed) {
        if (std::optional<double> r = check(seed)) return *r;
    }
    throw std::runtime_error("gradcheck: no admissible seed in 96 tries");
}

GradCheckOutcome run_shapes(const std::vector<std::function<double()>>& shapes) {
    GradCheckOutcome out;
    out.shapes = static_cast<int>(shapes.size());
    for (const auto& s : shapes) {
        out.max_rel_error = std::max(out.max_rel_error, s());
    }
    return out;
}

// ---- elementwise / activation cases -----------------------------------------

double check_add(std::uint64_t seed, const Shape& s) {
    Rng rng(seed);
    Tensor a = rand_signed(rng, s, 0.1, 1.0);
    Tensor b = rand_signed(rng, s, 0.1, 1.0);
    Tensor r = rand_uniform(rng, s, 0.5, 1.5);
    return grad_check(
        [r](const std::vector<Tensor>& in) { return weighted(add(in[0], in[1]), r); },
        {a, b}, 1e-2);
}

double check_mul(std::uint64_t seed, const Shape& s) {
    Rng rng(seed);
    // one side positive so the other side's gradient (r * partner) is bounded
    Tensor a = rand_uniform(rng, s, 0.2, 1.2);
    Tensor b = rand_uniform(rng, s, 0.2, 1.2);
    Tensor r = rand_uniform(rng, s, 0.5, 1.5);
    return grad_check(
        [r](const std::vector<Tensor>& in) { return weighted(mul(in[0], in[1]), r); },
        {a, b}, 1e-2);
}

double check_relu(std::uint64_t seed, const Shape& s) {
    Rng rng(seed);
    Tensor x = rand_signed(rng, s, 0.25, 1.25);  // kink margin >> eps
    Tensor r = rand_uniform(rng, s, 0.5, 1.5);
    return grad_check(
        [r](const std::vector<Tensor>& in) { return weighted(relu(in[0]), r); }, {x},
        1e-2);
}

double check_sigmoid(std::uint64_t seed, const Shape& s) {
    Rng rng(seed);
    Tensor x = rand_signed(rng, s, 0.0, 2.0);  // sig'(x) >= 0.1 on [-2, 2]
    Tensor r = rand_uniform(rng, s, 0.5, 1.5);
    return grad_check(
        [r](const std::vector<Tensor>& in) { return weighted(sigmoid(in[0]), r); }, {x},
        5e-3);
}

double check_softmax(std::uint64_t seed, const Shape& s) {
    Rng rng(seed);
    Tensor x = rand_signed(rng, s, 0.0, 0.8);  // probs bounded away from 0/1
    // single-channel projection: d/dx_c = 10*(p0*(1-p0) or -p0*p_c), all
    // bounded below by the prob bounds
    Tensor r = Tensor::zeros(s);
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        for (std::int64_t p = 0; p < plane; ++p) {
            r.mutable_data()[static_cast<std::int64_t>(n) * s.c * plane + p] = 10.0f;
        }
    }
    return grad_check(
        [r](const std::vector<Tensor>& in) {
            return weighted(softmax_channels(in[0]), r);
        },
        {x}, 5e-3);
}

// ---- convolution cases (per-tensor conditioning) -----------------------------

struct ConvCase {
    Tensor x_mixed, x_pos, w_mixed, w_pos, b, r;
    int stride, pad, dil;
    ConvCase(std::uint64_t seed, const Shape& xs, int out_ch, int stride_, int pad_,
             int dil_)
        : stride(stride_), pad(pad_), dil(dil_) {
        Rng rng(seed);
        x_mixed = rand_signed(rng, xs, 0.1, 1.0);
        x_pos = rand_uniform(rng, xs, 0.1, 1.0);
        w_mixed = rand_signed(rng, Shape{out_ch, xs.c, 3, 3}, 0.1, 0.6);
        w_pos = rand_uniform(rng, Shape{out_ch, xs.c, 3, 3}, 0.1, 0.6);
        b = rand_uniform(rng, Shape{1, out_ch, 1, 1}, 0.1, 0.5);
        const Shape os{xs.n, out_ch, conv_out_size(xs.h, 3, stride_, pad_, dil_),
                       conv_out_size(xs.w, 3, stride_, pad_, dil_)};
        r = Tensor::zeros(os);
        Rng rr(seed ^ 0xF00D);
        for (std::int64_t i = 0; i < r.size(); ++i) {
            r.mutable_data()[i] = static_cast<float>(rr.uniform(0.5, 1.5));
        }
    }
};

double check_conv2d(std::uint64_t seed, const Shape& xs, int out_ch, int stride,
                    int pad, int dil) {
    ConvCase c(seed, xs, out_ch, stride, pad, dil);
    auto run = [&c](const Tensor& x, const Tensor& w, int which,
                    const Tensor& probe) {
        return grad_check(
            [&c, &x, &w, which](const std::vector<Tensor>& in) {
                ConvParams p;
                p.weight = which == 1 ? in[0] : w;
                p.bias = which == 2 ? in[0] : c.b;
                p.stride = c.stride;
                p.padding = c.pad;
                p.dilation = c.dil;
                return weighted(conv2d(which == 0 ? in[0] : x, p), c.r);
            },
            {probe}, 0.25);  // multilinear: central differences are exact
    };
    // dL/dx = sum of w*r (positive pair), dL/dw = sum of x*r, dL/db = sum r
    double err = run(c.x_mixed, c.w_pos, 0, c.x_mixed);
    err = std::max(err, run(c.x_pos, c.w_mixed, 1, c.w_mixed));
    err = std::max(err, run(c.x_mixed, c.w_mixed, 2, c.b));
    return err;
}

double check_depthwise(std::uint64_t seed, const Shape& xs) {
    Rng rng(seed);
    Tensor x_mixed = rand_signed(rng, xs, 0.1, 1.0);
    Tensor x_pos = rand_uniform(rng, xs, 0.1, 1.0);
    Tensor w_mixed = rand_signed(rng, Shape{xs.c, 1, 3, 3}, 0.1, 0.6);
    Tensor w_pos = rand_uniform(rng, Shape{xs.c, 1, 3, 3}, 0.1, 0.6);
    Tensor r = rand_uniform(rng, xs, 0.5, 1.5);
    const double dx = grad_check(
        [&](const std::vector<Tensor>& in) {
            return weighted(depthwise_conv2d(in[0], w_pos, 1, 1), r);
        },
        {x_mixed}, 0.25);
    const double dw = grad_check(
        [&](const std::vector<Tensor>& in) {
            return weighted(depthwise_conv2d(x_pos, in[0], 1, 1), r);
        },
        {w_mixed}, 0.25);
    return std::max(dx, dw);
}

double check_pointwise(std::uint64_t seed, const Shape& xs, int out_ch) {
    Rng rng(seed);
    Tensor x_mixed = rand_signed(rng, xs, 0.1, 1.0);
    Tensor x_pos = rand_uniform(rng, xs, 0.1, 1.0);
    Tensor w_mixed = rand_signed(rng, Shape{out_ch, xs.c, 1, 1}, 0.1, 0.6);
    Tensor w_pos = rand_uniform(rng, Shape{out_ch, xs.c, 1, 1}, 0.1, 0.6);
    Tensor b = rand_uniform(rng, Shape{1, out_ch, 1, 1}, 0.1, 0.5);
    Tensor r = rand_uniform(rng, Shape{xs.n, out_ch, xs.h, xs.w}, 0.5, 1.5);
    const double dx = grad_check(
        [&](const std::vector<Tensor>& in) {
            return weighted(pointwise_conv(in[0], w_pos, b), r);
        },
        {x_mixed}, 0.25);
    const double dwb = grad_check(
        [&](const std::vector<Tensor>& in) {
            return weighted(pointwise_conv(x_pos, in[0], in[1]), r);
        },
        {w_mixed, b}, 0.25);
    return std::max(dx, dwb);
}

double check_overlap(std::uint64_t seed, const Shape& xs) {
    Rng rng(seed);
    Tensor x_mixed = rand_signed(rng, xs, 0.1, 1.0);
    Tensor x_pos = rand_uniform(rng, xs, 0.1, 1.0);
    Tensor w_mixed = rand_signed(rng, Shape{xs.c, xs.c, 3, 3}, 0.1, 0.6);
    Tensor w_pos = rand_uniform(rng, Shape{xs.c, xs.c, 3, 3}, 0.1, 0.6);
    Tensor b = rand_uniform(rng, Shape{1, xs.c, 1, 1}, 0.1, 0.5);
    Tensor r = rand_uniform(
        rng, Shape{xs.n, xs.c, (xs.h + 1) / 2, (xs.w + 1) / 2}, 0.5, 1.5);
    auto make = [&b, &r](const Tensor& w) {
        return [w, b, r](const std::vector<Tensor>& in) {
            ConvParams p;
            p.weight = w;
            p.bias = b;
            p.stride = 2;
            p.padding = 1;
            return weighted(overlap_downsample(in[0], p), r);
        };
    };
    const double dx = grad_check(make(w_pos), {x_mixed}, 0.25);
    const double dw = grad_check(
        [&](const std::vector<Tensor>& in) {
            ConvParams p;
            p.weight = in[0];
            p.bias = in[1];
            p.stride = 2;
            p.padding = 1;
            return weighted(overlap_downsample(x_pos, p), r);
        },
        {w_mixed, b}, 0.25);
    return std::max(dx, dw);
}

std::optional<double> check_deform(std::uint64_t seed, const Shape& xs, int out_ch) {
    Rng rng(seed);
    Tensor x_mixed = rand_signed(rng, xs, 0.1, 1.0);
    Tensor x_ramp = ramp_image(rng, xs);
    Tensor w_mixed = rand_signed(rng, Shape{out_ch, xs.c, 3, 3}, 0.1, 0.6);
    Tensor w_pos = rand_uniform(rng, Shape{out_ch, xs.c, 3, 3}, 0.1, 0.6);
    Tensor b = rand_uniform(rng, Shape{1, out_ch, 1, 1}, 0.1, 0.5);
    Tensor off = rand_offsets(rng, Shape{xs.n, 18, xs.h, xs.w});
    Tensor r = rand_uniform(rng, Shape{xs.n, out_ch, xs.h, xs.w}, 0.5, 1.5);

    auto conv_with = [&off](const Tensor& x, const Tensor& w, const Tensor& bias,
                            const Tensor& offsets) {
        ConvParams p;
        p.weight = w;
        p.bias = bias;
        p.stride = 1;
        p.padding = 1;
        return deform_conv2d(x, p, offsets);
    };
    // x perturbations do not move sampling coordinates: exact-linear, big eps
    const double dx = grad_check(
        [&](const std::vector<Tensor>& in) {
            return weighted(conv_with(in[0], w_pos, b, off), r);
        },
        {x_mixed}, 0.2);
    std::optional<double> dwb = floored_check(
        [&](const std::vector<Tensor>& in) {
            return weighted(conv_with(x_ramp, in[0], in[1], off), r);
        },
        {w_mixed, b}, 0.2, 0.02);
    if (!dwb) return std::nullopt;
    // offsets stay inside one bilinear cell under +-0.1 around frac 0.3..0.7
    std::optional<double> doff = floored_check(
        [&](const std::vector<Tensor>& in) {
            return weighted(conv_with(x_ramp, w_pos, b, in[0]), r);
        },
        {off}, 0.1, 0.01);
    if (!doff) return std::nullopt;
    return std::max({dx, *dwb, *doff});
}

// ---- normalization / resampling ----------------------------------------------

std::optional<double> check_batchnorm(std::uint64_t seed, const Shape& xs,
                                      bool training) {
    Rng rng(seed);
    Tensor x = rand_signed(rng, xs, 0.1, 1.2);
    Tensor gamma = rand_uniform(rng, Shape{1, xs.c, 1, 1}, 0.5, 1.5);
    Tensor beta = rand_signed(rng, Shape{1, xs.c, 1, 1}, 0.1, 0.5);
    Tensor rm = rand_signed(rng, Shape{1, xs.c, 1, 1}, 0.0, 0.3);
    Tensor rv = rand_uniform(rng, Shape{1, xs.c, 1, 1}, 0.5, 1.5);
    Tensor r = rand_uniform(rng, xs, 0.5, 1.5);
    // training-mode x gradients are mean-centred and cross zero; tiny shapes
    // plus a floor keep every element certifiable
    return floored_check(
        [r, rm, rv, training](const std::vector<Tensor>& in) {
            BatchNormState s;
            s.gamma = in[1];
            s.beta = in[2];
            s.running_mean = rm;
            s.running_var = rv;
            return weighted(batchnorm(in[0], s, training), r);
        },
        {x, gamma, beta}, 2e-2, training ? 0.03 : 0.0);
}

double check_upsample(std::uint64_t seed, const Shape& xs, int factor) {
    Rng rng(seed);
    Tensor x = rand_signed(rng, xs, 0.1, 1.0);
    Tensor r = rand_uniform(rng, Shape{xs.n, xs.c, xs.h * factor, xs.w * factor},
                            0.5, 1.5);
    return grad_check(
        [r, factor](const std::vector<Tensor>& in) {
            return weighted(upsample_bilinear(in[0], factor), r);
        },
        {x}, 0.25);  // linear in x
}

double check_concat_slice(std::uint64_t seed, const Shape& base) {
    Rng rng(seed);
    Tensor a = rand_signed(rng, base, 0.1, 1.0);
    Tensor b = rand_signed(rng, Shape{base.n, base.c + 1, base.h, base.w}, 0.1, 1.0);
    Tensor c = rand_signed(rng, Shape{base.n, 2, base.h, base.w}, 0.1, 1.0);
    const int total_c = base.c + (base.c + 1) + 2;
    Tensor r = rand_uniform(rng, Shape{base.n, total_c - 1, base.h, base.w}, 0.5, 1.5);
    return grad_check(
        [r, total_c](const std::vector<Tensor>& in) {
            Tensor cat = concat_channels({in[0], in[1], in[2]});
            return weighted(slice_channels(cat, 1, total_c - 1), r);
        },
        {a, b, c}, 0.25);
}

double check_flatten(std::uint64_t seed, const Shape& s) {
    Rng rng(seed);
    Tensor a = rand_signed(rng, s, 0.1, 1.0);
    Tensor b = rand_signed(rng, s, 0.1, 1.0);
    Tensor r = rand_uniform(rng, s, 0.5, 1.5);
    return grad_check(
        [r, s](const std::vector<Tensor>& in) {
            Tensor flat = add(flatten_transpose(in[0]), flatten_transpose(in[1]));
            return weighted(flatten_inverse(flat, s.h, s.w), r);
        },
        {a, b}, 0.25);
}

// ---- loss terms ---------------------------------------------------------------

LabelMask random_labels(Rng& rng, const Shape& ps) {
    Tensor labels = Tensor::zeros(Shape{ps.n, 1, ps.h, ps.w});
    for (std::int64_t i = 0; i < labels.size(); ++i) {
        labels.mutable_data()[i] = static_cast<float>(rng.uniform_int(0, ps.c - 1));
    }
    return LabelMask{labels};
}

double check_cross_entropy(std::uint64_t seed, const Shape& ps) {
    Rng rng(seed);
    Tensor probs = rand_uniform(rng, ps, 0.1, 0.9);
    LabelMask lm = random_labels(rng, ps);
    return grad_check(
        [lm](const std::vector<Tensor>& in) { return cross_entropy(in[0], lm); },
        {probs}, 1e-3);
}

double check_dice(std::uint64_t seed, const Shape& ps) {
    Rng rng(seed);
    Tensor probs = rand_uniform(rng, ps, 0.05, 0.95);
    LabelMask lm = random_labels(rng, ps);
    return grad_check(
        [lm](const std::vector<Tensor>& in) { return dice_loss(in[0], lm); }, {probs},
        1e-3);
}

double check_boundary(std::uint64_t seed, const Shape& s) {
    Rng rng(seed);
    Tensor pred = rand_uniform(rng, s, 0.05, 0.95);
    Tensor gt = Tensor::zeros(s);
    for (std::int64_t i = 0; i < gt.size(); ++i) {
        gt.mutable_data()[i] = rng.uniform() < 0.2 ? 1.0f : 0.0f;
    }
    return grad_check(
        [gt](const std::vector<Tensor>& in) {
            return boundary_loss(in[0], BoundaryMask{gt});
        },
        {pred}, 1e-3);
}

// ---- composite modules ---------------------------------------------------------

// Upper section conditioned for certifiable gradients: positive convolution
// weights plus the residual path bound the input gradient from below; a
// small gamma keeps the batchnorm branch from cancelling it; beta = 3 holds
// every relu input away from the kink.
std::optional<double> check_mgfi_upper(std::uint64_t seed) {
    Rng rng(seed);
    const MGFIConfig cfg{4, 3, 2};
    MGFIParams P = make_mgfi_params(cfg, rng);
    P.overlap.weight = rand_uniform(rng, Shape{4, 4, 3, 3}, 0.05, 0.3);
    P.overlap.bias = rand_uniform(rng, Shape{1, 4, 1, 1}, 0.05, 0.3);
    P.dw_kernels = rand_uniform(rng, Shape{4, 1, 3, 3}, 0.05, 0.3);
    P.dw_point.weight = rand_uniform(rng, Shape{4, 4, 1, 1}, 0.05, 0.3);
    P.fuse.weight = rand_uniform(rng, Shape{4, 4, 3, 3}, 0.05, 0.3);
    P.fuse_bn.gamma = rand_uniform(rng, Shape{1, 4, 1, 1}, 0.05, 0.15);
    P.fuse_bn.beta = Tensor::full(Shape{1, 4, 1, 1}, 3.0f);
    Tensor x = rand_uniform(rng, Shape{2, 4, 8, 8}, 0.1, 1.0);
    Tensor r = rand_uniform(rng, Shape{2, 4, 4, 4}, 0.5, 1.5);

    KinkAudit audit;
    {
        KinkAudit* prev = set_kink_audit(&audit);
        MGFIParams pc = P;
        mgfi_upper(x, pc, true);
        set_kink_audit(prev);
    }
    if (audit.min_relu_margin < 0.3f) return std::nullopt;

    auto closure = [&P, &r](const std::vector<Tensor>& in) {
        MGFIParams pc = P;
        pc.overlap.weight = in[1];
        pc.overlap.bias = in[2];
        pc.fuse_bn.gamma = in[3];
        pc.fuse_bn.beta = in[4];
        return weighted(mgfi_upper(in[0], pc, true).first, r);
    };
    return floored_check(closure,
                         {x, P.overlap.weight, P.overlap.bias, P.fuse_bn.gamma,
                          P.fuse_bn.beta},
                         3e-2, 0.02);
}

// Lower section on a ramp input with positive weights: every branch weight,
// bias, offset and the input itself then has a positive-sum gradient.
std::optional<double> check_mgfi_lower(std::uint64_t seed) {
    Rng rng(seed);
    const MGFIConfig cfg{4, 3, 2};
    MGFIParams P = make_mgfi_params(cfg, rng);
    P.offset_conv.weight = rand_signed(rng, Shape{18, 4, 3, 3}, 0.0005, 0.004);
    P.offset_conv.bias = rand_offsets(rng, Shape{1, 18, 1, 1});
    P.deform.weight = rand_uniform(rng, Shape{3, 4, 3, 3}, 0.05, 0.3);
    P.atrous.weight = rand_uniform(rng, Shape{3, 4, 3, 3}, 0.05, 0.3);
    P.standard.weight = rand_uniform(rng, Shape{3, 4, 3, 3}, 0.05, 0.3);
    P.compress.weight = rand_uniform(rng, Shape{4, 9, 1, 1}, 0.05, 0.3);
    Tensor x = ramp_image(rng, Shape{2, 4, 6, 6});
    Tensor r = rand_uniform(rng, Shape{2, 4, 6, 6}, 0.5, 1.5);

    KinkAudit audit;
    {
        KinkAudit* prev = set_kink_audit(&audit);
        MGFIParams pc = P;
        mgfi_lower(x, cfg, pc);
        set_kink_audit(prev);
    }
    if (audit.min_coord_margin < 0.2f) return std::nullopt;

    auto closure = [&P, &cfg, &r](const std::vector<Tensor>& in) {
        MGFIParams pc = P;
        pc.offset_conv.bias = in[1];
        pc.deform.weight = in[2];
        pc.deform.bias = in[3];
        pc.atrous.weight = in[4];
        pc.atrous.bias = in[5];
        pc.standard.weight = in[6];
        pc.standard.bias = in[7];
        pc.compress.weight = in[8];
        pc.compress.bias = in[9];
        return weighted(mgfi_lower(in[0], cfg, pc), r);
    };
    return floored_check(closure,
                         {x, P.offset_conv.bias, P.deform.weight, P.deform.bias,
                          P.atrous.weight, P.atrous.bias, P.standard.weight,
                          P.standard.bias, P.compress.weight, P.compress.bias},
                         3e-2, 0.02);
}

std::optional<double> check_ae(std::uint64_t seed) {
    Rng rng(seed);
    AEParams P = make_ae_params(4, rng);
    P.offset_conv.weight = rand_signed(rng, Shape{18, 4, 3, 3}, 0.0005, 0.004);
    P.offset_conv.bias = rand_offsets(rng, Shape{1, 18, 1, 1});
    P.deform.weight = rand_uniform(rng, Shape{4, 4, 3, 3}, 0.05, 0.3);
    P.compress.weight = rand_uniform(rng, Shape{1, 4, 1, 1}, 0.2, 0.5);
    Tensor x = ramp_image(rng, Shape{1, 4, 8, 8});
    // keep the sigmoid input moderate so its derivative stays >= ~0.1
    {
        float* d = x.mutable_data();
        for (std::int64_t i = 0; i < x.size(); ++i) d[i] *= 0.25f;
    }
    Tensor r = rand_uniform(rng, Shape{1, 1, 8, 8}, 0.5, 1.5);

    KinkAudit audit;
    {
        KinkAudit* prev = set_kink_audit(&audit);
        ae_forward(x, P);
        set_kink_audit(prev);
    }
    if (audit.min_coord_margin < 0.2f) return std::nullopt;

    auto closure = [&P, &r](const std::vector<Tensor>& in) {
        AEParams pc = P;
        pc.offset_conv.bias = in[1];
        pc.deform.weight = in[2];
        pc.deform.bias = in[3];
        pc.compress.weight = in[4];
        pc.compress.bias = in[5];
        return weighted(ae_forward(in[0], pc), r);
    };
    return floored_check(closure,
                         {x, P.offset_conv.bias, P.deform.weight, P.deform.bias,
                          P.compress.weight, P.compress.bias},
                         3e-2, 0.01);
}

// Residual encoder block in its identity-shortcut form: the shortcut feeds
// every input element a direct unit-weight gradient, so the input gradient
// stays bounded once the batchnorm branch is scaled down by a small gamma;
// betas of 3 clear both relu kinks. The strided projection variant is plain
// conv2d, certified by the op-level check.
std::optional<double> check_res_block(std::uint64_t seed) {
    Rng rng(seed);
    Tensor x = rand_uniform(rng, Shape{2, 4, 6, 6}, 0.1, 1.0);
    ConvParams conv1 = init::conv(rng, 4, 4, 3, 1, 1, 1, false);
    conv1.weight = rand_uniform(rng, Shape{4, 4, 3, 3}, 0.05, 0.3);
    BatchNormState bn1 = make_batchnorm(4);
    bn1.gamma = rand_uniform(rng, Shape{1, 4, 1, 1}, 0.05, 0.15);
    bn1.beta = Tensor::full(Shape{1, 4, 1, 1}, 3.0f);
    ConvParams conv2 = init::conv(rng, 4, 4, 3, 1, 1, 1, false);
    conv2.weight = rand_uniform(rng, Shape{4, 4, 3, 3}, 0.05, 0.3);
    BatchNormState bn2 = make_batchnorm(4);
    bn2.gamma = rand_uniform(rng, Shape{1, 4, 1, 1}, 0.05, 0.15);
    bn2.beta = Tensor::full(Shape{1, 4, 1, 1}, 3.0f);
    Tensor r = rand_uniform(rng, Shape{2, 4, 6, 6}, 0.5, 1.5);

    auto forward = [&](const Tensor& xi, const Tensor& beta2) {
        BatchNormState b1 = bn1;
        BatchNormState b2 = bn2;
        b2.beta = beta2;
        Tensor y = relu(batchnorm(conv2d(xi, conv1), b1, true));
        y = batchnorm(conv2d(y, conv2), b2, true);
        return relu(add(y, xi));
    };

    KinkAudit audit;
    {
        KinkAudit* prev = set_kink_audit(&audit);
        forward(x, bn2.beta);
        set_kink_audit(prev);
    }
    if (audit.min_relu_margin < 0.3f) return std::nullopt;

    return floored_check(
        [&](const std::vector<Tensor>& in) {
            return weighted(forward(in[0], in[1]), r);
        },
        {x, bn2.beta}, 3e-2, 0.02);
}

// Micro end-to-end check of the assembled network plus the hybrid loss. FD
// certification is only valid for tensors whose gradients clear the noise
// floor, which at full depth means the loss-side tensors; deeper routing is
// certified by the module-level checks above.
struct ModelFixture {
    ModelConfig config;
    NetworkParams params;
    Tensor image;
    LabelMask labels;
    BoundaryMask boundary;
    std::vector<std::string> watched;

    std::vector<Tensor> inputs() {
        std::vector<Tensor> out;
        for (const std::string& name : watched) {
            for_each_param(params, config, [&out, &name](const std::string& n, Tensor& t) {
                if (n == name) out.push_back(t);
            });
        }
        return out;
    }

    Tensor loss(const std::vector<Tensor>& in) {
        NetworkParams p = params;
        std::size_t slot = 0;
        for (const std::string& name : watched) {
            const Tensor& probe = in[slot++];
            for_each_param(p, config, [&probe, &name](const std::string& n, Tensor& t) {
                if (n == name) t = probe;
            });
        }
        ModelOutput out = model_forward(image, p, config, /*training=*/true);
        Tensor probs = softmax_channels(out.seg_logits);
        return hybrid_loss(probs, out.edge_map, labels, boundary,
                           config.lambda_boundary)
            .total;
    }
};

ModelFixture make_model_fixture(std::uint64_t seed) {
    ModelFixture f;
    f.config.input_channels = 1;
    f.config.class_count = 2;
    f.config.stage_channels = {4, 8};
    f.config.blocks_per_stage = 1;
    f.config.mgfi_mid_channels = 4;
    f.config.seed = seed;
    f.params = param_init(f.config, seed);

    Rng rng(seed ^ 0x5EED);
    for_each_param(f.params, f.config, [&rng](const std::string& name, Tensor& t) {
        if (name.ends_with(".beta")) {
            t = Tensor::full(t.shape(), 3.0f);
        } else if (name == "mgfi.offset.weight" || name == "ae.offset.weight") {
            t = rand_signed(rng, t.shape(), 0.0005, 0.004);
        } else if (name == "mgfi.offset.bias" || name == "ae.offset.bias") {
            Tensor b = Tensor::zeros(t.shape());
            for (std::int64_t i = 0; i < b.size(); ++i) {
                const double m = rng.uniform(0.35, 0.45);
                b.mutable_data()[i] = static_cast<float>(rng.coin() ? m : -m);
            }
            t = b;
        }
    });
    f.image = rand_signed(rng, Shape{2, 1, 8, 8}, 0.1, 1.0);

    Tensor lab = Tensor::zeros(Shape{2, 1, 8, 8});
    for (int n = 0; n < 2; ++n) {
        for (int y = 2; y < 6; ++y) {
            for (int x = 2 + n; x < 6 + n; ++x) {
                lab.mutable_data()[(n * 8 + y) * 8 + x] = 1.0f;
            }
        }
    }
    f.labels = LabelMask{lab};
    f.boundary = boundary_from_labels(f.labels, CannyConfig{});

    f.watched = {"decoder2.bn.beta", "seg_head.weight",    "seg_head.bias",
                 "ae.deform.bias",   "ae.compress.weight", "ae.compress.bias"};
    return f;
}

std::optional<double> check_model(std::uint64_t seed) {
    ModelFixture f = make_model_fixture(seed);
    KinkAudit audit;
    {
        KinkAudit* prev = set_kink_audit(&audit);
        std::vector<Tensor> in = f.inputs();
        f.loss(in);
        set_kink_audit(prev);
    }
    if (audit.min_relu_margin < 0.15f || audit.min_coord_margin < 0.15f) {
        return std::nullopt;
    }
    return floored_check([&f](const std::vector<Tensor>& in) { return f.loss(in); },
                         f.inputs(), 2e-2, 0.03);
}

}  // namespace

std::vector<GradCheckCase> gradcheck_suite() {
    std::vector<GradCheckCase> cases;
    auto push = [&cases](const std::string& name,
                         std::vector<std::function<double()>> shapes) {
        cases.push_back({name, 1e-3, [shapes = std::move(shapes)]() {
                             return run_shapes(shapes);
                         }});
    };

    push("add", {[] { return check_add(11, {1, 2, 3, 3}); },
                 [] { return check_add(12, {2, 1, 4, 5}); },
                 [] { return check_add(13, {1, 4, 2, 2}); }});
    push("mul", {[] { return check_mul(21, {1, 2, 3, 3}); },
                 [] { return check_mul(22, {2, 3, 2, 4}); },
                 [] { return check_mul(23, {1, 1, 6, 6}); }});
    push("relu", {[] { return check_relu(31, {1, 2, 4, 4}); },
                  [] { return check_relu(32, {2, 3, 3, 3}); },
                  [] { return check_relu(33, {1, 1, 8, 8}); }});
    push("sigmoid", {[] { return check_sigmoid(41, {1, 2, 4, 4}); },
                     [] { return check_sigmoid(42, {2, 1, 5, 5}); },
                     [] { return check_sigmoid(43, {1, 3, 3, 3}); }});
    push("softmax_channels", {[] { return check_softmax(51, {1, 2, 4, 4}); },
                              [] { return check_softmax(52, {2, 3, 3, 3}); },
                              [] { return check_softmax(53, {1, 5, 2, 2}); }});
    push("conv2d", {[] { return check_conv2d(61, {2, 3, 6, 6}, 4, 1, 1, 1); },
                    [] { return check_conv2d(62, {1, 2, 7, 7}, 3, 2, 1, 1); },
                    [] { return check_conv2d(63, {1, 3, 9, 9}, 2, 1, 2, 2); }});
    push("depthwise_conv2d", {[] { return check_depthwise(71, {1, 3, 6, 6}); },
                              [] { return check_depthwise(72, {2, 2, 5, 5}); },
                              [] { return check_depthwise(73, {1, 4, 4, 4}); }});
    push("pointwise_conv", {[] { return check_pointwise(81, {2, 4, 5, 5}, 3); },
                            [] { return check_pointwise(82, {1, 3, 4, 4}, 5); },
                            [] { return check_pointwise(83, {1, 6, 3, 3}, 2); }});
    push("overlap_downsample", {[] { return check_overlap(91, {1, 2, 6, 6}); },
                                [] { return check_overlap(92, {2, 3, 5, 5}); },
                                [] { return check_overlap(93, {1, 4, 8, 8}); }});
    push("deform_conv2d",
         {[] {
              return run_seed_search(
                  [](std::uint64_t s) { return check_deform(s, {1, 3, 6, 6}, 2); }, 101);
          },
          [] {
              return run_seed_search(
                  [](std::uint64_t s) { return check_deform(s, {2, 2, 5, 5}, 3); }, 201);
          },
          [] {
              return run_seed_search(
                  [](std::uint64_t s) { return check_deform(s, {1, 4, 4, 4}, 2); }, 301);
          }});
    push("batchnorm_train",
         {[] {
              return run_seed_search(
                  [](std::uint64_t s) { return check_batchnorm(s, {2, 1, 2, 2}, true); },
                  111);
          },
          [] {
              return run_seed_search(
                  [](std::uint64_t s) { return check_batchnorm(s, {2, 2, 2, 2}, true); },
                  211);
          },
          [] {
              return run_seed_search(
                  [](std::uint64_t s) { return check_batchnorm(s, {3, 1, 2, 3}, true); },
                  311);
          }});
    push("batchnorm_eval",
         {[] { return *check_batchnorm(121, {2, 2, 4, 4}, false); },
          [] { return *check_batchnorm(122, {1, 3, 5, 5}, false); },
          [] { return *check_batchnorm(123, {2, 4, 3, 3}, false); }});
    push("upsample_bilinear", {[] { return check_upsample(131, {1, 2, 4, 4}, 2); },
                               [] { return check_upsample(132, {2, 1, 3, 5}, 2); },
                               [] { return check_upsample(133, {1, 3, 2, 2}, 3); }});
    push("concat_slice", {[] { return check_concat_slice(141, {1, 2, 3, 3}); },
                          [] { return check_concat_slice(142, {2, 1, 4, 4}); },
                          [] { return check_concat_slice(143, {1, 3, 2, 5}); }});
    push("flatten_transpose", {[] { return check_flatten(151, {1, 3, 4, 4}); },
                               [] { return check_flatten(152, {2, 2, 3, 5}); },
                               [] { return check_flatten(153, {1, 1, 6, 2}); }});
    push("cross_entropy", {[] { return check_cross_entropy(161, {2, 2, 4, 4}); },
                           [] { return check_cross_entropy(162, {1, 3, 5, 5}); },
                           [] { return check_cross_entropy(163, {2, 4, 3, 3}); }});
    push("dice_loss", {[] { return check_dice(171, {2, 2, 4, 4}); },
                       [] { return check_dice(172, {1, 3, 5, 5}); },
                       [] { return check_dice(173, {2, 4, 3, 3}); }});
    push("boundary_loss", {[] { return check_boundary(181, {2, 1, 4, 4}); },
                           [] { return check_boundary(182, {1, 1, 6, 6}); },
                           [] { return check_boundary(183, {3, 1, 3, 3}); }});
    push("res_block", {[] { return run_seed_search(check_res_block, 191); },
                       [] { return run_seed_search(check_res_block, 291); },
                       [] { return run_seed_search(check_res_block, 391); }});
    push("mgfi_upper", {[] { return run_seed_search(check_mgfi_upper, 201); },
                        [] { return run_seed_search(check_mgfi_upper, 301); },
                        [] { return run_seed_search(check_mgfi_upper, 401); }});
    push("mgfi_lower", {[] { return run_seed_search(check_mgfi_lower, 211); },
                        [] { return run_seed_search(check_mgfi_lower, 311); },
                        [] { return run_seed_search(check_mgfi_lower, 411); }});
    push("ae_forward", {[] { return run_seed_search(check_ae, 221); },
                        [] { return run_seed_search(check_ae, 321); },
                        [] { return run_seed_search(check_ae, 421); }});
    push("model_hybrid", {[] { return run_seed_search(check_model, 231); },
                          [] { return run_seed_search(check_model, 331); },
                          [] { return run_seed_search(check_model, 431); }});
    return cases;
}

}  // namespace mgfi
