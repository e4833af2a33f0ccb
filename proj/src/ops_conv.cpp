#include <algorithm>
#include <stdexcept>

#include "mgfi/ops.hpp"

namespace mgfi {

int conv_out_size(int in, int k, int stride, int pad, int dilation) {
    return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

namespace {

struct ConvGeom {
    int n, ci, hi, wi;
    int co, kh, kw;
    int stride, pad, dil;
    int ho, wo;
};

ConvGeom conv_geometry(const Shape& xs, const Shape& ws, int stride, int pad,
                       int dil, const char* op) {
    if (ws.c != xs.c) {
        throw std::invalid_argument(std::string(op) + ": weight expects " +
                                    std::to_string(ws.c) + " input channels, got " +
                                    std::to_string(xs.c));
    }
    if (ws.h % 2 == 0 || ws.w % 2 == 0) {
        throw std::invalid_argument(std::string(op) + ": kernel sides must be odd");
    }
    if (stride < 1 || pad < 0 || dil < 1) {
        throw std::invalid_argument(std::string(op) + ": bad stride/pad/dilation");
    }
    ConvGeom g;
    g.n = xs.n;
    g.ci = xs.c;
    g.hi = xs.h;
    g.wi = xs.w;
    g.co = ws.n;
    g.kh = ws.h;
    g.kw = ws.w;
    g.stride = stride;
    g.pad = pad;
    g.dil = dil;
    g.ho = conv_out_size(xs.h, ws.h, stride, pad, dil);
    g.wo = conv_out_size(xs.w, ws.w, stride, pad, dil);
    if (g.ho < 1 || g.wo < 1) {
        throw std::invalid_argument(std::string(op) + ": non-positive output size for input " +
                                    to_string(xs));
    }
    return g;
}

// Output index range [lo, hi) along one axis for which the tap lands inside
// the input: 0 <= o*stride - pad + tap*dil <= in-1.
inline void tap_bounds(int out, int in, int stride, int pad, int tap_off,
                       int* lo, int* hi) {
    const int base = tap_off - pad;
    int l = 0;
    if (base < 0) l = (-base + stride - 1) / stride;
    int h = out;
    const int top = in - 1 - base;
    if (top < 0) {
        h = 0;
    } else {
        h = std::min(out, top / stride + 1);
    }
    *lo = l;
    *hi = std::max(l, h);
}

void conv_forward_kernel(const ConvGeom& g, const float* x, const float* w,
                         const float* bias, float* out) {
    const std::int64_t xin = static_cast<std::int64_t>(g.ci) * g.hi * g.wi;
    const std::int64_t oplane = static_cast<std::int64_t>(g.ho) * g.wo;
    for (int n = 0; n < g.n; ++n) {
        const float* xn = x + n * xin;
        float* on = out + static_cast<std::int64_t>(n) * g.co * oplane;
        for (int oc = 0; oc < g.co; ++oc) {
            const float b = bias ? bias[oc] : 0.0f;
            std::fill(on + oc * oplane, on + (oc + 1) * oplane, b);
        }
        for (int oc = 0; oc < g.co; ++oc) {
            float* oc_plane = on + oc * oplane;
            for (int ic = 0; ic < g.ci; ++ic) {
                const float* xplane = xn + static_cast<std::int64_t>(ic) * g.hi * g.wi;
                const float* wk = w + ((static_cast<std::int64_t>(oc) * g.ci + ic) * g.kh) * g.kw;
                for (int ky = 0; ky < g.kh; ++ky) {
                    int oy_lo, oy_hi;
                    tap_bounds(g.ho, g.hi, g.stride, g.pad, ky * g.dil, &oy_lo, &oy_hi);
                    for (int kx = 0; kx < g.kw; ++kx) {
                        const float wv = wk[ky * g.kw + kx];
                        if (wv == 0.0f) continue;
                        int ox_lo, ox_hi;
                        tap_bounds(g.wo, g.wi, g.stride, g.pad, kx * g.dil, &ox_lo, &ox_hi);
                        const int ybase = ky * g.dil - g.pad;
                        const int xbase = kx * g.dil - g.pad;
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const float* xrow = xplane + (oy * g.stride + ybase) * g.wi + xbase;
                            float* orow = oc_plane + static_cast<std::int64_t>(oy) * g.wo;
                            if (g.stride == 1) {
                                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                    orow[ox] += wv * xrow[ox];
                                }
                            } else {
                                for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                    orow[ox] += wv * xrow[ox * g.stride];
                                }
                            }
                        }
                    }
                }
            }
        }
    }
}

void conv_backward_kernel(const ConvGeom& g, const float* x, const float* w,
                          const float* up, float* gx, float* gw, float* gb) {
    const std::int64_t xin = static_cast<std::int64_t>(g.ci) * g.hi * g.wi;
    const std::int64_t oplane = static_cast<std::int64_t>(g.ho) * g.wo;
    if (gb) {
        for (int oc = 0; oc < g.co; ++oc) {
            double acc = 0.0;
            for (int n = 0; n < g.n; ++n) {
                const float* urow = up + (static_cast<std::int64_t>(n) * g.co + oc) * oplane;
                float part = 0.0f;
                for (std::int64_t i = 0; i < oplane; ++i) part += urow[i];
                acc += part;
            }
            gb[oc] += static_cast<float>(acc);
        }
    }
    for (int n = 0; n < g.n; ++n) {
        const float* xn = x + n * xin;
        float* gxn = gx ? gx + n * xin : nullptr;
        const float* un = up + static_cast<std::int64_t>(n) * g.co * oplane;
        for (int oc = 0; oc < g.co; ++oc) {
            const float* uplane = un + oc * oplane;
            for (int ic = 0; ic < g.ci; ++ic) {
                const float* xplane = xn + static_cast<std::int64_t>(ic) * g.hi * g.wi;
                float* gxplane = gxn ? gxn + static_cast<std::int64_t>(ic) * g.hi * g.wi : nullptr;
                const std::int64_t wbase =
                    ((static_cast<std::int64_t>(oc) * g.ci + ic) * g.kh) * g.kw;
                for (int ky = 0; ky < g.kh; ++ky) {
                    int oy_lo, oy_hi;
                    tap_bounds(g.ho, g.hi, g.stride, g.pad, ky * g.dil, &oy_lo, &oy_hi);
                    const int ybase = ky * g.dil - g.pad;
                    for (int kx = 0; kx < g.kw; ++kx) {
                        int ox_lo, ox_hi;
                        tap_bounds(g.wo, g.wi, g.stride, g.pad, kx * g.dil, &ox_lo, &ox_hi);
                        const int xbase = kx * g.dil - g.pad;
                        const float wv = w[wbase + ky * g.kw + kx];
                        double wacc = 0.0;
                        for (int oy = oy_lo; oy < oy_hi; ++oy) {
                            const float* urow = uplane + static_cast<std::int64_t>(oy) * g.wo;
                            const float* xrow = xplane + (oy * g.stride + ybase) * g.wi + xbase;
                            if (gw) {
                                float part = 0.0f;
                                if (g.stride == 1) {
                                    for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                        part += urow[ox] * xrow[ox];
                                    }
                                } else {
                                    for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                        part += urow[ox] * xrow[ox * g.stride];
                                    }
                                }
                                wacc += part;
                            }
                            if (gxplane) {
                                float* gxrow = gxplane + (oy * g.stride + ybase) * g.wi + xbase;
                                if (g.stride == 1) {
                                    for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                        gxrow[ox] += wv * urow[ox];
                                    }
                                } else {
                                    for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                        gxrow[ox * g.stride] += wv * urow[ox];
                                    }
                                }
                            }
                        }
                        if (gw) gw[wbase + ky * g.kw + kx] += static_cast<float>(wacc);
                    }
                }
            }
        }
    }
}

}  // namespace

Tensor conv2d(const Tensor& x, const ConvParams& p) {
    const ConvGeom g = conv_geometry(x.shape(), p.weight.shape(), p.stride,
                                     p.padding, p.dilation, "conv2d");
    const bool has_bias = p.bias.defined();
    if (has_bias && p.bias.size() != g.co) {
        throw std::invalid_argument("conv2d: bias length does not match output channels");
    }
    const Shape out_shape{g.n, g.co, g.ho, g.wo};
    std::vector<float> out(static_cast<std::size_t>(out_shape.count()));
    conv_forward_kernel(g, x.data(), p.weight.data(),
                        has_bias ? p.bias.data() : nullptr, out.data());
    Tensor y(out_shape, std::move(out));

    Tape* t = Tape::active();
    if (t && (t->tracks(x) || t->tracks(p.weight) ||
              (has_bias && t->tracks(p.bias)))) {
        Tensor cx = x, cw = p.weight;
        if (has_bias) {
            t->attach(y, {&x, &p.weight, &p.bias}, [g, cx, cw](const GradSink& s) {
                conv_backward_kernel(g, cx.data(), cw.data(), s.upstream(),
                                     s.grad(0), s.grad(1), s.grad(2));
            });
        } else {
            t->attach(y, {&x, &p.weight}, [g, cx, cw](const GradSink& s) {
                conv_backward_kernel(g, cx.data(), cw.data(), s.upstream(),
                                     s.grad(0), s.grad(1), nullptr);
            });
        }
    }
    return y;
}

Tensor pointwise_conv(const Tensor& x, const Tensor& w, const Tensor& bias) {
    if (w.shape().h != 1 || w.shape().w != 1) {
        throw std::invalid_argument("pointwise_conv: kernel must be 1x1, got " +
                                    to_string(w.shape()));
    }
    ConvParams p;
    p.weight = w;
    p.bias = bias;
    return conv2d(x, p);
}

Tensor overlap_downsample(const Tensor& x, const ConvParams& p) {
    if (x.shape().h < 2 || x.shape().w < 2) {
        throw std::invalid_argument("overlap_downsample: input spatial dims must be >= 2, got " +
                                    to_string(x.shape()));
    }
    if (p.weight.shape().h != 3 || p.weight.shape().w != 3 || p.stride != 2 ||
        p.padding != 1 || p.dilation != 1) {
        throw std::invalid_argument(
            "overlap_downsample: expects a 3x3 stride-2 pad-1 convolution");
    }
    return conv2d(x, p);
}

namespace {

void depthwise_forward(int n, int c, int hi, int wi, int kh, int kw, int stride,
                       int pad, int ho, int wo, const float* x, const float* w,
                       float* out) {
    const std::int64_t iplane = static_cast<std::int64_t>(hi) * wi;
    const std::int64_t oplane = static_cast<std::int64_t>(ho) * wo;
    for (int b = 0; b < n; ++b) {
        for (int m = 0; m < c; ++m) {
            const float* xplane = x + (static_cast<std::int64_t>(b) * c + m) * iplane;
            float* op = out + (static_cast<std::int64_t>(b) * c + m) * oplane;
            std::fill(op, op + oplane, 0.0f);
            const float* wk = w + static_cast<std::int64_t>(m) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
                int oy_lo, oy_hi;
                tap_bounds(ho, hi, stride, pad, ky, &oy_lo, &oy_hi);
                for (int kx = 0; kx < kw; ++kx) {
                    int ox_lo, ox_hi;
                    tap_bounds(wo, wi, stride, pad, kx, &ox_lo, &ox_hi);
                    const float wv = wk[ky * kw + kx];
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const float* xrow = xplane + (oy * stride + ky - pad) * wi + kx - pad;
                        float* orow = op + static_cast<std::int64_t>(oy) * wo;
                        if (stride == 1) {
                            for (int ox = ox_lo; ox < ox_hi; ++ox) orow[ox] += wv * xrow[ox];
                        } else {
                            for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                orow[ox] += wv * xrow[ox * stride];
                            }
                        }
                    }
                }
            }
        }
    }
}

void depthwise_backward(int n, int c, int hi, int wi, int kh, int kw, int stride,
                        int pad, int ho, int wo, const float* x, const float* w,
                        const float* up, float* gx, float* gw) {
    const std::int64_t iplane = static_cast<std::int64_t>(hi) * wi;
    const std::int64_t oplane = static_cast<std::int64_t>(ho) * wo;
    for (int b = 0; b < n; ++b) {
        for (int m = 0; m < c; ++m) {
            const float* xplane = x + (static_cast<std::int64_t>(b) * c + m) * iplane;
            float* gxplane = gx ? gx + (static_cast<std::int64_t>(b) * c + m) * iplane : nullptr;
            const float* uplane = up + (static_cast<std::int64_t>(b) * c + m) * oplane;
            const std::int64_t wbase = static_cast<std::int64_t>(m) * kh * kw;
            for (int ky = 0; ky < kh; ++ky) {
                int oy_lo, oy_hi;
                tap_bounds(ho, hi, stride, pad, ky, &oy_lo, &oy_hi);
                for (int kx = 0; kx < kw; ++kx) {
                    int ox_lo, ox_hi;
                    tap_bounds(wo, wi, stride, pad, kx, &ox_lo, &ox_hi);
                    const float wv = w[wbase + ky * kw + kx];
                    double wacc = 0.0;
                    for (int oy = oy_lo; oy < oy_hi; ++oy) {
                        const float* urow = uplane + static_cast<std::int64_t>(oy) * wo;
                        const float* xrow = xplane + (oy * stride + ky - pad) * wi + kx - pad;
                        if (gw) {
                            float part = 0.0f;
                            for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                part += urow[ox] * xrow[ox * stride];
                            }
                            wacc += part;
                        }
                        if (gxplane) {
                            float* gxrow = gxplane + (oy * stride + ky - pad) * wi + kx - pad;
                            for (int ox = ox_lo; ox < ox_hi; ++ox) {
                                gxrow[ox * stride] += wv * urow[ox];
                            }
                        }
                    }
                    if (gw) gw[wbase + ky * kw + kx] += static_cast<float>(wacc);
                }
            }
        }
    }
}

}  // namespace

Tensor depthwise_conv2d(const Tensor& x, const Tensor& w, int stride, int padding) {
    const Shape& xs = x.shape();
    const Shape& ws = w.shape();
    if (ws.n != xs.c || ws.c != 1) {
        throw std::invalid_argument("depthwise_conv2d: weight must be (" +
                                    std::to_string(xs.c) + ",1,kh,kw), got " +
                                    to_string(ws));
    }
    if (ws.h % 2 == 0 || ws.w % 2 == 0) {
        throw std::invalid_argument("depthwise_conv2d: kernel sides must be odd");
    }
    const int ho = conv_out_size(xs.h, ws.h, stride, padding, 1);
    const int wo = conv_out_size(xs.w, ws.w, stride, padding, 1);
    if (ho < 1 || wo < 1) {
        throw std::invalid_argument("depthwise_conv2d: non-positive output size");
    }
    const Shape out_shape{xs.n, xs.c, ho, wo};
    std::vector<float> out(static_cast<std::size_t>(out_shape.count()));
    depthwise_forward(xs.n, xs.c, xs.h, xs.w, ws.h, ws.w, stride, padding, ho, wo,
                      x.data(), w.data(), out.data());
    Tensor y(out_shape, std::move(out));
    if (Tape* t = Tape::active(); t && (t->tracks(x) || t->tracks(w))) {
        Tensor cx = x, cw = w;
        t->attach(y, {&x, &w},
                  [cx, cw, xs, ws, stride, padding, ho, wo](const GradSink& s) {
                      depthwise_backward(xs.n, xs.c, xs.h, xs.w, ws.h, ws.w, stride,
                                         padding, ho, wo, cx.data(), cw.data(),
                                         s.upstream(), s.grad(0), s.grad(1));
                  });
    }
    return y;
}

}  // namespace mgfi
