#include <cmath>
#include <stdexcept>

#include "mgfi/ops.hpp"

namespace mgfi {

namespace {

// Bilinear read of one plane at fractional (py, px). Positions at or beyond
// [-1, H] x [-1, W] contribute nothing; partially overlapping positions use
// zero-valued phantom neighbours, matching zero-padded convolution.
inline float sample_plane(const float* plane, int h, int w, float py, float px) {
    if (py <= -1.0f || py >= static_cast<float>(h) || px <= -1.0f ||
        px >= static_cast<float>(w)) {
        return 0.0f;
    }
    const int y0 = static_cast<int>(std::floor(py));
    const int x0 = static_cast<int>(std::floor(px));
    const int y1 = y0 + 1;
    const int x1 = x0 + 1;
    const float ly = py - static_cast<float>(y0);
    const float lx = px - static_cast<float>(x0);
    const float hy = 1.0f - ly;
    const float hx = 1.0f - lx;

    float v00 = 0.0f, v01 = 0.0f, v10 = 0.0f, v11 = 0.0f;
    if (y0 >= 0 && x0 >= 0) v00 = plane[y0 * w + x0];
    if (y0 >= 0 && x1 <= w - 1) v01 = plane[y0 * w + x1];
    if (y1 <= h - 1 && x0 >= 0) v10 = plane[y1 * w + x0];
    if (y1 <= h - 1 && x1 <= w - 1) v11 = plane[y1 * w + x1];
    return hy * hx * v00 + hy * lx * v01 + ly * hx * v10 + ly * lx * v11;
}

// Gradient of sample_plane w.r.t. (py, px) at fixed input.
inline void sample_coord_grad(const float* plane, int h, int w, float py,
                              float px, float* dpy, float* dpx) {
    *dpy = 0.0f;
    *dpx = 0.0f;
    if (py <= -1.0f || py >= static_cast<float>(h) || px <= -1.0f ||
        px >= static_cast<float>(w)) {
        return;
    }
    const int y0 = static_cast<int>(std::floor(py));
    const int x0 = static_cast<int>(std::floor(px));
    const int y1 = y0 + 1;
    const int x1 = x0 + 1;
    const float ly = py - static_cast<float>(y0);
    const float lx = px - static_cast<float>(x0);
    const float hy = 1.0f - ly;
    const float hx = 1.0f - lx;

    float v00 = 0.0f, v01 = 0.0f, v10 = 0.0f, v11 = 0.0f;
    if (y0 >= 0 && x0 >= 0) v00 = plane[y0 * w + x0];
    if (y0 >= 0 && x1 <= w - 1) v01 = plane[y0 * w + x1];
    if (y1 <= h - 1 && x0 >= 0) v10 = plane[y1 * w + x0];
    if (y1 <= h - 1 && x1 <= w - 1) v11 = plane[y1 * w + x1];
    *dpy = hx * (v10 - v00) + lx * (v11 - v01);
    *dpx = hy * (v01 - v00) + ly * (v11 - v10);
}

// Scatter of an upstream value through the bilinear weights.
inline void sample_scatter(float* gplane, int h, int w, float py, float px,
                           float g) {
    if (py <= -1.0f || py >= static_cast<float>(h) || px <= -1.0f ||
        px >= static_cast<float>(w)) {
        return;
    }
    const int y0 = static_cast<int>(std::floor(py));
    const int x0 = static_cast<int>(std::floor(px));
    const int y1 = y0 + 1;
    const int x1 = x0 + 1;
    const float ly = py - static_cast<float>(y0);
    const float lx = px - static_cast<float>(x0);
    const float hy = 1.0f - ly;
    const float hx = 1.0f - lx;
    if (y0 >= 0 && x0 >= 0) gplane[y0 * w + x0] += g * hy * hx;
    if (y0 >= 0 && x1 <= w - 1) gplane[y0 * w + x1] += g * hy * lx;
    if (y1 <= h - 1 && x0 >= 0) gplane[y1 * w + x0] += g * ly * hx;
    if (y1 <= h - 1 && x1 <= w - 1) gplane[y1 * w + x1] += g * ly * lx;
}

struct DeformGeom {
    int n, ci, hi, wi;
    int co, kh, kw, taps;
    int stride, pad;
    int ho, wo;
};

DeformGeom deform_geometry(const Shape& xs, const ConvParams& p,
                           const Shape& os) {
    const Shape& ws = p.weight.shape();
    if (ws.c != xs.c) {
        throw std::invalid_argument("deform_conv2d: weight expects " +
                                    std::to_string(ws.c) + " input channels, got " +
                                    std::to_string(xs.c));
    }
    if (p.dilation != 1) {
        throw std::invalid_argument("deform_conv2d: dilation must be 1");
    }
    DeformGeom g;
    g.n = xs.n;
    g.ci = xs.c;
    g.hi = xs.h;
    g.wi = xs.w;
    g.co = ws.n;
    g.kh = ws.h;
    g.kw = ws.w;
    g.taps = ws.h * ws.w;
    g.stride = p.stride;
    g.pad = p.padding;
    g.ho = conv_out_size(xs.h, ws.h, p.stride, p.padding, 1);
    g.wo = conv_out_size(xs.w, ws.w, p.stride, p.padding, 1);
    if (g.ho < 1 || g.wo < 1) {
        throw std::invalid_argument("deform_conv2d: non-positive output size");
    }
    if (os.c != 2 * g.taps) {
        throw std::invalid_argument("deform_conv2d: offset field has " +
                                    std::to_string(os.c) + " channels, expected " +
                                    std::to_string(2 * g.taps));
    }
    if (os.n != xs.n || os.h != g.ho || os.w != g.wo) {
        throw std::invalid_argument("deform_conv2d: offset field shape " + to_string(os) +
                                    " does not match output grid (" + std::to_string(xs.n) +
                                    ",·," + std::to_string(g.ho) + "," + std::to_string(g.wo) + ")");
    }
    return g;
}

void deform_forward(const DeformGeom& g, const float* x, const float* w,
                    const float* bias, const float* off, float* out) {
    const std::int64_t iplane = static_cast<std::int64_t>(g.hi) * g.wi;
    const std::int64_t oplane = static_cast<std::int64_t>(g.ho) * g.wo;
    const int cols = g.ci * g.taps;
    std::vector<float> col(static_cast<std::size_t>(cols) * g.wo);
    for (int n = 0; n < g.n; ++n) {
        const float* xn = x + static_cast<std::int64_t>(n) * g.ci * iplane;
        const float* offn = off + static_cast<std::int64_t>(n) * 2 * g.taps * oplane;
        float* on = out + static_cast<std::int64_t>(n) * g.co * oplane;
        for (int oy = 0; oy < g.ho; ++oy) {
            // gather sampled values for one output row
            for (int k = 0; k < g.taps; ++k) {
                const int ky = k / g.kw;
                const int kx = k % g.kw;
                const float* dx_row = offn + (2 * k) * oplane + static_cast<std::int64_t>(oy) * g.wo;
                const float* dy_row = offn + (2 * k + 1) * oplane + static_cast<std::int64_t>(oy) * g.wo;
                for (int ox = 0; ox < g.wo; ++ox) {
                    const float py = static_cast<float>(oy * g.stride - g.pad + ky) + dy_row[ox];
                    const float px = static_cast<float>(ox * g.stride - g.pad + kx) + dx_row[ox];
                    if (KinkAudit* audit = kink_audit()) {
                        const float my = std::fabs(py - std::nearbyint(py));
                        const float mx = std::fabs(px - std::nearbyint(px));
                        const float m = my < mx ? my : mx;
                        if (m < audit->min_coord_margin) audit->min_coord_margin = m;
                    }
                    for (int ic = 0; ic < g.ci; ++ic) {
                        col[(static_cast<std::int64_t>(ic) * g.taps + k) * g.wo + ox] =
                            sample_plane(xn + ic * iplane, g.hi, g.wi, py, px);
                    }
                }
            }
            for (int oc = 0; oc < g.co; ++oc) {
                float* orow = on + oc * oplane + static_cast<std::int64_t>(oy) * g.wo;
                const float b = bias ? bias[oc] : 0.0f;
                for (int ox = 0; ox < g.wo; ++ox) orow[ox] = b;
                const float* wrow = w + static_cast<std::int64_t>(oc) * cols;
                for (int j = 0; j < cols; ++j) {
                    const float wv = wrow[j];
                    if (wv == 0.0f) continue;
                    const float* crow = col.data() + static_cast<std::int64_t>(j) * g.wo;
                    for (int ox = 0; ox < g.wo; ++ox) orow[ox] += wv * crow[ox];
                }
            }
        }
    }
}

void deform_backward(const DeformGeom& g, const float* x, const float* w,
                     const float* off, const float* up, float* gx, float* gw,
                     float* gb, float* goff) {
    const std::int64_t iplane = static_cast<std::int64_t>(g.hi) * g.wi;
    const std::int64_t oplane = static_cast<std::int64_t>(g.ho) * g.wo;
    const int cols = g.ci * g.taps;
    std::vector<float> col(static_cast<std::size_t>(cols) * g.wo);
    std::vector<float> gcol(static_cast<std::size_t>(cols) * g.wo);
    std::vector<double> gw_acc;
    if (gw) gw_acc.assign(static_cast<std::size_t>(g.co) * cols, 0.0);

    for (int n = 0; n < g.n; ++n) {
        const float* xn = x + static_cast<std::int64_t>(n) * g.ci * iplane;
        float* gxn = gx ? gx + static_cast<std::int64_t>(n) * g.ci * iplane : nullptr;
        const float* offn = off + static_cast<std::int64_t>(n) * 2 * g.taps * oplane;
        float* goffn = goff ? goff + static_cast<std::int64_t>(n) * 2 * g.taps * oplane : nullptr;
        const float* un = up + static_cast<std::int64_t>(n) * g.co * oplane;
        for (int oy = 0; oy < g.ho; ++oy) {
            if (gw) {
                for (int k = 0; k < g.taps; ++k) {
                    const int ky = k / g.kw;
                    const int kx = k % g.kw;
                    const float* dx_row =
                        offn + (2 * k) * oplane + static_cast<std::int64_t>(oy) * g.wo;
                    const float* dy_row =
                        offn + (2 * k + 1) * oplane + static_cast<std::int64_t>(oy) * g.wo;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const float py =
                            static_cast<float>(oy * g.stride - g.pad + ky) + dy_row[ox];
                        const float px =
                            static_cast<float>(ox * g.stride - g.pad + kx) + dx_row[ox];
                        for (int ic = 0; ic < g.ci; ++ic) {
                            col[(static_cast<std::int64_t>(ic) * g.taps + k) * g.wo + ox] =
                                sample_plane(xn + ic * iplane, g.hi, g.wi, py, px);
                        }
                    }
                }
            }
            std::fill(gcol.begin(), gcol.end(), 0.0f);
            for (int oc = 0; oc < g.co; ++oc) {
                const float* urow = un + oc * oplane + static_cast<std::int64_t>(oy) * g.wo;
                const float* wrow = w + static_cast<std::int64_t>(oc) * cols;
                for (int j = 0; j < cols; ++j) {
                    float* grow = gcol.data() + static_cast<std::int64_t>(j) * g.wo;
                    const float wv = wrow[j];
                    float part = 0.0f;
                    if (gw) {
                        const float* crow = col.data() + static_cast<std::int64_t>(j) * g.wo;
                        for (int ox = 0; ox < g.wo; ++ox) {
                            part += urow[ox] * crow[ox];
                            grow[ox] += wv * urow[ox];
                        }
                        gw_acc[static_cast<std::int64_t>(oc) * cols + j] += part;
                    } else {
                        for (int ox = 0; ox < g.wo; ++ox) grow[ox] += wv * urow[ox];
                    }
                }
            }
            if (gxn || goffn) {
                for (int k = 0; k < g.taps; ++k) {
                    const int ky = k / g.kw;
                    const int kx = k % g.kw;
                    const float* dx_row =
                        offn + (2 * k) * oplane + static_cast<std::int64_t>(oy) * g.wo;
                    const float* dy_row =
                        offn + (2 * k + 1) * oplane + static_cast<std::int64_t>(oy) * g.wo;
                    float* gdx_row = goffn ? goffn + (2 * k) * oplane +
                                                 static_cast<std::int64_t>(oy) * g.wo
                                           : nullptr;
                    float* gdy_row = goffn ? goffn + (2 * k + 1) * oplane +
                                                 static_cast<std::int64_t>(oy) * g.wo
                                           : nullptr;
                    for (int ox = 0; ox < g.wo; ++ox) {
                        const float py =
                            static_cast<float>(oy * g.stride - g.pad + ky) + dy_row[ox];
                        const float px =
                            static_cast<float>(ox * g.stride - g.pad + kx) + dx_row[ox];
                        float acc_dy = 0.0f, acc_dx = 0.0f;
                        for (int ic = 0; ic < g.ci; ++ic) {
                            const float gc =
                                gcol[(static_cast<std::int64_t>(ic) * g.taps + k) * g.wo + ox];
                            if (gc == 0.0f) continue;
                            if (gxn) {
                                sample_scatter(gxn + ic * iplane, g.hi, g.wi, py, px, gc);
                            }
                            if (goffn) {
                                float dpy, dpx;
                                sample_coord_grad(xn + ic * iplane, g.hi, g.wi, py, px,
                                                  &dpy, &dpx);
                                acc_dy += gc * dpy;
                                acc_dx += gc * dpx;
                            }
                        }
                        if (goffn) {
                            gdx_row[ox] += acc_dx;
                            gdy_row[ox] += acc_dy;
                        }
                    }
                }
            }
        }
        if (gb) {
            for (int oc = 0; oc < g.co; ++oc) {
                const float* uplane = un + oc * oplane;
                double acc = 0.0;
                for (std::int64_t i = 0; i < oplane; ++i) acc += uplane[i];
                gb[oc] += static_cast<float>(acc);
            }
        }
    }
    if (gw) {
        for (std::size_t i = 0; i < gw_acc.size(); ++i) {
            gw[i] += static_cast<float>(gw_acc[i]);
        }
    }
}

}  // namespace

float bilinear_sample(const Tensor& x, int n, int c, float py, float px) {
    const Shape& s = x.shape();
    const float* plane =
        x.data() + (static_cast<std::int64_t>(n) * s.c + c) * s.h * s.w;
    return sample_plane(plane, s.h, s.w, py, px);
}

Tensor deform_conv2d(const Tensor& x, const ConvParams& p, const Tensor& offsets) {
    const DeformGeom g = deform_geometry(x.shape(), p, offsets.shape());
    const bool has_bias = p.bias.defined();
    if (has_bias && p.bias.size() != g.co) {
        throw std::invalid_argument("deform_conv2d: bias length does not match output channels");
    }
    const Shape out_shape{g.n, g.co, g.ho, g.wo};
    std::vector<float> out(static_cast<std::size_t>(out_shape.count()));
    deform_forward(g, x.data(), p.weight.data(), has_bias ? p.bias.data() : nullptr,
                   offsets.data(), out.data());
    Tensor y(out_shape, std::move(out));

    Tape* t = Tape::active();
    if (t && (t->tracks(x) || t->tracks(p.weight) || t->tracks(offsets) ||
              (has_bias && t->tracks(p.bias)))) {
        Tensor cx = x, cw = p.weight, coff = offsets;
        if (has_bias) {
            t->attach(y, {&x, &p.weight, &offsets, &p.bias},
                      [g, cx, cw, coff](const GradSink& s) {
                          deform_backward(g, cx.data(), cw.data(), coff.data(),
                                          s.upstream(), s.grad(0), s.grad(1),
                                          s.grad(3), s.grad(2));
                      });
        } else {
            t->attach(y, {&x, &p.weight, &offsets},
                      [g, cx, cw, coff](const GradSink& s) {
                          deform_backward(g, cx.data(), cw.data(), coff.data(),
                                          s.upstream(), s.grad(0), s.grad(1), nullptr,
                                          s.grad(2));
                      });
        }
    }
    return y;
}

}  // namespace mgfi
