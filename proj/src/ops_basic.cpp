#include <stdexcept>

#include "mgfi/ops.hpp"

namespace mgfi {

namespace {
thread_local KinkAudit* g_kink_audit = nullptr;
}

KinkAudit* set_kink_audit(KinkAudit* audit) {
    KinkAudit* prev = g_kink_audit;
    g_kink_audit = audit;
    return prev;
}

KinkAudit* kink_audit() { return g_kink_audit; }

static void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* op) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    to_string(a.shape()) + " vs " +
                                    to_string(b.shape()));
    }
}

Tensor add(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "add");
    const std::int64_t n = a.size();
    std::vector<float> out(static_cast<std::size_t>(n));
    const float* pa = a.data();
    const float* pb = b.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] + pb[i];
    Tensor y(a.shape(), std::move(out));
    if (Tape* t = Tape::active(); t && (t->tracks(a) || t->tracks(b))) {
        t->attach(y, {&a, &b}, [n](const GradSink& g) {
            const float* up = g.upstream();
            for (int slot = 0; slot < 2; ++slot) {
                if (float* dst = g.grad(slot)) {
                    for (std::int64_t i = 0; i < n; ++i) dst[i] += up[i];
                }
            }
        });
    }
    return y;
}

Tensor mul(const Tensor& a, const Tensor& b) {
    require_same_shape(a, b, "mul");
    const std::int64_t n = a.size();
    std::vector<float> out(static_cast<std::size_t>(n));
    const float* pa = a.data();
    const float* pb = b.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = pa[i] * pb[i];
    Tensor y(a.shape(), std::move(out));
    if (Tape* t = Tape::active(); t && (t->tracks(a) || t->tracks(b))) {
        Tensor ca = a, cb = b;
        t->attach(y, {&a, &b}, [ca, cb, n](const GradSink& g) {
            const float* up = g.upstream();
            if (float* da = g.grad(0)) {
                const float* pb2 = cb.data();
                for (std::int64_t i = 0; i < n; ++i) da[i] += up[i] * pb2[i];
            }
            if (float* db = g.grad(1)) {
                const float* pa2 = ca.data();
                for (std::int64_t i = 0; i < n; ++i) db[i] += up[i] * pa2[i];
            }
        });
    }
    return y;
}

Tensor scale(const Tensor& x, float s) {
    const std::int64_t n = x.size();
    std::vector<float> out(static_cast<std::size_t>(n));
    const float* px = x.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = px[i] * s;
    Tensor y(x.shape(), std::move(out));
    if (Tape* t = Tape::active(); t && t->tracks(x)) {
        t->attach(y, {&x}, [s, n](const GradSink& g) {
            if (float* dx = g.grad(0)) {
                const float* up = g.upstream();
                for (std::int64_t i = 0; i < n; ++i) dx[i] += up[i] * s;
            }
        });
    }
    return y;
}

Tensor sum_all(const Tensor& x) {
    const std::int64_t n = x.size();
    const float* px = x.data();
    double acc = 0.0;
    for (std::int64_t i = 0; i < n; ++i) acc += px[i];
    Tensor y = with_scalar_hint(Tensor::scalar_value(static_cast<float>(acc)), acc);
    if (Tape* t = Tape::active(); t && t->tracks(x)) {
        t->attach(y, {&x}, [n](const GradSink& g) {
            if (float* dx = g.grad(0)) {
                const float up = g.upstream()[0];
                for (std::int64_t i = 0; i < n; ++i) dx[i] += up;
            }
        });
    }
    return y;
}

Tensor concat_channels(const std::vector<Tensor>& parts) {
    if (parts.empty()) {
        throw std::invalid_argument("concat_channels: empty input list");
    }
    const Shape& first = parts[0].shape();
    int total_c = 0;
    for (const Tensor& p : parts) {
        const Shape& s = p.shape();
        if (s.n != first.n || s.h != first.h || s.w != first.w) {
            throw std::invalid_argument("concat_channels: spatial/batch mismatch " +
                                        to_string(first) + " vs " + to_string(s));
        }
        total_c += s.c;
    }
    const Shape out_shape{first.n, total_c, first.h, first.w};
    std::vector<float> out(static_cast<std::size_t>(out_shape.count()));
    const std::int64_t plane = static_cast<std::int64_t>(first.h) * first.w;
    for (int n = 0; n < first.n; ++n) {
        std::int64_t dst_c = 0;
        for (const Tensor& p : parts) {
            const int pc = p.shape().c;
            const float* src = p.data() + static_cast<std::int64_t>(n) * pc * plane;
            std::copy(src, src + static_cast<std::int64_t>(pc) * plane,
                      out.begin() + (static_cast<std::int64_t>(n) * total_c + dst_c) * plane);
            dst_c += pc;
        }
    }
    Tensor y(out_shape, std::move(out));

    Tape* t = Tape::active();
    bool any = false;
    if (t) {
        for (const Tensor& p : parts) any = any || t->tracks(p);
    }
    if (any) {
        std::vector<int> chans;
        chans.reserve(parts.size());
        for (const Tensor& p : parts) chans.push_back(p.shape().c);
        std::vector<const Tensor*> ptrs;
        ptrs.reserve(parts.size());
        for (const Tensor& p : parts) ptrs.push_back(&p);
        t->attach(y, ptrs, [chans, first, total_c](const GradSink& g) {
            const float* up = g.upstream();
            const std::int64_t plane2 = static_cast<std::int64_t>(first.h) * first.w;
            std::int64_t off_c = 0;
            for (std::size_t slot = 0; slot < chans.size(); ++slot) {
                const std::int64_t cc = chans[slot];
                if (float* d = g.grad(slot)) {
                    for (int n = 0; n < first.n; ++n) {
                        const float* src =
                            up + (static_cast<std::int64_t>(n) * total_c + off_c) * plane2;
                        float* dst = d + static_cast<std::int64_t>(n) * cc * plane2;
                        for (std::int64_t i = 0; i < cc * plane2; ++i) dst[i] += src[i];
                    }
                }
                off_c += cc;
            }
        });
    }
    return y;
}

Tensor slice_channels(const Tensor& x, int first, int count) {
    const Shape& s = x.shape();
    if (first < 0 || count < 1 || first + count > s.c) {
        throw std::invalid_argument("slice_channels: range [" + std::to_string(first) +
                                    ", " + std::to_string(first + count) +
                                    ") out of " + std::to_string(s.c) + " channels");
    }
    const Shape out_shape{s.n, count, s.h, s.w};
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    std::vector<float> out(static_cast<std::size_t>(out_shape.count()));
    for (int n = 0; n < s.n; ++n) {
        const float* src = x.data() + (static_cast<std::int64_t>(n) * s.c + first) * plane;
        std::copy(src, src + static_cast<std::int64_t>(count) * plane,
                  out.begin() + static_cast<std::int64_t>(n) * count * plane);
    }
    Tensor y(out_shape, std::move(out));
    if (Tape* t = Tape::active(); t && t->tracks(x)) {
        t->attach(y, {&x}, [s, first, count, plane](const GradSink& g) {
            if (float* dx = g.grad(0)) {
                const float* up = g.upstream();
                for (int n = 0; n < s.n; ++n) {
                    float* dst = dx + (static_cast<std::int64_t>(n) * s.c + first) * plane;
                    const float* src = up + static_cast<std::int64_t>(n) * count * plane;
                    for (std::int64_t i = 0; i < count * plane; ++i) dst[i] += src[i];
                }
            }
        });
    }
    return y;
}

static void flatten_copy(const Shape& s, const float* src, float* dst) {
    // dst(n, y*w+x, c) = src(n, c, y, x)
    const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        const float* sn = src + static_cast<std::int64_t>(n) * s.c * hw;
        float* dn = dst + static_cast<std::int64_t>(n) * hw * s.c;
        for (int c = 0; c < s.c; ++c) {
            const float* sc = sn + static_cast<std::int64_t>(c) * hw;
            for (std::int64_t p = 0; p < hw; ++p) dn[p * s.c + c] = sc[p];
        }
    }
}

static void flatten_copy_back(const Shape& s, const float* src, float* dst,
                              bool accumulate) {
    // dst(n, c, y, x) (+)= src(n, y*w+x, c)
    const std::int64_t hw = static_cast<std::int64_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        const float* sn = src + static_cast<std::int64_t>(n) * hw * s.c;
        float* dn = dst + static_cast<std::int64_t>(n) * s.c * hw;
        for (int c = 0; c < s.c; ++c) {
            float* dc = dn + static_cast<std::int64_t>(c) * hw;
            if (accumulate) {
                for (std::int64_t p = 0; p < hw; ++p) dc[p] += sn[p * s.c + c];
            } else {
                for (std::int64_t p = 0; p < hw; ++p) dc[p] = sn[p * s.c + c];
            }
        }
    }
}

Tensor flatten_transpose(const Tensor& x) {
    const Shape s = x.shape();
    const Shape out_shape{s.n, s.h * s.w, s.c, 1};
    std::vector<float> out(static_cast<std::size_t>(out_shape.count()));
    flatten_copy(s, x.data(), out.data());
    Tensor y(out_shape, std::move(out));
    if (Tape* t = Tape::active(); t && t->tracks(x)) {
        t->attach(y, {&x}, [s](const GradSink& g) {
            if (float* dx = g.grad(0)) {
                flatten_copy_back(s, g.upstream(), dx, /*accumulate=*/true);
            }
        });
    }
    return y;
}

Tensor flatten_inverse(const Tensor& x, int h, int w) {
    // x is (n, h*w, c, 1); dim1 must factor as h*w.
    const Shape s = x.shape();
    if (s.w != 1) {
        throw std::invalid_argument("flatten_inverse: expected trailing dim 1, got " +
                                    to_string(s));
    }
    if (static_cast<std::int64_t>(h) * w != s.c) {
        throw std::invalid_argument("flatten_inverse: " + std::to_string(s.c) +
                                    " positions do not factor as " + std::to_string(h) +
                                    "x" + std::to_string(w));
    }
    if (h < 1 || w < 1) {
        throw std::invalid_argument("flatten_inverse: target dims must be >= 1");
    }
    const Shape out_shape{s.n, s.h, h, w};
    std::vector<float> out(static_cast<std::size_t>(out_shape.count()));
    flatten_copy_back(out_shape, x.data(), out.data(), /*accumulate=*/false);
    Tensor y(out_shape, std::move(out));
    if (Tape* t = Tape::active(); t && t->tracks(x)) {
        t->attach(y, {&x}, [out_shape](const GradSink& g) {
            if (float* dx = g.grad(0)) {
                const Shape& os = out_shape;
                const std::int64_t hw = static_cast<std::int64_t>(os.h) * os.w;
                const float* up = g.upstream();
                for (int n = 0; n < os.n; ++n) {
                    const float* un = up + static_cast<std::int64_t>(n) * os.c * hw;
                    float* dn = dx + static_cast<std::int64_t>(n) * hw * os.c;
                    for (int c = 0; c < os.c; ++c) {
                        const float* uc = un + static_cast<std::int64_t>(c) * hw;
                        for (std::int64_t p = 0; p < hw; ++p) dn[p * os.c + c] += uc[p];
                    }
                }
            }
        });
    }
    return y;
}

}  // namespace mgfi
