#include <cmath>
#include <stdexcept>

#include "mgfi/ops.hpp"

namespace mgfi {

Tensor relu(const Tensor& x) {
    const std::int64_t n = x.size();
    std::vector<float> out(static_cast<std::size_t>(n));
    const float* px = x.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = px[i] > 0.0f ? px[i] : 0.0f;
    if (KinkAudit* audit = kink_audit()) {
        for (std::int64_t i = 0; i < n; ++i) {
            const float m = std::fabs(px[i]);
            if (m < audit->min_relu_margin) audit->min_relu_margin = m;
        }
    }
    Tensor y(x.shape(), std::move(out));
    if (Tape* t = Tape::active(); t && t->tracks(x)) {
        Tensor cx = x;
        t->attach(y, {&x}, [cx, n](const GradSink& g) {
            if (float* dx = g.grad(0)) {
                const float* up = g.upstream();
                const float* in = cx.data();
                for (std::int64_t i = 0; i < n; ++i) {
                    if (in[i] > 0.0f) dx[i] += up[i];
                }
            }
        });
    }
    return y;
}

static inline float stable_sigmoid(float v) {
    if (v >= 0.0f) {
        return 1.0f / (1.0f + std::exp(-v));
    }
    const float e = std::exp(v);
    return e / (1.0f + e);
}

Tensor sigmoid(const Tensor& x) {
    const std::int64_t n = x.size();
    std::vector<float> out(static_cast<std::size_t>(n));
    const float* px = x.data();
    for (std::int64_t i = 0; i < n; ++i) out[i] = stable_sigmoid(px[i]);
    Tensor y(x.shape(), std::move(out));
    if (Tape* t = Tape::active(); t && t->tracks(x)) {
        Tensor cy = y;
        t->attach(y, {&x}, [cy, n](const GradSink& g) {
            if (float* dx = g.grad(0)) {
                const float* up = g.upstream();
                const float* o = cy.data();
                for (std::int64_t i = 0; i < n; ++i) {
                    dx[i] += up[i] * o[i] * (1.0f - o[i]);
                }
            }
        });
    }
    return y;
}

Tensor softmax_channels(const Tensor& x) {
    const Shape s = x.shape();
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    std::vector<float> out(static_cast<std::size_t>(x.size()));
    const float* px = x.data();
    for (int n = 0; n < s.n; ++n) {
        const std::int64_t base = static_cast<std::int64_t>(n) * s.c * plane;
        for (std::int64_t p = 0; p < plane; ++p) {
            float m = px[base + p];
            for (int c = 1; c < s.c; ++c) m = std::max(m, px[base + c * plane + p]);
            float denom = 0.0f;
            for (int c = 0; c < s.c; ++c) {
                const float e = std::exp(px[base + c * plane + p] - m);
                out[base + c * plane + p] = e;
                denom += e;
            }
            const float inv = 1.0f / denom;
            for (int c = 0; c < s.c; ++c) out[base + c * plane + p] *= inv;
        }
    }
    Tensor y(s, std::move(out));
    if (Tape* t = Tape::active(); t && t->tracks(x)) {
        Tensor cy = y;
        t->attach(y, {&x}, [cy, s, plane](const GradSink& g) {
            if (float* dx = g.grad(0)) {
                const float* up = g.upstream();
                const float* p0 = cy.data();
                for (int n = 0; n < s.n; ++n) {
                    const std::int64_t base = static_cast<std::int64_t>(n) * s.c * plane;
                    for (std::int64_t p = 0; p < plane; ++p) {
                        float dot = 0.0f;
                        for (int c = 0; c < s.c; ++c) {
                            const std::int64_t i = base + c * plane + p;
                            dot += up[i] * p0[i];
                        }
                        for (int c = 0; c < s.c; ++c) {
                            const std::int64_t i = base + c * plane + p;
                            dx[i] += p0[i] * (up[i] - dot);
                        }
                    }
                }
            }
        });
    }
    return y;
}

BatchNormState make_batchnorm(int channels, float momentum, float eps) {
    BatchNormState s;
    s.gamma = Tensor::full(Shape{1, channels, 1, 1}, 1.0f);
    s.beta = Tensor::zeros(Shape{1, channels, 1, 1});
    s.running_mean = Tensor::zeros(Shape{1, channels, 1, 1});
    s.running_var = Tensor::full(Shape{1, channels, 1, 1}, 1.0f);
    s.momentum = momentum;
    s.eps = eps;
    return s;
}

Tensor batchnorm(const Tensor& x, BatchNormState& s, bool training) {
    const Shape xs = x.shape();
    const int C = xs.c;
    if (s.gamma.size() != C || s.beta.size() != C || s.running_mean.size() != C ||
        s.running_var.size() != C) {
        throw std::invalid_argument("batchnorm: state sized for " +
                                    std::to_string(s.gamma.size()) +
                                    " channels, input has " + std::to_string(C));
    }
    const std::int64_t plane = static_cast<std::int64_t>(xs.h) * xs.w;
    const std::int64_t m_per_chan = static_cast<std::int64_t>(xs.n) * plane;
    if (training && m_per_chan < 2) {
        throw std::invalid_argument(
            "batchnorm: training mode needs n*h*w >= 2 per channel for a variance");
    }

    std::vector<float> mean_v(C), invstd_v(C);
    if (training) {
        std::vector<float> new_mean(C), new_var(C);
        for (int c = 0; c < C; ++c) {
            double acc = 0.0;
            for (int n = 0; n < xs.n; ++n) {
                const float* p = x.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
                float part = 0.0f;
                for (std::int64_t i = 0; i < plane; ++i) part += p[i];
                acc += part;
            }
            const double mu = acc / static_cast<double>(m_per_chan);
            double vacc = 0.0;
            for (int n = 0; n < xs.n; ++n) {
                const float* p = x.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
                float part = 0.0f;
                for (std::int64_t i = 0; i < plane; ++i) {
                    const float d = p[i] - static_cast<float>(mu);
                    part += d * d;
                }
                vacc += part;
            }
            const double var = vacc / static_cast<double>(m_per_chan);
            mean_v[c] = static_cast<float>(mu);
            invstd_v[c] = static_cast<float>(1.0 / std::sqrt(var + s.eps));
            new_mean[c] = static_cast<float>((1.0 - s.momentum) * s.running_mean.data()[c] +
                                             s.momentum * mu);
            new_var[c] = static_cast<float>((1.0 - s.momentum) * s.running_var.data()[c] +
                                            s.momentum * var);
        }
        s.running_mean = Tensor(Shape{1, C, 1, 1}, std::move(new_mean));
        s.running_var = Tensor(Shape{1, C, 1, 1}, std::move(new_var));
    } else {
        for (int c = 0; c < C; ++c) {
            mean_v[c] = s.running_mean.data()[c];
            invstd_v[c] = static_cast<float>(
                1.0 / std::sqrt(static_cast<double>(s.running_var.data()[c]) + s.eps));
        }
    }

    std::vector<float> out(static_cast<std::size_t>(x.size()));
    const float* gam = s.gamma.data();
    const float* bet = s.beta.data();
    for (int n = 0; n < xs.n; ++n) {
        for (int c = 0; c < C; ++c) {
            const float* p = x.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
            float* o = out.data() + (static_cast<std::int64_t>(n) * C + c) * plane;
            const float mu = mean_v[c];
            const float is = invstd_v[c];
            const float gc = gam[c];
            const float bc = bet[c];
            for (std::int64_t i = 0; i < plane; ++i) {
                o[i] = gc * (p[i] - mu) * is + bc;
            }
        }
    }
    Tensor y(xs, std::move(out));

    Tape* t = Tape::active();
    if (t && (t->tracks(x) || t->tracks(s.gamma) || t->tracks(s.beta))) {
        Tensor cx = x, cgam = s.gamma;
        auto mean_c = mean_v;
        auto invstd_c = invstd_v;
        t->attach(y, {&x, &s.gamma, &s.beta},
                  [cx, cgam, mean_c, invstd_c, xs, plane, m_per_chan,
                   training](const GradSink& g) {
                      const int C = xs.c;
                      const float* up = g.upstream();
                      float* dx = g.grad(0);
                      float* dgam = g.grad(1);
                      float* dbet = g.grad(2);
                      for (int c = 0; c < C; ++c) {
                          const float mu = mean_c[c];
                          const float is = invstd_c[c];
                          const float gc = cgam.data()[c];
                          double s1 = 0.0, s2 = 0.0;
                          for (int n = 0; n < xs.n; ++n) {
                              const std::int64_t base =
                                  (static_cast<std::int64_t>(n) * C + c) * plane;
                              const float* u = up + base;
                              const float* xp = cx.data() + base;
                              float p1 = 0.0f, p2 = 0.0f;
                              for (std::int64_t i = 0; i < plane; ++i) {
                                  p1 += u[i];
                                  p2 += u[i] * (xp[i] - mu) * is;
                              }
                              s1 += p1;
                              s2 += p2;
                          }
                          if (dbet) dbet[c] += static_cast<float>(s1);
                          if (dgam) dgam[c] += static_cast<float>(s2);
                          if (dx) {
                              if (training) {
                                  const float m1 =
                                      static_cast<float>(s1 / static_cast<double>(m_per_chan));
                                  const float m2 =
                                      static_cast<float>(s2 / static_cast<double>(m_per_chan));
                                  for (int n = 0; n < xs.n; ++n) {
                                      const std::int64_t base =
                                          (static_cast<std::int64_t>(n) * C + c) * plane;
                                      const float* u = up + base;
                                      const float* xp = cx.data() + base;
                                      float* d = dx + base;
                                      for (std::int64_t i = 0; i < plane; ++i) {
                                          const float xhat = (xp[i] - mu) * is;
                                          d[i] += gc * is * (u[i] - m1 - xhat * m2);
                                      }
                                  }
                              } else {
                                  const float k = gc * is;
                                  for (int n = 0; n < xs.n; ++n) {
                                      const std::int64_t base =
                                          (static_cast<std::int64_t>(n) * C + c) * plane;
                                      const float* u = up + base;
                                      float* d = dx + base;
                                      for (std::int64_t i = 0; i < plane; ++i) {
                                          d[i] += k * u[i];
                                      }
                                  }
                              }
                          }
                      }
                  });
    }
    return y;
}

Tensor upsample_bilinear(const Tensor& x, int factor) {
    if (factor < 2) {
        throw std::invalid_argument("upsample_bilinear: factor must be an integer >= 2");
    }
    const Shape s = x.shape();
    const Shape os{s.n, s.c, s.h * factor, s.w * factor};
    const std::int64_t iplane = static_cast<std::int64_t>(s.h) * s.w;
    const std::int64_t oplane = static_cast<std::int64_t>(os.h) * os.w;

    // align-corners = false source mapping with edge clamping
    const float inv = 1.0f / static_cast<float>(factor);
    std::vector<int> lo_y(os.h), hi_y(os.h), lo_x(os.w), hi_x(os.w);
    std::vector<float> fy(os.h), fx(os.w);
    for (int oy = 0; oy < os.h; ++oy) {
        float sy = (static_cast<float>(oy) + 0.5f) * inv - 0.5f;
        if (sy < 0.0f) sy = 0.0f;
        const int y0 = std::min(static_cast<int>(sy), s.h - 1);
        lo_y[oy] = y0;
        hi_y[oy] = std::min(y0 + 1, s.h - 1);
        fy[oy] = sy - static_cast<float>(y0);
    }
    for (int ox = 0; ox < os.w; ++ox) {
        float sx = (static_cast<float>(ox) + 0.5f) * inv - 0.5f;
        if (sx < 0.0f) sx = 0.0f;
        const int x0 = std::min(static_cast<int>(sx), s.w - 1);
        lo_x[ox] = x0;
        hi_x[ox] = std::min(x0 + 1, s.w - 1);
        fx[ox] = sx - static_cast<float>(x0);
    }

    std::vector<float> out(static_cast<std::size_t>(os.count()));
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(s.n) * s.c; ++pc) {
        const float* ip = x.data() + pc * iplane;
        float* op = out.data() + pc * oplane;
        for (int oy = 0; oy < os.h; ++oy) {
            const float ty = fy[oy];
            const float* r0 = ip + lo_y[oy] * s.w;
            const float* r1 = ip + hi_y[oy] * s.w;
            float* orow = op + static_cast<std::int64_t>(oy) * os.w;
            for (int ox = 0; ox < os.w; ++ox) {
                const float tx = fx[ox];
                const float a = r0[lo_x[ox]] * (1.0f - tx) + r0[hi_x[ox]] * tx;
                const float b = r1[lo_x[ox]] * (1.0f - tx) + r1[hi_x[ox]] * tx;
                orow[ox] = a * (1.0f - ty) + b * ty;
            }
        }
    }
    Tensor y(os, std::move(out));
    if (Tape* t = Tape::active(); t && t->tracks(x)) {
        t->attach(y, {&x},
                  [s, os, iplane, oplane, lo_y, hi_y, lo_x, hi_x, fy, fx](const GradSink& g) {
                      float* dx = g.grad(0);
                      if (!dx) return;
                      const float* up = g.upstream();
                      for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(s.n) * s.c; ++pc) {
                          float* dp = dx + pc * iplane;
                          const float* u = up + pc * oplane;
                          for (int oy = 0; oy < os.h; ++oy) {
                              const float ty = fy[oy];
                              float* d0 = dp + lo_y[oy] * s.w;
                              float* d1 = dp + hi_y[oy] * s.w;
                              const float* urow = u + static_cast<std::int64_t>(oy) * os.w;
                              for (int ox = 0; ox < os.w; ++ox) {
                                  const float tx = fx[ox];
                                  const float g0 = urow[ox] * (1.0f - ty);
                                  const float g1 = urow[ox] * ty;
                                  d0[lo_x[ox]] += g0 * (1.0f - tx);
                                  d0[hi_x[ox]] += g0 * tx;
                                  d1[lo_x[ox]] += g1 * (1.0f - tx);
                                  d1[hi_x[ox]] += g1 * tx;
                              }
                          }
                      }
                  });
    }
    return y;
}

}  // namespace mgfi
