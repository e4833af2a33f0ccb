#include <cmath>
#include <stdexcept>
#include <vector>

#include "mgfi/loss.hpp"

namespace mgfi {

namespace {

inline int clampi(int v, int lo, int hi) { return v < lo ? lo : (v > hi ? hi : v); }

// Separable 5x5 Gaussian with replicated borders.
void gaussian_smooth(const float* in, int h, int w, float sigma, float* out) {
    float k[5];
    float ksum = 0.0f;
    for (int i = -2; i <= 2; ++i) {
        k[i + 2] = std::exp(-static_cast<float>(i * i) / (2.0f * sigma * sigma));
        ksum += k[i + 2];
    }
    for (float& v : k) v /= ksum;

    std::vector<float> tmp(static_cast<std::size_t>(h) * w);
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -2; i <= 2; ++i) {
                acc += k[i + 2] * in[y * w + clampi(x + i, 0, w - 1)];
            }
            tmp[y * w + x] = acc;
        }
    }
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            float acc = 0.0f;
            for (int i = -2; i <= 2; ++i) {
                acc += k[i + 2] * tmp[clampi(y + i, 0, h - 1) * w + x];
            }
            out[y * w + x] = acc;
        }
    }
}

void canny_plane(const float* img, int h, int w, const CannyConfig& cfg,
                 float* out) {
    const std::size_t count = static_cast<std::size_t>(h) * w;
    std::vector<float> smooth(count);
    gaussian_smooth(img, h, w, cfg.sigma, smooth.data());

    // Sobel with replicated borders. y axis points down.
    std::vector<float> mag(count, 0.0f);
    std::vector<std::uint8_t> dir(count, 0);
    float max_mag = 0.0f;
    auto at = [&](int y, int x) {
        return smooth[clampi(y, 0, h - 1) * w + clampi(x, 0, w - 1)];
    };
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float gx = at(y - 1, x + 1) + 2.0f * at(y, x + 1) + at(y + 1, x + 1) -
                             at(y - 1, x - 1) - 2.0f * at(y, x - 1) - at(y + 1, x - 1);
            const float gy = at(y + 1, x - 1) + 2.0f * at(y + 1, x) + at(y + 1, x + 1) -
                             at(y - 1, x - 1) - 2.0f * at(y - 1, x) - at(y - 1, x + 1);
            const float m = std::sqrt(gx * gx + gy * gy);
            mag[y * w + x] = m;
            if (m > max_mag) max_mag = m;
            // quantize to 4 bins: 0=E/W, 1=NE/SW diagonal, 2=N/S, 3=NW/SE diagonal
            float ang = std::atan2(gy, gx) * 57.29577951308232f;  // degrees
            if (ang < 0.0f) ang += 180.0f;
            std::uint8_t d;
            if (ang < 22.5f || ang >= 157.5f) {
                d = 0;
            } else if (ang < 67.5f) {
                d = 1;
            } else if (ang < 112.5f) {
                d = 2;
            } else {
                d = 3;
            }
            dir[y * w + x] = d;
        }
    }

    std::fill(out, out + count, 0.0f);
    if (max_mag <= 1e-12f) return;  // flat image: no edges

    // Non-maximum suppression; strict comparison against the first neighbour
    // breaks the two-pixel ties a symmetric step produces.
    auto mag_at = [&](int y, int x) {
        if (y < 0 || y >= h || x < 0 || x >= w) return 0.0f;
        return mag[y * w + x];
    };
    // Neighbour pairs along the gradient line per direction bin (gy is
    // positive downward): E/W, main diagonal, N/S, anti-diagonal.
    std::vector<std::uint8_t> nms(count, 0);
    static const int dy1[4] = {0, -1, -1, -1};
    static const int dx1[4] = {-1, -1, 0, 1};
    static const int dy2[4] = {0, 1, 1, 1};
    static const int dx2[4] = {1, 1, 0, -1};
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            const float m = mag[y * w + x];
            const int d = dir[y * w + x];
            const float n1 = mag_at(y + dy1[d], x + dx1[d]);
            const float n2 = mag_at(y + dy2[d], x + dx2[d]);
            if (m > n1 && m >= n2) nms[y * w + x] = 1;
        }
    }

    const float high = cfg.high_fraction * max_mag;
    const float low = cfg.low_fraction * max_mag;
    // 2 = strong, 1 = weak candidate
    std::vector<std::uint8_t> cls(count, 0);
    std::vector<std::int32_t> stack;
    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            if (!nms[y * w + x]) continue;
            const float m = mag[y * w + x];
            if (m >= high) {
                cls[y * w + x] = 2;
                stack.push_back(y * w + x);
            } else if (m >= low) {
                cls[y * w + x] = 1;
            }
        }
    }
    // hysteresis: grow from strong pixels through weak ones, 8-connected
    while (!stack.empty()) {
        const int idx = stack.back();
        stack.pop_back();
        out[idx] = 1.0f;
        const int y = idx / w;
        const int x = idx % w;
        for (int ddy = -1; ddy <= 1; ++ddy) {
            for (int ddx = -1; ddx <= 1; ++ddx) {
                const int ny = y + ddy;
                const int nx = x + ddx;
                if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
                const int nidx = ny * w + nx;
                if (cls[nidx] == 1 && out[nidx] == 0.0f) {
                    cls[nidx] = 2;
                    stack.push_back(nidx);
                }
            }
        }
    }
}

}  // namespace

BoundaryMask canny(const Tensor& img, const CannyConfig& cfg) {
    const Shape& s = img.shape();
    if (s.c != 1) {
        throw std::invalid_argument("canny: expects a single-channel image, got " +
                                    to_string(s));
    }
    if (!(cfg.low_fraction > 0.0f && cfg.low_fraction < cfg.high_fraction &&
          cfg.high_fraction <= 1.0f)) {
        throw std::invalid_argument("canny: thresholds must satisfy 0 < low < high <= 1");
    }
    Tensor out = Tensor::zeros(s);
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    for (int n = 0; n < s.n; ++n) {
        canny_plane(img.data() + n * plane, s.h, s.w, cfg,
                    out.mutable_data() + n * plane);
    }
    return BoundaryMask{out};
}

BoundaryMask boundary_from_labels(const LabelMask& labels, const CannyConfig& cfg) {
    const Tensor& t = labels.values;
    Tensor gray = Tensor::zeros(t.shape());
    float max_v = 0.0f;
    for (std::int64_t i = 0; i < t.size(); ++i) max_v = std::max(max_v, t.data()[i]);
    const float scale = max_v > 0.0f ? 255.0f / max_v : 0.0f;
    for (std::int64_t i = 0; i < t.size(); ++i) {
        gray.mutable_data()[i] = t.data()[i] * scale;
    }
    return canny(gray, cfg);
}

}  // namespace mgfi
