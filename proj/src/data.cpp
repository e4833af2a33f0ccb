#include "mgfi/data.hpp"

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>

#include "mgfi/image_io.hpp"

#include <json.hpp>

namespace mgfi {

namespace fs = std::filesystem;
using nlohmann::json;

void SynthConfig::validate() const {
    if (count < 1) throw std::invalid_argument("SynthConfig: count must be >= 1");
    if (size < 32 || size % 32 != 0) {
        throw std::invalid_argument("SynthConfig: size must be a positive multiple of 32");
    }
    if (channels != 1 && channels != 3) {
        throw std::invalid_argument("SynthConfig: channels must be 1 or 3");
    }
    if (blob_count_min < 1 || blob_count_max < blob_count_min) {
        throw std::invalid_argument("SynthConfig: bad blob count range");
    }
    if (!(radius_min > 0.0f && radius_max >= radius_min)) {
        throw std::invalid_argument("SynthConfig: bad radius range");
    }
    if (!(contrast > 0.0f && contrast <= 1.0f)) {
        throw std::invalid_argument("SynthConfig: contrast must be in (0,1]");
    }
    if (noise_sigma < 0.0f || irregularity < 0.0f) {
        throw std::invalid_argument("SynthConfig: sigma/irregularity must be >= 0");
    }
}

namespace {

struct Blob {
    float cx, cy, r0, amp, phase;
    int lobes;
};

}  // namespace

std::vector<Sample> synth_generate(const SynthConfig& cfg) {
    cfg.validate();
    std::vector<Sample> out;
    out.reserve(static_cast<std::size_t>(cfg.count));
    const int sz = cfg.size;
    const float base = 0.4f;

    for (int idx = 0; idx < cfg.count; ++idx) {
        Rng rng(derive_seed(cfg.seed, static_cast<std::uint64_t>(idx)));
        const int blobs = rng.uniform_int(cfg.blob_count_min, cfg.blob_count_max);
        std::vector<Blob> shapes;
        for (int b = 0; b < blobs; ++b) {
            Blob s;
            s.cx = static_cast<float>(rng.uniform(0.25 * sz, 0.75 * sz));
            s.cy = static_cast<float>(rng.uniform(0.25 * sz, 0.75 * sz));
            s.r0 = static_cast<float>(rng.uniform(cfg.radius_min, cfg.radius_max));
            s.amp = static_cast<float>(rng.uniform(0.0, cfg.irregularity));
            s.lobes = rng.uniform_int(2, 5);
            s.phase = static_cast<float>(rng.uniform(0.0, 6.283185307179586));
            shapes.push_back(s);
        }

        Tensor label(1, 1, sz, sz);
        float* lm = label.mutable_data();
        for (int y = 0; y < sz; ++y) {
            for (int x = 0; x < sz; ++x) {
                bool inside = false;
                for (const Blob& s : shapes) {
                    const float dx = static_cast<float>(x) + 0.5f - s.cx;
                    const float dy = static_cast<float>(y) + 0.5f - s.cy;
                    const float d = std::sqrt(dx * dx + dy * dy);
                    const float theta = std::atan2(dy, dx);
                    const float r = s.r0 * (1.0f + s.amp * std::sin(s.lobes * theta + s.phase));
                    if (d <= r) {
                        inside = true;
                        break;
                    }
                }
                lm[y * sz + x] = inside ? 1.0f : 0.0f;
            }
        }

        Tensor image(1, cfg.channels, sz, sz);
        float* im = image.mutable_data();
        const std::int64_t plane = static_cast<std::int64_t>(sz) * sz;
        for (int c = 0; c < cfg.channels; ++c) {
            for (std::int64_t i = 0; i < plane; ++i) {
                float v = base + cfg.contrast * lm[i];
                v += static_cast<float>(rng.normal(0.0, cfg.noise_sigma));
                im[c * plane + i] = std::clamp(v, 0.0f, 1.0f);
            }
        }

        Sample s;
        s.image = image;
        s.label = LabelMask{label};
        out.push_back(std::move(s));
    }
    return out;
}

namespace {

Tensor rotate90_tensor(const Tensor& t, int k) {
    const Shape s = t.shape();
    const Shape os = (k % 2 == 0) ? s : Shape{s.n, s.c, s.w, s.h};
    Tensor out = Tensor::zeros(os);
    const float* src = t.data();
    float* dst = out.mutable_data();
    const std::int64_t iplane = static_cast<std::int64_t>(s.h) * s.w;
    const std::int64_t oplane = static_cast<std::int64_t>(os.h) * os.w;
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(s.n) * s.c; ++pc) {
        const float* ip = src + pc * iplane;
        float* op = dst + pc * oplane;
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) {
                int oy, ox;
                switch (k & 3) {
                    case 1:  // 90 degrees counter-clockwise
                        oy = s.w - 1 - x;
                        ox = y;
                        break;
                    case 2:
                        oy = s.h - 1 - y;
                        ox = s.w - 1 - x;
                        break;
                    case 3:
                        oy = x;
                        ox = s.h - 1 - y;
                        break;
                    default:
                        oy = y;
                        ox = x;
                        break;
                }
                op[oy * os.w + ox] = ip[y * s.w + x];
            }
        }
    }
    return out;
}

Tensor transpose_tensor(const Tensor& t) {
    const Shape s = t.shape();
    const Shape os{s.n, s.c, s.w, s.h};
    Tensor out = Tensor::zeros(os);
    const float* src = t.data();
    float* dst = out.mutable_data();
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(s.n) * s.c; ++pc) {
        const float* ip = src + pc * plane;
        float* op = dst + pc * plane;
        for (int y = 0; y < s.h; ++y) {
            for (int x = 0; x < s.w; ++x) op[x * s.h + y] = ip[y * s.w + x];
        }
    }
    return out;
}

// align-corners-false resize with edge clamping
Tensor resize_tensor(const Tensor& t, int oh, int ow, bool nearest) {
    const Shape s = t.shape();
    Tensor out = Tensor::zeros(Shape{s.n, s.c, oh, ow});
    const float sy_scale = static_cast<float>(s.h) / static_cast<float>(oh);
    const float sx_scale = static_cast<float>(s.w) / static_cast<float>(ow);
    const float* src = t.data();
    float* dst = out.mutable_data();
    const std::int64_t iplane = static_cast<std::int64_t>(s.h) * s.w;
    const std::int64_t oplane = static_cast<std::int64_t>(oh) * ow;
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(s.n) * s.c; ++pc) {
        const float* ip = src + pc * iplane;
        float* op = dst + pc * oplane;
        for (int oy = 0; oy < oh; ++oy) {
            const float sy = (static_cast<float>(oy) + 0.5f) * sy_scale - 0.5f;
            for (int ox = 0; ox < ow; ++ox) {
                const float sx = (static_cast<float>(ox) + 0.5f) * sx_scale - 0.5f;
                if (nearest) {
                    const int ny = std::clamp(static_cast<int>(std::floor(sy + 0.5f)), 0, s.h - 1);
                    const int nx = std::clamp(static_cast<int>(std::floor(sx + 0.5f)), 0, s.w - 1);
                    op[oy * ow + ox] = ip[ny * s.w + nx];
                } else {
                    const float cy = std::clamp(sy, 0.0f, static_cast<float>(s.h - 1));
                    const float cx = std::clamp(sx, 0.0f, static_cast<float>(s.w - 1));
                    const int y0 = std::min(static_cast<int>(cy), s.h - 1);
                    const int x0 = std::min(static_cast<int>(cx), s.w - 1);
                    const int y1 = std::min(y0 + 1, s.h - 1);
                    const int x1 = std::min(x0 + 1, s.w - 1);
                    const float fy = cy - static_cast<float>(y0);
                    const float fx = cx - static_cast<float>(x0);
                    const float a = ip[y0 * s.w + x0] * (1.0f - fx) + ip[y0 * s.w + x1] * fx;
                    const float b = ip[y1 * s.w + x0] * (1.0f - fx) + ip[y1 * s.w + x1] * fx;
                    op[oy * ow + ox] = a * (1.0f - fy) + b * fy;
                }
            }
        }
    }
    return out;
}

Tensor crop_tensor(const Tensor& t, int y0, int x0, int ch, int cw) {
    const Shape s = t.shape();
    Tensor out = Tensor::zeros(Shape{s.n, s.c, ch, cw});
    const float* src = t.data();
    float* dst = out.mutable_data();
    const std::int64_t iplane = static_cast<std::int64_t>(s.h) * s.w;
    const std::int64_t oplane = static_cast<std::int64_t>(ch) * cw;
    for (std::int64_t pc = 0; pc < static_cast<std::int64_t>(s.n) * s.c; ++pc) {
        for (int y = 0; y < ch; ++y) {
            std::copy(src + pc * iplane + (y0 + y) * s.w + x0,
                      src + pc * iplane + (y0 + y) * s.w + x0 + cw,
                      dst + pc * oplane + static_cast<std::int64_t>(y) * cw);
        }
    }
    return out;
}

}  // namespace

Sample rotate90(const Sample& s, int quarter_turns) {
    Sample out;
    out.image = rotate90_tensor(s.image, quarter_turns);
    out.label = LabelMask{rotate90_tensor(s.label.values, quarter_turns)};
    return out;
}

Sample transpose_hw(const Sample& s) {
    Sample out;
    out.image = transpose_tensor(s.image);
    out.label = LabelMask{transpose_tensor(s.label.values)};
    return out;
}

Sample center_crop_resize(const Sample& s, int numerator, int denominator) {
    const Shape sh = s.image.shape();
    const int ch = std::max(1, sh.h * numerator / denominator);
    const int cw = std::max(1, sh.w * numerator / denominator);
    const int y0 = (sh.h - ch) / 2;
    const int x0 = (sh.w - cw) / 2;
    Sample out;
    out.image = resize_tensor(crop_tensor(s.image, y0, x0, ch, cw), sh.h, sh.w,
                              /*nearest=*/false);
    out.label = LabelMask{resize_tensor(crop_tensor(s.label.values, y0, x0, ch, cw),
                                        sh.h, sh.w, /*nearest=*/true)};
    return out;
}

Sample add_noise(const Sample& s, float sigma, Rng& rng) {
    Sample out;
    Tensor img = Tensor::zeros(s.image.shape());
    const float* src = s.image.data();
    float* dst = img.mutable_data();
    for (std::int64_t i = 0; i < img.size(); ++i) {
        dst[i] = std::clamp(src[i] + static_cast<float>(rng.normal(0.0, sigma)),
                            0.0f, 1.0f);
    }
    out.image = img;
    out.label = s.label;
    return out;
}

Sample augment(const Sample& s, Rng& rng) {
    Sample cur = s;
    cur.boundary = BoundaryMask{};  // geometry changes invalidate it
    if (rng.coin()) cur = center_crop_resize(cur, 7, 8);
    if (rng.coin()) cur = rotate90(cur, rng.uniform_int(1, 3));
    if (rng.coin()) cur = transpose_hw(cur);
    if (rng.coin()) cur = add_noise(cur, 0.02f, rng);
    return cur;
}

SplitIndices split(int count, std::uint64_t seed) {
    std::vector<int> order(static_cast<std::size_t>(count));
    for (int i = 0; i < count; ++i) order[i] = i;
    Rng rng(seed);
    for (int i = count - 1; i > 0; --i) {
        const int j = rng.uniform_int(0, i);
        std::swap(order[i], order[j]);
    }
    const int n_val = count / 10;
    const int n_test = count / 10;
    const int n_train = count - n_val - n_test;
    SplitIndices out;
    out.train.assign(order.begin(), order.begin() + n_train);
    out.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
    out.test.assign(order.begin() + n_train + n_val, order.end());
    return out;
}

namespace {

std::string index_name(int i, const char* ext) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%04d%s", i, ext);
    return buf;
}

// Class ids are stored directly as gray byte values; write_image multiplies
// by 255, so pre-divide.
Tensor mask_to_bytes(const LabelMask& m) {
    Tensor t = Tensor::zeros(m.values.shape());
    for (std::int64_t i = 0; i < t.size(); ++i) {
        t.mutable_data()[i] = m.values.data()[i] / 255.0f;
    }
    return t;
}

}  // namespace

void write_dataset(const std::string& dir, const std::vector<Sample>& samples,
                   const SplitIndices& split, const SynthConfig& cfg) {
    fs::create_directories(fs::path(dir) / "images");
    fs::create_directories(fs::path(dir) / "masks");
    json manifest;
    manifest["images"] = json::array();
    manifest["masks"] = json::array();
    const char* img_ext = samples.empty() || samples[0].image.shape().c == 3 ? ".ppm" : ".pgm";
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const std::string img_name = index_name(static_cast<int>(i), img_ext);
        const std::string mask_name = index_name(static_cast<int>(i), ".pgm");
        write_image((fs::path(dir) / "images" / img_name).string(), samples[i].image);
        write_image((fs::path(dir) / "masks" / mask_name).string(),
                    mask_to_bytes(samples[i].label));
        manifest["images"].push_back("images/" + img_name);
        manifest["masks"].push_back("masks/" + mask_name);
    }
    int class_count = 2;
    for (const Sample& s : samples) {
        for (std::int64_t j = 0; j < s.label.values.size(); ++j) {
            class_count = std::max(class_count,
                                   static_cast<int>(s.label.values.data()[j]) + 1);
        }
    }
    manifest["class_count"] = class_count;
    manifest["split"] = {{"train", split.train}, {"val", split.val}, {"test", split.test}};
    manifest["generator"] = {{"count", cfg.count},
                             {"size", cfg.size},
                             {"channels", cfg.channels},
                             {"blob_count_min", cfg.blob_count_min},
                             {"blob_count_max", cfg.blob_count_max},
                             {"radius_min", cfg.radius_min},
                             {"radius_max", cfg.radius_max},
                             {"contrast", cfg.contrast},
                             {"noise_sigma", cfg.noise_sigma},
                             {"irregularity", cfg.irregularity},
                             {"seed", cfg.seed}};
    std::ofstream f(fs::path(dir) / "manifest.json");
    f << manifest.dump(2) << "\n";
    if (!f) throw std::runtime_error(dir + ": failed to write manifest.json");
}

Dataset load_dataset(const std::string& dir) {
    std::ifstream f(fs::path(dir) / "manifest.json");
    if (!f) throw std::runtime_error(dir + ": missing manifest.json");
    json manifest;
    try {
        f >> manifest;
    } catch (const json::exception& e) {
        throw std::runtime_error(dir + ": malformed manifest.json: " + e.what());
    }
    Dataset out;
    const auto& images = manifest.at("images");
    const auto& masks = manifest.at("masks");
    if (images.size() != masks.size()) {
        throw std::runtime_error(dir + ": manifest image/mask lists differ in length");
    }
    int max_class = 1;
    for (std::size_t i = 0; i < images.size(); ++i) {
        Sample s;
        s.image = read_image((fs::path(dir) / images[i].get<std::string>()).string());
        Tensor m = read_image((fs::path(dir) / masks[i].get<std::string>()).string());
        // gray levels back to small integer class ids
        Tensor ids = Tensor::zeros(m.shape());
        for (std::int64_t j = 0; j < m.size(); ++j) {
            const float v = std::nearbyint(m.data()[j] * 255.0f);
            ids.mutable_data()[j] = v;
            max_class = std::max(max_class, static_cast<int>(v));
        }
        s.label = LabelMask{ids};
        out.samples.push_back(std::move(s));
    }
    out.class_count = manifest.contains("class_count")
                          ? manifest["class_count"].get<int>()
                          : max_class + 1;
    const auto& sp = manifest.at("split");
    out.split.train = sp.at("train").get<std::vector<int>>();
    out.split.val = sp.at("val").get<std::vector<int>>();
    out.split.test = sp.at("test").get<std::vector<int>>();
    return out;
}

}  // namespace mgfi
