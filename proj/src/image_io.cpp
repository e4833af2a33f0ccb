#include "mgfi/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>
#include <vector>

namespace mgfi {

namespace {

struct PnmParser {
    std::vector<unsigned char> bytes;
    std::size_t pos = 0;
    std::string path;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(path + ": " + what + " at byte offset " +
                                 std::to_string(pos));
    }

    int peek() const {
        return pos < bytes.size() ? static_cast<int>(bytes[pos]) : -1;
    }
    int get() {
        if (pos >= bytes.size()) fail("unexpected end of file");
        return static_cast<int>(bytes[pos++]);
    }

    static bool is_space(int c) {
        return c == ' ' || c == '\t' || c == '\r' || c == '\n';
    }

    // whitespace and '#' comments between header tokens
    void skip_separators() {
        for (;;) {
            while (is_space(peek())) ++pos;
            if (peek() == '#') {
                while (peek() != '\n' && peek() != -1) ++pos;
            } else {
                return;
            }
        }
    }

    int read_number() {
        skip_separators();
        if (peek() < '0' || peek() > '9') fail("expected a decimal number in header");
        long v = 0;
        while (peek() >= '0' && peek() <= '9') {
            v = v * 10 + (get() - '0');
            if (v > 1000000) fail("header number out of range");
        }
        return static_cast<int>(v);
    }
};

}  // namespace

Tensor read_image(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error(path + ": cannot open file");
    }
    PnmParser p;
    p.path = path;
    p.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

    if (p.bytes.size() < 2 || p.bytes[0] != 'P' ||
        (p.bytes[1] != '5' && p.bytes[1] != '6')) {
        p.fail("not a binary PGM (P5) or PPM (P6) file");
    }
    const int channels = p.bytes[1] == '5' ? 1 : 3;
    p.pos = 2;
    const int w = p.read_number();
    const int h = p.read_number();
    const int maxval = p.read_number();
    if (w < 1 || h < 1) p.fail("non-positive image dimensions");
    if (maxval != 255) p.fail("unsupported maxval (only 255)");
    // exactly one whitespace byte separates the header from the payload
    if (!PnmParser::is_space(p.peek())) p.fail("missing whitespace before payload");
    p.get();

    const std::size_t need = static_cast<std::size_t>(w) * h * channels;
    if (p.bytes.size() - p.pos < need) {
        throw std::runtime_error(path + ": truncated payload, expected " +
                                 std::to_string(need) + " bytes from byte offset " +
                                 std::to_string(p.pos) + ", have " +
                                 std::to_string(p.bytes.size() - p.pos));
    }

    Tensor out(1, channels, h, w);
    float* d = out.mutable_data();
    const unsigned char* src = p.bytes.data() + p.pos;
    const std::int64_t plane = static_cast<std::int64_t>(h) * w;
    // interleaved payload -> channel planes
    for (std::int64_t i = 0; i < plane; ++i) {
        for (int c = 0; c < channels; ++c) {
            d[c * plane + i] = static_cast<float>(src[i * channels + c]) / 255.0f;
        }
    }
    return out;
}

void write_image(const std::string& path, const Tensor& img) {
    const Shape& s = img.shape();
    if (s.n != 1 || (s.c != 1 && s.c != 3)) {
        throw std::invalid_argument("write_image: expected (1,1,h,w) or (1,3,h,w), got " +
                                    to_string(s));
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) {
        throw std::runtime_error(path + ": cannot open file for writing");
    }
    f << (s.c == 1 ? "P5" : "P6") << "\n" << s.w << " " << s.h << "\n255\n";
    const std::int64_t plane = static_cast<std::int64_t>(s.h) * s.w;
    std::vector<unsigned char> payload(static_cast<std::size_t>(plane) * s.c);
    const float* d = img.data();
    for (std::int64_t i = 0; i < plane; ++i) {
        for (int c = 0; c < s.c; ++c) {
            float v = d[c * plane + i] * 255.0f;
            v = std::nearbyint(v);
            if (v < 0.0f) v = 0.0f;
            if (v > 255.0f) v = 255.0f;
            payload[i * s.c + c] = static_cast<unsigned char>(v);
        }
    }
    f.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size()));
    if (!f) {
        throw std::runtime_error(path + ": write failed");
    }
}

}  // namespace mgfi
