#include "mgfi/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <vector>

#include <json.hpp>

namespace mgfi {

using nlohmann::json;

std::string model_config_to_json(const ModelConfig& c) {
    json j;
    j["input_channels"] = c.input_channels;
    j["class_count"] = c.class_count;
    j["stage_channels"] = c.stage_channels;
    j["blocks_per_stage"] = c.blocks_per_stage;
    j["mgfi_mid_channels"] = c.mgfi_mid_channels;
    j["atrous_dilation"] = c.atrous_dilation;
    j["lambda_boundary"] = c.lambda_boundary;
    j["seed"] = c.seed;
    j["no_mgfi_upper"] = c.no_mgfi_upper;
    j["no_mgfi_lower"] = c.no_mgfi_lower;
    j["no_mgfi"] = c.no_mgfi;
    j["no_ae"] = c.no_ae;
    return j.dump();
}

ModelConfig model_config_from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("model config: malformed JSON: ") + e.what());
    }
    ModelConfig c;
    if (j.contains("input_channels")) c.input_channels = j["input_channels"].get<int>();
    if (j.contains("class_count")) c.class_count = j["class_count"].get<int>();
    if (j.contains("stage_channels")) {
        c.stage_channels = j["stage_channels"].get<std::vector<int>>();
    }
    if (j.contains("blocks_per_stage")) c.blocks_per_stage = j["blocks_per_stage"].get<int>();
    if (j.contains("mgfi_mid_channels")) c.mgfi_mid_channels = j["mgfi_mid_channels"].get<int>();
    if (j.contains("atrous_dilation")) c.atrous_dilation = j["atrous_dilation"].get<int>();
    if (j.contains("lambda_boundary")) c.lambda_boundary = j["lambda_boundary"].get<float>();
    if (j.contains("seed")) c.seed = j["seed"].get<std::uint64_t>();
    if (j.contains("no_mgfi_upper")) c.no_mgfi_upper = j["no_mgfi_upper"].get<bool>();
    if (j.contains("no_mgfi_lower")) c.no_mgfi_lower = j["no_mgfi_lower"].get<bool>();
    if (j.contains("no_mgfi")) c.no_mgfi = j["no_mgfi"].get<bool>();
    if (j.contains("no_ae")) c.no_ae = j["no_ae"].get<bool>();
    c.validate();
    return c;
}

namespace {

void put_u32(std::vector<char>& out, std::uint32_t v) {
    char b[4];
    b[0] = static_cast<char>(v & 0xFF);
    b[1] = static_cast<char>((v >> 8) & 0xFF);
    b[2] = static_cast<char>((v >> 16) & 0xFF);
    b[3] = static_cast<char>((v >> 24) & 0xFF);
    out.insert(out.end(), b, b + 4);
}

struct Reader {
    std::vector<char> bytes;
    std::size_t pos = 0;
    std::string path;

    [[noreturn]] void fail(const std::string& what) const {
        throw std::runtime_error(path + ": " + what);
    }
    void need(std::size_t n, const char* what) {
        if (bytes.size() - pos < n) {
            fail(std::string("truncated checkpoint while reading ") + what);
        }
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        const unsigned char* p = reinterpret_cast<const unsigned char*>(bytes.data() + pos);
        pos += 4;
        return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
               (static_cast<std::uint32_t>(p[2]) << 16) |
               (static_cast<std::uint32_t>(p[3]) << 24);
    }
    std::string str(std::size_t n, const char* what) {
        need(n, what);
        std::string s(bytes.data() + pos, n);
        pos += n;
        return s;
    }
};

}  // namespace

void save_checkpoint(const std::string& path, const ModelConfig& config,
                     NetworkParams& params) {
    std::vector<std::pair<std::string, Tensor>> tensors;
    for_each_param(params, config, [&tensors](const std::string& name, Tensor& t) {
        tensors.emplace_back(name, t);
    });
    for_each_buffer(params, config, [&tensors](const std::string& name, Tensor& t) {
        tensors.emplace_back(name, t);
    });

    std::vector<char> out;
    out.insert(out.end(), {'M', 'G', 'F', 'I'});
    put_u32(out, 1);
    const std::string cfg = model_config_to_json(config);
    put_u32(out, static_cast<std::uint32_t>(cfg.size()));
    out.insert(out.end(), cfg.begin(), cfg.end());
    put_u32(out, static_cast<std::uint32_t>(tensors.size()));
    for (const auto& [name, t] : tensors) {
        put_u32(out, static_cast<std::uint32_t>(name.size()));
        out.insert(out.end(), name.begin(), name.end());
        put_u32(out, 4);
        const Shape& s = t.shape();
        put_u32(out, static_cast<std::uint32_t>(s.n));
        put_u32(out, static_cast<std::uint32_t>(s.c));
        put_u32(out, static_cast<std::uint32_t>(s.h));
        put_u32(out, static_cast<std::uint32_t>(s.w));
        const std::size_t nbytes = static_cast<std::size_t>(t.size()) * 4;
        const std::size_t at = out.size();
        out.resize(at + nbytes);
        std::memcpy(out.data() + at, t.data(), nbytes);
    }

    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open for writing");
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw std::runtime_error(path + ": write failed");
}

std::pair<ModelConfig, NetworkParams> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error(path + ": cannot open checkpoint");
    Reader r;
    r.path = path;
    r.bytes.assign(std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>());

    const std::string magic = r.str(4, "magic");
    if (magic != "MGFI") r.fail("bad magic");
    const std::uint32_t version = r.u32("version");
    if (version != 1) r.fail("unsupported version " + std::to_string(version));
    const std::uint32_t cfg_len = r.u32("config length");
    const std::string cfg_json = r.str(cfg_len, "config JSON");
    ModelConfig config = model_config_from_json(cfg_json);

    std::map<std::string, Tensor> table;
    const std::uint32_t count = r.u32("tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = r.u32("tensor name length");
        const std::string name = r.str(name_len, "tensor name");
        const std::uint32_t ndim = r.u32("tensor rank");
        if (ndim != 4) r.fail("tensor '" + name + "' has unsupported rank");
        const int n = static_cast<int>(r.u32("dim"));
        const int c = static_cast<int>(r.u32("dim"));
        const int h = static_cast<int>(r.u32("dim"));
        const int w = static_cast<int>(r.u32("dim"));
        const Shape s{n, c, h, w};
        const std::size_t nbytes = static_cast<std::size_t>(s.count()) * 4;
        r.need(nbytes, "tensor payload");
        std::vector<float> vals(static_cast<std::size_t>(s.count()));
        std::memcpy(vals.data(), r.bytes.data() + r.pos, nbytes);
        r.pos += nbytes;
        if (!table.emplace(name, Tensor(s, std::move(vals))).second) {
            r.fail("duplicate tensor '" + name + "'");
        }
    }

    NetworkParams params = param_init(config, config.seed);
    std::size_t used = 0;
    auto restore = [&table, &used, &r](const std::string& name, Tensor& t) {
        auto it = table.find(name);
        if (it == table.end()) r.fail("missing tensor '" + name + "'");
        if (it->second.shape() != t.shape()) {
            r.fail("tensor '" + name + "' has shape " + to_string(it->second.shape()) +
                   ", model expects " + to_string(t.shape()));
        }
        t = it->second;
        ++used;
    };
    for_each_param(params, config, restore);
    for_each_buffer(params, config, restore);
    if (used != table.size()) {
        r.fail("checkpoint holds " + std::to_string(table.size()) +
               " tensors, model uses " + std::to_string(used));
    }
    return {config, std::move(params)};
}

}  // namespace mgfi
