#include "vsl/checkpoint.h"

#include <bit>
#include <cstring>
#include <fstream>

#include <json.hpp>

#include "vsl/errors.h"

namespace vsl {

using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'V', 'S', 'L', 'C'};
constexpr uint32_t kFormatVersion = 1;

void put_u32le(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

uint32_t get_u32le(const unsigned char* p) {
    return static_cast<uint32_t>(p[0]) | (static_cast<uint32_t>(p[1]) << 8) |
           (static_cast<uint32_t>(p[2]) << 16) | (static_cast<uint32_t>(p[3]) << 24);
}

json config_to_json(const EncoderConfig& c) {
    return json{{"image_encoder", c.image_encoder == ImageEncoderKind::conv ? "conv" : "vit"},
                {"embed_dim", c.embed_dim},
                {"image_size", c.image_size},
                {"conv_channels", c.conv_channels},
                {"grid", c.grid},
                {"patch_size", c.patch_size},
                {"vit_dim", c.vit_dim},
                {"vit_layers", c.vit_layers},
                {"vit_heads", c.vit_heads},
                {"vit_mlp_hidden", c.vit_mlp_hidden},
                {"sample_rate", c.sample_rate},
                {"n_mels", c.n_mels},
                {"win_length", c.win_length},
                {"hop_length", c.hop_length},
                {"log_floor", c.log_floor},
                {"audio_channels", c.audio_channels},
                {"seed", c.seed}};
}

EncoderConfig config_from_json(const json& j) {
    EncoderConfig c;
    const std::string kind = j.at("image_encoder").get<std::string>();
    if (kind == "conv") {
        c.image_encoder = ImageEncoderKind::conv;
    } else if (kind == "vit") {
        c.image_encoder = ImageEncoderKind::vit;
    } else {
        throw ParseError("checkpoint: unknown image_encoder kind '" + kind + "'");
    }
    c.embed_dim = j.at("embed_dim").get<int>();
    c.image_size = j.at("image_size").get<int>();
    c.conv_channels = j.at("conv_channels").get<std::vector<int>>();
    c.grid = j.at("grid").get<int>();
    c.patch_size = j.at("patch_size").get<int>();
    c.vit_dim = j.at("vit_dim").get<int>();
    c.vit_layers = j.at("vit_layers").get<int>();
    c.vit_heads = j.at("vit_heads").get<int>();
    c.vit_mlp_hidden = j.at("vit_mlp_hidden").get<int>();
    c.sample_rate = j.at("sample_rate").get<int>();
    c.n_mels = j.at("n_mels").get<int>();
    c.win_length = j.at("win_length").get<int>();
    c.hop_length = j.at("hop_length").get<int>();
    c.log_floor = j.at("log_floor").get<double>();
    c.audio_channels = j.at("audio_channels").get<std::vector<int>>();
    c.seed = j.at("seed").get<uint64_t>();
    return c;
}

}  // namespace

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
    std::string buf;
    buf.append(kMagic, 4);
    put_u32le(buf, kFormatVersion);
    const std::string header = json{{"format_version", kFormatVersion},
                                    {"config", config_to_json(ckpt.config)}}
                                   .dump();
    put_u32le(buf, static_cast<uint32_t>(header.size()));
    buf += header;
    put_u32le(buf, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, tensor] : ckpt.tensors) {
        put_u32le(buf, static_cast<uint32_t>(name.size()));
        buf += name;
        put_u32le(buf, static_cast<uint32_t>(tensor.shape.size()));
        for (int d : tensor.shape) put_u32le(buf, static_cast<uint32_t>(d));
        for (double v : tensor.v) {
            put_u32le(buf, std::bit_cast<uint32_t>(static_cast<float>(v)));
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("save_checkpoint: cannot open " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("save_checkpoint: short write to " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("load_checkpoint: cannot open " + path.string());
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    size_t off = 0;
    const auto need = [&](size_t n) {
        if (off + n > raw.size()) {
            throw ParseError("load_checkpoint: " + path.string() + " truncated");
        }
    };
    need(12);
    if (std::memcmp(raw.data(), kMagic, 4) != 0) {
        throw ParseError("load_checkpoint: " + path.string() + " has bad magic bytes");
    }
    off = 4;
    const uint32_t version = get_u32le(p + off);
    off += 4;
    if (version != kFormatVersion) {
        throw ParseError("load_checkpoint: unsupported format version " +
                         std::to_string(version));
    }
    const uint32_t header_len = get_u32le(p + off);
    off += 4;
    need(header_len);
    json header = json::parse(raw.substr(off, header_len), nullptr, false);
    if (header.is_discarded()) throw ParseError("load_checkpoint: malformed JSON header");
    off += header_len;

    Checkpoint ckpt;
    try {
        ckpt.config = config_from_json(header.at("config"));
    } catch (const json::exception& e) {
        throw ParseError(std::string("load_checkpoint: bad header: ") + e.what());
    }

    need(4);
    const uint32_t count = get_u32le(p + off);
    off += 4;
    for (uint32_t i = 0; i < count; ++i) {
        need(4);
        const uint32_t name_len = get_u32le(p + off);
        off += 4;
        need(name_len);
        std::string name = raw.substr(off, name_len);
        off += name_len;
        need(4);
        const uint32_t ndim = get_u32le(p + off);
        off += 4;
        std::vector<int> shape(ndim);
        need(static_cast<size_t>(ndim) * 4);
        for (uint32_t d = 0; d < ndim; ++d) {
            shape[d] = static_cast<int>(get_u32le(p + off));
            off += 4;
        }
        Tensor t(shape);
        need(t.v.size() * 4);
        for (double& v : t.v) {
            v = static_cast<double>(std::bit_cast<float>(get_u32le(p + off)));
            off += 4;
        }
        ckpt.tensors.emplace(std::move(name), std::move(t));
    }
    return ckpt;
}

void save_model(const ToyModel& model, const std::filesystem::path& path) {
    Checkpoint ckpt;
    ckpt.config = model.cfg;
    model.visit_params([&ckpt](const std::string& name, const Tensor* t) {
        ckpt.tensors.emplace(name, *t);
    });
    save_checkpoint(ckpt, path);
}

ToyModel load_model(const std::filesystem::path& path) {
    const Checkpoint ckpt = load_checkpoint(path);
    ToyModel model = ToyModel::init(ckpt.config);
    model.visit_params([&ckpt, &path](const std::string& name, Tensor* t) {
        auto it = ckpt.tensors.find(name);
        if (it == ckpt.tensors.end()) {
            throw ParseError("load_model: " + path.string() + " is missing tensor '" + name +
                             "'");
        }
        if (it->second.shape != t->shape) {
            throw ParseError("load_model: tensor '" + name + "' has unexpected shape");
        }
        t->v = it->second.v;
    });
    return model;
}

}  // namespace vsl
