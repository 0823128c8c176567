#include "vsl/heatmap.h"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "vsl/errors.h"

namespace vsl {
namespace {

constexpr char kMagic[4] = {'H', 'M', 'P', '1'};

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

}  // namespace

Heatmap make_heatmap(int width, int height, float fill) {
    Heatmap h;
    h.width = width;
    h.height = height;
    h.values.assign(static_cast<size_t>(width) * height, fill);
    return h;
}

bool heatmap_invariants_ok(const Heatmap& h) {
    if (h.width <= 0 || h.height <= 0) return false;
    if (h.values.size() != static_cast<size_t>(h.width) * h.height) return false;
    if (!h.normalized) return true;
    const auto [lo, hi] = std::minmax_element(h.values.begin(), h.values.end());
    if (*lo < 0.0f || *hi > 1.0f) return false;
    return (*lo == 0.0f && *hi == 1.0f) || (*lo == 0.0f && *hi == 0.0f);
}

void write_heatmap(const Heatmap& h, const std::filesystem::path& path) {
    if (!heatmap_invariants_ok(h)) {
        throw ContractError("write_heatmap: heatmap violates its invariants");
    }
    std::string buf;
    buf.reserve(12 + h.values.size() * 4);
    buf.append(kMagic, 4);
    put_u32le(buf, static_cast<uint32_t>(h.width));
    put_u32le(buf, static_cast<uint32_t>(h.height));
    for (float v : h.values) {
        put_u32le(buf, std::bit_cast<uint32_t>(v));
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("write_heatmap: cannot open " + path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("write_heatmap: short write to " + path.string());
}

Heatmap read_heatmap(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("read_heatmap: cannot open " + path.string());
    std::string raw((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    if (raw.size() < 12) throw ParseError("read_heatmap: " + path.string() + " truncated header");
    if (std::memcmp(raw.data(), kMagic, 4) != 0) {
        throw ParseError("read_heatmap: " + path.string() + " has bad magic bytes");
    }
    const auto* p = reinterpret_cast<const unsigned char*>(raw.data());
    const uint32_t w = get_u32le(p + 4);
    const uint32_t h = get_u32le(p + 8);
    if (w == 0 || h == 0) throw ParseError("read_heatmap: " + path.string() + " has empty dims");
    const uint64_t n = static_cast<uint64_t>(w) * h;
    if (raw.size() != 12 + n * 4) {
        throw ParseError("read_heatmap: " + path.string() + " payload length mismatch (declared " +
                         std::to_string(n) + " values, file holds " +
                         std::to_string((raw.size() - 12) / 4) + ")");
    }
    Heatmap out = make_heatmap(static_cast<int>(w), static_cast<int>(h));
    for (uint64_t i = 0; i < n; ++i) {
        out.values[i] = std::bit_cast<float>(get_u32le(p + 12 + i * 4));
    }
    out.normalized = false;
    const Heatmap probe{out.width, out.height, out.values, true};
    if (heatmap_invariants_ok(probe)) out.normalized = true;
    return out;
}

}  // namespace vsl
