#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"
#include "msp/error.hpp"

namespace msp {

using json = nlohmann::json;

// Container layout shared by dataset and checkpoint files:
//   8-byte magic | u32 LE header length | UTF-8 JSON header | f64 LE payload

namespace binio {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xffu));
}

inline void put_f64(std::string& out, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xffu));
}

inline std::uint32_t get_u32(std::string_view in, std::size_t off) {
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return v;
}

inline double get_f64(std::string_view in, std::size_t off) {
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in[off + i])) << (8 * i);
    return std::bit_cast<double>(bits);
}

struct Container {
    json header;
    std::vector<double> payload;
};

inline std::string encode(std::string_view magic, const json& header, std::span<const std::span<const double>> parts) {
    std::string out(magic);
    const std::string h = header.dump();
    put_u32(out, static_cast<std::uint32_t>(h.size()));
    out += h;
    std::size_t total = 0;
    for (const auto& p : parts) total += p.size();
    out.reserve(out.size() + 8 * total);
    for (const auto& p : parts)
        for (double v : p) put_f64(out, v);
    return out;
}

inline Container decode(std::string_view bytes, std::string_view magic) {
    if (bytes.size() < magic.size() + 4) throw FormatError("file truncated before header");
    if (bytes.substr(0, magic.size()) != magic) {
        throw FormatError("bad magic: expected \"" + std::string(magic) + "\"");
    }
    const std::size_t hlen = get_u32(bytes, magic.size());
    const std::size_t hstart = magic.size() + 4;
    if (bytes.size() < hstart + hlen) throw FormatError("file truncated inside JSON header");
    Container c;
    try {
        c.header = json::parse(bytes.substr(hstart, hlen));
    } catch (const json::exception& e) {
        throw FormatError(std::string("malformed JSON header: ") + e.what());
    }
    const std::size_t pstart = hstart + hlen;
    const std::size_t plen = bytes.size() - pstart;
    if (plen % 8 != 0) throw FormatError("payload length is not a multiple of 8 bytes");
    c.payload.resize(plen / 8);
    for (std::size_t i = 0; i < c.payload.size(); ++i) c.payload[i] = get_f64(bytes, pstart + 8 * i);
    return c;
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("short write to " + path.string());
}

/// Typed JSON field access that reports malformed headers as FormatError.
template <typename T>
T field(const json& j, const char* key) {
    if (!j.is_object() || !j.contains(key)) throw FormatError(std::string("header missing field \"") + key + "\"");
    try {
        return j.at(key).get<T>();
    } catch (const json::exception&) {
        throw FormatError(std::string("header field \"") + key + "\" has the wrong type");
    }
}

}  // namespace binio
}  // namespace msp
