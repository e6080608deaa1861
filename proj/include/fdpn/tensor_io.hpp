// Binary tensor file format and the checkpoint container.
//
// Tensor file ("FDPN"): magic, format version u32, rank u32, dims u32 each,
// float32 payload row-major. All integers and floats little-endian.
//
// Checkpoint container ("FDPC"): magic, version u32, metadata block
// (u32 length + key=value text lines), tensor count u32, then per tensor a
// u32-length-prefixed name followed by a complete FDPN tensor record.

#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "fdpn/errors.hpp"
#include "fdpn/tensor.hpp"

namespace fdpn {

inline constexpr char kTensorMagic[4] = {'F', 'D', 'P', 'N'};
inline constexpr char kContainerMagic[4] = {'F', 'D', 'P', 'C'};
inline constexpr std::uint32_t kFormatVersion = 1;

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4] = {static_cast<char>(v & 0xff), static_cast<char>((v >> 8) & 0xff),
                 static_cast<char>((v >> 16) & 0xff), static_cast<char>((v >> 24) & 0xff)};
    os.write(b, 4);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4))
        throw FormatError(std::string("truncated file while reading ") + what);
    return static_cast<std::uint32_t>(b[0]) | (static_cast<std::uint32_t>(b[1]) << 8) |
           (static_cast<std::uint32_t>(b[2]) << 16) | (static_cast<std::uint32_t>(b[3]) << 24);
}

inline void put_f32(std::ostream& os, float v) {
    put_u32(os, std::bit_cast<std::uint32_t>(v));
}

inline float get_f32(std::istream& is, const char* what) {
    return std::bit_cast<float>(get_u32(is, what));
}

}  // namespace detail

inline void write_tensor(std::ostream& os, const Tensor& t) {
    os.write(kTensorMagic, 4);
    detail::put_u32(os, kFormatVersion);
    detail::put_u32(os, static_cast<std::uint32_t>(t.rank()));
    for (Index a = 0; a < t.rank(); ++a)
        detail::put_u32(os, static_cast<std::uint32_t>(t.dim(a)));
    for (Index i = 0; i < t.size(); ++i)
        detail::put_f32(os, static_cast<float>(t[i]));
}

inline Tensor read_tensor(std::istream& is) {
    char magic[4];
    if (!is.read(magic, 4)) throw FormatError("truncated file while reading tensor magic");
    if (std::memcmp(magic, kTensorMagic, 4) != 0)
        throw FormatError("bad tensor magic (expected FDPN)");
    const std::uint32_t version = detail::get_u32(is, "tensor version");
    if (version != kFormatVersion)
        throw FormatError("unsupported tensor format version " + std::to_string(version));
    const std::uint32_t rank = detail::get_u32(is, "tensor rank");
    if (rank > 4) throw FormatError("tensor rank " + std::to_string(rank) + " exceeds 4");
    std::vector<Index> shape(rank);
    Index total = 1;
    for (std::uint32_t a = 0; a < rank; ++a) {
        shape[a] = static_cast<Index>(detail::get_u32(is, "tensor dims"));
        total *= shape[a];
        if (total > (Index(1) << 31)) throw FormatError("tensor dims overflow payload limit");
    }
    Tensor t(shape);
    for (Index i = 0; i < total; ++i)
        t[i] = static_cast<double>(detail::get_f32(is, "tensor payload"));
    return t;
}

inline void save_tensor(const std::filesystem::path& path, const Tensor& t) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw IoError("cannot open for write: " + path.string());
    write_tensor(os, t);
    if (!os) throw IoError("write failed: " + path.string());
}

inline Tensor load_tensor(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open: " + path.string());
    Tensor t = read_tensor(is);
    if (is.peek() != std::char_traits<char>::eof())
        throw FormatError("tensor payload does not match header dims (trailing bytes): " +
                          path.string());
    return t;
}

// Named parameter tensors plus a text metadata block. Key order is sorted,
// so serialization is byte-deterministic.
struct Checkpoint {
    std::map<std::string, std::string> metadata;
    std::vector<std::pair<std::string, Tensor>> tensors;

    void add(std::string name, Tensor t) { tensors.emplace_back(std::move(name), std::move(t)); }

    const Tensor& tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return t;
        throw FormatError("checkpoint is missing tensor '" + name + "'");
    }

    bool has_tensor(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return true;
        return false;
    }

    std::string meta(const std::string& key) const {
        auto it = metadata.find(key);
        if (it == metadata.end()) throw FormatError("checkpoint is missing metadata '" + key + "'");
        return it->second;
    }

    std::string meta_or(const std::string& key, std::string fallback) const {
        auto it = metadata.find(key);
        return it == metadata.end() ? std::move(fallback) : it->second;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream os(path, std::ios::binary);
        if (!os) throw IoError("cannot open for write: " + path.string());
        os.write(kContainerMagic, 4);
        detail::put_u32(os, kFormatVersion);
        std::ostringstream meta;
        for (const auto& [k, v] : metadata) meta << k << '=' << v << '\n';
        const std::string meta_text = meta.str();
        detail::put_u32(os, static_cast<std::uint32_t>(meta_text.size()));
        os.write(meta_text.data(), static_cast<std::streamsize>(meta_text.size()));
        detail::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
        for (const auto& [name, t] : tensors) {
            detail::put_u32(os, static_cast<std::uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_tensor(os, t);
        }
        if (!os) throw IoError("write failed: " + path.string());
    }

    static Checkpoint load(const std::filesystem::path& path) {
        std::ifstream is(path, std::ios::binary);
        if (!is) throw IoError("cannot open: " + path.string());
        char magic[4];
        if (!is.read(magic, 4)) throw FormatError("truncated checkpoint magic");
        if (std::memcmp(magic, kContainerMagic, 4) != 0)
            throw FormatError("bad checkpoint magic (expected FDPC)");
        const std::uint32_t version = detail::get_u32(is, "checkpoint version");
        if (version != kFormatVersion)
            throw FormatError("unsupported checkpoint version " + std::to_string(version));
        Checkpoint ckpt;
        const std::uint32_t meta_len = detail::get_u32(is, "metadata length");
        std::string meta_text(meta_len, '\0');
        if (meta_len && !is.read(meta_text.data(), meta_len))
            throw FormatError("truncated checkpoint metadata");
        std::istringstream meta(meta_text);
        std::string line;
        while (std::getline(meta, line)) {
            const auto eq = line.find('=');
            if (eq == std::string::npos) throw FormatError("malformed checkpoint metadata line");
            ckpt.metadata[line.substr(0, eq)] = line.substr(eq + 1);
        }
        const std::uint32_t n = detail::get_u32(is, "tensor count");
        for (std::uint32_t i = 0; i < n; ++i) {
            const std::uint32_t name_len = detail::get_u32(is, "tensor name length");
            std::string name(name_len, '\0');
            if (name_len && !is.read(name.data(), name_len))
                throw FormatError("truncated checkpoint tensor name");
            ckpt.tensors.emplace_back(std::move(name), read_tensor(is));
        }
        return ckpt;
    }
};

}  // namespace fdpn
