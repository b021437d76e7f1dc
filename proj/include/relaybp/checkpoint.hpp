#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "relaybp/netgraph.hpp"

namespace relaybp {

// Checkpoint layout (all integers little-endian):
//   "RGCKPT1"                            7-byte magic
//   u32  element width in bits           32 or 64
//   u64  parameter count
//   per parameter, in registry order:
//     u32  name length, name bytes
//     u32  rank, i64 extents
//     raw element data
// Loading validates name and shape per record and reports the first
// mismatch, so checkpoints never silently load into a different graph.

inline constexpr char kCheckpointMagic[8] = "RGCKPT1";

namespace detail {

template <typename T>
void write_le(std::ostream& out, T v) {
    static_assert(std::is_integral_v<T>);
    unsigned char buf[sizeof(T)];
    for (std::size_t i = 0; i < sizeof(T); ++i)
        buf[i] = static_cast<unsigned char>((static_cast<std::make_unsigned_t<T>>(v) >> (8 * i)) &
                                            0xff);
    out.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& in, const std::filesystem::path& path) {
    unsigned char buf[sizeof(T)];
    if (!in.read(reinterpret_cast<char*>(buf), sizeof(T)))
        throw FormatError("checkpoint '" + path.string() + "' truncated");
    std::make_unsigned_t<T> v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i)
        v |= static_cast<std::make_unsigned_t<T>>(buf[i]) << (8 * i);
    return static_cast<T>(v);
}

template <typename S>
void write_scalar(std::ostream& out, S v) {
    if constexpr (sizeof(S) == 4) {
        write_le<std::uint32_t>(out, std::bit_cast<std::uint32_t>(v));
    } else {
        write_le<std::uint64_t>(out, std::bit_cast<std::uint64_t>(v));
    }
}

template <typename S>
S read_scalar(std::istream& in, const std::filesystem::path& path) {
    if constexpr (sizeof(S) == 4) {
        return std::bit_cast<S>(read_le<std::uint32_t>(in, path));
    } else {
        return std::bit_cast<S>(read_le<std::uint64_t>(in, path));
    }
}

}  // namespace detail

template <typename S>
void save_checkpoint(const std::filesystem::path& path, const NetworkGraph<S>& g) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open '" + path.string() + "' for writing");
    out.write(kCheckpointMagic, 7);
    detail::write_le<std::uint32_t>(out, sizeof(S) * 8);
    detail::write_le<std::uint64_t>(out, g.params.size());
    for (std::size_t i = 0; i < g.params.size(); ++i) {
        const std::string& name = g.topo.params[i].name;
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        const Shape& sh = g.params[i].shape();
        detail::write_le<std::uint32_t>(out, static_cast<std::uint32_t>(sh.size()));
        for (Index d : sh) detail::write_le<std::int64_t>(out, d);
        for (Index k = 0; k < g.params[i].size(); ++k)
            detail::write_scalar<S>(out, g.params[i].data()[k]);
    }
    out.flush();
    if (!out) throw IoError("write failed on '" + path.string() + "'");
}

// Element width stored in a checkpoint header, for dispatching before the
// scalar type is known.
inline int checkpoint_element_width(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[7];
    if (!in.read(magic, 7) || std::memcmp(magic, kCheckpointMagic, 7) != 0)
        throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
    const auto width = detail::read_le<std::uint32_t>(in, path);
    if (width != 32 && width != 64)
        throw FormatError("checkpoint '" + path.string() + "' has unsupported element width " +
                          std::to_string(width));
    return static_cast<int>(width);
}

template <typename S>
void load_checkpoint(const std::filesystem::path& path, NetworkGraph<S>& g) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open '" + path.string() + "' for reading");
    char magic[7];
    if (!in.read(magic, 7) || std::memcmp(magic, kCheckpointMagic, 7) != 0)
        throw FormatError("'" + path.string() + "' is not a checkpoint (bad magic)");
    const auto width = detail::read_le<std::uint32_t>(in, path);
    if (width != sizeof(S) * 8)
        throw ConfigError("checkpoint '" + path.string() + "' stores " + std::to_string(width) +
                          "-bit elements but the run uses " + std::to_string(sizeof(S) * 8) +
                          "-bit");
    const auto count = detail::read_le<std::uint64_t>(in, path);
    if (count != g.params.size())
        throw ConfigError("checkpoint/architecture mismatch: checkpoint has " +
                          std::to_string(count) + " parameters, graph has " +
                          std::to_string(g.params.size()));
    for (std::size_t i = 0; i < count; ++i) {
        const ParamDesc& expect = g.topo.params[i];
        const auto name_len = detail::read_le<std::uint32_t>(in, path);
        std::string name(name_len, '\0');
        if (!in.read(name.data(), name_len))
            throw FormatError("checkpoint '" + path.string() + "' truncated");
        if (name != expect.name)
            throw ConfigError("checkpoint/architecture mismatch at parameter " +
                              std::to_string(i) + ": checkpoint has '" + name +
                              "', graph expects '" + expect.name + "'");
        const auto rank = detail::read_le<std::uint32_t>(in, path);
        Shape sh(rank);
        for (auto& d : sh) d = detail::read_le<std::int64_t>(in, path);
        if (sh != expect.shape)
            throw ConfigError("checkpoint/architecture mismatch at parameter '" + expect.name +
                              "': checkpoint shape " + shape_str(sh) + ", graph expects " +
                              shape_str(expect.shape));
        for (Index k = 0; k < g.params[i].size(); ++k)
            g.params[i].data()[k] = detail::read_scalar<S>(in, path);
    }
}

}  // namespace relaybp
