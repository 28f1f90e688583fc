#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "ddekit/errors.hpp"

namespace ddekit {

using json = nlohmann::json;

/// 17 significant digits: enough to round-trip any double through decimal.
inline std::string fmt_full(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

/// 9 significant digits, the CLI-facing precision.
inline std::string fmt_cli(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.9g", v);
    return buf;
}

namespace detail {

inline std::uint64_t to_le_bits(double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    if constexpr (std::endian::native == std::endian::big) {
        bits = __builtin_bswap64(bits);
    }
    return bits;
}

inline double from_le_bits(std::uint64_t bits) {
    if constexpr (std::endian::native == std::endian::big) {
        bits = __builtin_bswap64(bits);
    }
    return std::bit_cast<double>(bits);
}

} // namespace detail

/// Writes a one-line JSON header followed by little-endian 64-bit reals.
/// The shared container for param files, checkpoints, and optimizer state.
inline void write_json_binary(const std::filesystem::path& path,
                              const json& header,
                              std::span<const double> values) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw io_error("cannot open for writing: " + path.string());
    out << header.dump() << '\n';
    std::vector<std::uint64_t> le(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) le[i] = detail::to_le_bits(values[i]);
    out.write(reinterpret_cast<const char*>(le.data()),
              static_cast<std::streamsize>(le.size() * sizeof(std::uint64_t)));
    if (!out) throw io_error("write failed: " + path.string());
}

inline json read_json_binary(const std::filesystem::path& path,
                             std::vector<double>& values) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error("cannot open: " + path.string());
    std::string line;
    if (!std::getline(in, line)) throw io_error("missing header line: " + path.string());
    json header;
    try {
        header = json::parse(line);
    } catch (const json::exception& e) {
        throw io_error("corrupted header in " + path.string() + ": " + e.what());
    }
    std::vector<char> raw((std::istreambuf_iterator<char>(in)),
                          std::istreambuf_iterator<char>());
    if (raw.size() % sizeof(std::uint64_t) != 0)
        throw io_error("truncated payload in " + path.string());
    values.resize(raw.size() / sizeof(std::uint64_t));
    for (std::size_t i = 0; i < values.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, raw.data() + i * sizeof(std::uint64_t), sizeof(bits));
        values[i] = detail::from_le_bits(bits);
    }
    return header;
}

/// Write-to-temp + rename so readers never observe a partial file.
inline void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    namespace fs = std::filesystem;
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary);
        if (!out) throw io_error("cannot open for writing: " + tmp.string());
        out << text;
        if (!out) throw io_error("write failed: " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw io_error("rename failed: " + path.string() + ": " + ec.message());
}

} // namespace ddekit
