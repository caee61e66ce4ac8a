#pragma once

// Little-endian binary serialization helpers shared by the on-disk formats
// (matting cache, checkpoints). Internal to src/.

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include "hazeforge/common.hpp"

namespace hazeforge::detail {

inline void put_u32(std::string& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& out, std::uint64_t v) {
    for (int i = 0; i < 8; ++i)
        out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_f32(std::string& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

inline void put_f64(std::string& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(out, bits);
}

inline std::string read_file_bytes(const std::filesystem::path& path, const char* op) {
    std::ifstream f(path, std::ios::binary);
    require(f.good(), op, ": cannot open ", path.string());
    std::string bytes((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());
    require(!f.bad(), op, ": read failed for ", path.string());
    return bytes;
}

inline void write_file_bytes(const std::filesystem::path& path, const std::string& bytes,
                             const char* op) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    require(f.good(), op, ": cannot open ", path.string(), " for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(f.good(), op, ": write failed for ", path.string());
}

// Sequential reader that reports the byte offset on any truncation.
struct ByteReader {
    const std::string& bytes;
    const std::string path;
    std::size_t pos = 0;

    void need(std::size_t n, const char* what) {
        if (pos + n > bytes.size())
            throw RuntimeError(cat(path, ": truncated reading ", what, " at byte ", pos,
                                   " (file has ", bytes.size(), " bytes)"));
    }
    std::uint32_t u32(const char* what) {
        need(4, what);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i)
            v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64(const char* what) {
        need(8, what);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i)
            v |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32(const char* what) {
        const std::uint32_t bits = u32(what);
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64(const char* what) {
        const std::uint64_t bits = u64(what);
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string chunk(std::size_t n, const char* what) {
        need(n, what);
        std::string s = bytes.substr(pos, n);
        pos += n;
        return s;
    }
    void expect_end(const char* what) {
        require(pos == bytes.size(), path, ": ", bytes.size() - pos, " trailing bytes after ",
                what);
    }
};

} // namespace hazeforge::detail
