#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "cdtl/error.hpp"

namespace cdtl {

// Little-endian byte assembly/parsing, independent of host endianness.
// Shared by the checkpoint and reference-bank formats.

class ByteWriter {
public:
    void u32(std::uint32_t v) {
        buf_.push_back(static_cast<std::uint8_t>(v & 0xff));
        buf_.push_back(static_cast<std::uint8_t>((v >> 8) & 0xff));
        buf_.push_back(static_cast<std::uint8_t>((v >> 16) & 0xff));
        buf_.push_back(static_cast<std::uint8_t>((v >> 24) & 0xff));
    }

    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }

    void bytes(const void* data, std::size_t n) {
        const auto* p = static_cast<const std::uint8_t*>(data);
        buf_.insert(buf_.end(), p, p + n);
    }

    void text(const std::string& s) { bytes(s.data(), s.size()); }

    const std::vector<std::uint8_t>& buffer() const { return buf_; }

private:
    std::vector<std::uint8_t> buf_;
};

class ByteReader {
public:
    ByteReader(const std::vector<std::uint8_t>& buf, std::string what)
        : buf_(buf), what_(std::move(what)) {}

    std::uint32_t u32(const std::string& field) {
        need(4, field);
        std::uint32_t v = static_cast<std::uint32_t>(buf_[pos_]) |
                          (static_cast<std::uint32_t>(buf_[pos_ + 1]) << 8) |
                          (static_cast<std::uint32_t>(buf_[pos_ + 2]) << 16) |
                          (static_cast<std::uint32_t>(buf_[pos_ + 3]) << 24);
        pos_ += 4;
        return v;
    }

    float f32(const std::string& field) { return std::bit_cast<float>(u32(field)); }

    std::string text(std::size_t n, const std::string& field) {
        need(n, field);
        std::string s(reinterpret_cast<const char*>(buf_.data() + pos_), n);
        pos_ += n;
        return s;
    }

    void raw(void* out, std::size_t n, const std::string& field) {
        need(n, field);
        std::memcpy(out, buf_.data() + pos_, n);
        pos_ += n;
    }

    std::size_t remaining() const { return buf_.size() - pos_; }

    void expect_end() const {
        if (pos_ != buf_.size()) {
            throw FormatError(what_ + ": " + std::to_string(buf_.size() - pos_) +
                              " unexpected trailing bytes");
        }
    }

private:
    void need(std::size_t n, const std::string& field) {
        if (pos_ + n > buf_.size()) {
            throw FormatError(what_ + ": truncated while reading " + field);
        }
    }

    const std::vector<std::uint8_t>& buf_;
    std::string what_;
    std::size_t pos_ = 0;
};

inline void write_file(const std::string& path, const std::vector<std::uint8_t>& bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed while writing '" + path + "'");
}

inline std::vector<std::uint8_t> read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error("cannot open '" + path + "' for reading");
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)),
                                    std::istreambuf_iterator<char>());
    return bytes;
}

using Digest = std::array<std::uint8_t, 32>;

// 32-byte content fingerprint: four FNV-1a-64 lanes with distinct offset
// bases. Detects stale or mismatched artifacts; not a cryptographic hash.
inline Digest digest32(const std::vector<std::uint8_t>& bytes) {
    std::uint64_t lanes[4] = {0xcbf29ce484222325ULL, 0xaf63bd4c8601b7dfULL, 0x9d6ef54e87a2c4b1ULL,
                              0x85ebca6b27d4eb4fULL};
    constexpr std::uint64_t prime = 0x100000001b3ULL;
    for (std::size_t i = 0; i < 4; ++i) {
        std::uint64_t h = lanes[i];
        for (std::uint8_t b : bytes) {
            h ^= static_cast<std::uint64_t>(b) + i;
            h *= prime;
        }
        lanes[i] = h;
    }
    Digest d{};
    for (std::size_t i = 0; i < 4; ++i) {
        for (std::size_t j = 0; j < 8; ++j) {
            d[i * 8 + j] = static_cast<std::uint8_t>((lanes[i] >> (8 * j)) & 0xff);
        }
    }
    return d;
}

}  // namespace cdtl
