#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "spotkit/error.hpp"

namespace spotkit::binio {

// Little-endian byte-level writer.
class Writer {
public:
    void u8(std::uint8_t x) { buf_.push_back(static_cast<char>(x)); }
    void u16(std::uint16_t x) {
        for (int i = 0; i < 2; ++i) buf_.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
    }
    void u32(std::uint32_t x) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((x >> (8 * i)) & 0xff));
    }
    void f32(float x) {
        std::uint32_t bits;
        std::memcpy(&bits, &x, 4);
        u32(bits);
    }
    void bytes(const void* p, std::size_t n) {
        const char* c = static_cast<const char*>(p);
        buf_.insert(buf_.end(), c, c + n);
    }
    void str(const std::string& s) { bytes(s.data(), s.size()); }

    const std::string& data() const { return buf_; }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        require(out.good(), ErrorKind::io, "cannot open for writing: " + path.string());
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        require(out.good(), ErrorKind::io, "write failed: " + path.string());
    }

private:
    std::string buf_;
};

// Bounds-checked reader over a fully loaded file; truncation errors carry
// expected vs actual byte counts.
class Reader {
public:
    explicit Reader(std::string data, std::string origin)
        : data_(std::move(data)), origin_(std::move(origin)) {}

    static Reader from_file(const std::filesystem::path& path) {
        std::ifstream in(path, std::ios::binary);
        require(in.good(), ErrorKind::io, "cannot open: " + path.string());
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return Reader(std::move(data), path.filename().string());
    }

    std::size_t remaining() const { return data_.size() - pos_; }
    std::size_t consumed() const { return pos_; }

    void need(std::size_t n, const std::string& what) {
        require(remaining() >= n, ErrorKind::truncated,
                origin_ + ": truncated " + what + ": expected " + std::to_string(n) + " bytes at offset " +
                    std::to_string(pos_) + ", got " + std::to_string(remaining()));
    }

    std::uint8_t u8(const std::string& what) {
        need(1, what);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }
    std::uint16_t u16(const std::string& what) {
        need(2, what);
        std::uint16_t x = 0;
        for (int i = 0; i < 2; ++i) x |= static_cast<std::uint16_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
        return x;
    }
    std::uint32_t u32(const std::string& what) {
        need(4, what);
        std::uint32_t x = 0;
        for (int i = 0; i < 4; ++i) x |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_++])) << (8 * i);
        return x;
    }
    float f32(const std::string& what) {
        const std::uint32_t bits = u32(what);
        float x;
        std::memcpy(&x, &bits, 4);
        return x;
    }
    std::string str(std::size_t n, const std::string& what) {
        need(n, what);
        std::string s = data_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void expect_magic(const std::string& magic) {
        require(remaining() >= magic.size() && data_.compare(pos_, magic.size(), magic) == 0,
                ErrorKind::bad_magic, origin_ + ": bad magic, expected \"" + magic + "\"");
        pos_ += magic.size();
    }
    void expect_end() {
        require(remaining() == 0, ErrorKind::io,
                origin_ + ": " + std::to_string(remaining()) + " trailing bytes");
    }

private:
    std::string data_;
    std::string origin_;
    std::size_t pos_ = 0;
};

}  // namespace spotkit::binio
