#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "flowsynth/common.hpp"

namespace flowsynth {

// Little-endian binary primitives over an in-memory buffer. Files are
// composed in memory and written in one go, so partially written outputs
// never reach disk on error paths.
class BinWriter {
public:
    void u32(std::uint32_t v) {
        for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void u64(std::uint64_t v) {
        for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
    }
    void f32(float v) {
        std::uint32_t bits;
        std::memcpy(&bits, &v, 4);
        u32(bits);
    }
    void f64(double v) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, 8);
        u64(bits);
    }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        buf_.append(s);
    }
    void raw(const char* data, std::size_t n) { buf_.append(data, n); }
    void f32_array(const float* p, std::size_t n) {
        if constexpr (std::endian::native == std::endian::little) {
            buf_.append(reinterpret_cast<const char*>(p), 4 * n);
        } else {
            for (std::size_t i = 0; i < n; ++i) f32(p[i]);
        }
    }

    const std::string& buffer() const { return buf_; }

    void save(const std::string& path) const {
        std::ofstream out(path, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open '" + path + "' for writing");
        out.write(buf_.data(), static_cast<std::streamsize>(buf_.size()));
        if (!out) throw IoError("short write to '" + path + "'");
    }

private:
    std::string buf_;
};

class BinReader {
public:
    explicit BinReader(std::string data) : buf_(std::move(data)) {}

    static BinReader from_file(const std::string& path) {
        std::ifstream in(path, std::ios::binary);
        if (!in) throw IoError("cannot open '" + path + "' for reading");
        std::string data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
        return BinReader(std::move(data));
    }

    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf_[pos_ + i])) << (8 * i);
        pos_ += 8;
        return v;
    }
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        const std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
    std::string str() {
        const std::uint32_t n = u32();
        return str_raw(n);
    }
    std::string str_raw(std::size_t n) {
        need(n);
        std::string s = buf_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    void f32_array(float* p, std::size_t n) {
        if constexpr (std::endian::native == std::endian::little) {
            need(4 * n);
            std::memcpy(p, buf_.data() + pos_, 4 * n);
            pos_ += 4 * n;
        } else {
            for (std::size_t i = 0; i < n; ++i) p[i] = f32();
        }
    }
    bool at_end() const { return pos_ == buf_.size(); }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    void need(std::size_t n) const {
        if (pos_ + n > buf_.size()) throw IoError("truncated binary data");
    }
    std::string buf_;
    std::size_t pos_ = 0;
};

}  // namespace flowsynth
