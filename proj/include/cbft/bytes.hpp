#pragma once

#include <cstdint>
#include <cstring>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cbft {

using Bytes = std::vector<uint8_t>;
using BytesView = std::span<const uint8_t>;

// Canonical encoding used for everything that is hashed or signed:
// fixed field order, fixed-width big-endian integers, u32 length prefixes.
class ByteWriter {
public:
    void u8(uint8_t v) { buf_.push_back(v); }

    void u32(uint32_t v) {
        buf_.push_back(static_cast<uint8_t>(v >> 24));
        buf_.push_back(static_cast<uint8_t>(v >> 16));
        buf_.push_back(static_cast<uint8_t>(v >> 8));
        buf_.push_back(static_cast<uint8_t>(v));
    }

    void u64(uint64_t v) {
        u32(static_cast<uint32_t>(v >> 32));
        u32(static_cast<uint32_t>(v));
    }

    void raw(BytesView b) { buf_.insert(buf_.end(), b.begin(), b.end()); }

    void blob(BytesView b) {
        u32(static_cast<uint32_t>(b.size()));
        raw(b);
    }

    const Bytes& bytes() const { return buf_; }
    Bytes take() { return std::move(buf_); }
    size_t size() const { return buf_.size(); }

private:
    Bytes buf_;
};

// Bounds-checked reader; any overrun flips a sticky error flag instead of
// reading out of range, so decoders can fail soft on malformed input.
class ByteReader {
public:
    explicit ByteReader(BytesView data) : data_(data) {}

    uint8_t u8() {
        if (!need(1)) return 0;
        return data_[pos_++];
    }

    uint32_t u32() {
        if (!need(4)) return 0;
        uint32_t v = (uint32_t(data_[pos_]) << 24) | (uint32_t(data_[pos_ + 1]) << 16) |
                     (uint32_t(data_[pos_ + 2]) << 8) | uint32_t(data_[pos_ + 3]);
        pos_ += 4;
        return v;
    }

    uint64_t u64() {
        uint64_t hi = u32();
        uint64_t lo = u32();
        return (hi << 32) | lo;
    }

    Bytes blob(size_t max_len = kMaxBlob) {
        uint32_t n = u32();
        if (n > max_len || !need(n)) {
            ok_ = false;
            return {};
        }
        Bytes out(data_.begin() + pos_, data_.begin() + pos_ + n);
        pos_ += n;
        return out;
    }

    bool fixed(uint8_t* dst, size_t n) {
        if (!need(n)) return false;
        std::memcpy(dst, data_.data() + pos_, n);
        pos_ += n;
        return true;
    }

    bool ok() const { return ok_; }
    bool done() const { return ok_ && pos_ == data_.size(); }
    size_t remaining() const { return data_.size() - pos_; }

    static constexpr size_t kMaxBlob = 1u << 26;

private:
    bool need(size_t n) {
        if (!ok_ || data_.size() - pos_ < n) {
            ok_ = false;
            return false;
        }
        return true;
    }

    BytesView data_;
    size_t pos_ = 0;
    bool ok_ = true;
};

inline std::string to_hex(BytesView b) {
    static const char* digits = "0123456789abcdef";
    std::string s;
    s.reserve(b.size() * 2);
    for (uint8_t c : b) {
        s.push_back(digits[c >> 4]);
        s.push_back(digits[c & 0xf]);
    }
    return s;
}

inline std::optional<Bytes> from_hex(const std::string& s) {
    if (s.size() % 2 != 0) return std::nullopt;
    auto nib = [](char c) -> int {
        if (c >= '0' && c <= '9') return c - '0';
        if (c >= 'a' && c <= 'f') return c - 'a' + 10;
        if (c >= 'A' && c <= 'F') return c - 'A' + 10;
        return -1;
    };
    Bytes out;
    out.reserve(s.size() / 2);
    for (size_t i = 0; i < s.size(); i += 2) {
        int hi = nib(s[i]), lo = nib(s[i + 1]);
        if (hi < 0 || lo < 0) return std::nullopt;
        out.push_back(static_cast<uint8_t>((hi << 4) | lo));
    }
    return out;
}

}  // namespace cbft
