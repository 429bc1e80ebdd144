#pragma once

#include <bit>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace gridcosim::protocols {

using Bytes = std::vector<std::uint8_t>;

/// Big-endian appender.
class ByteWriter {
public:
    explicit ByteWriter(Bytes& out) : out_(out) {}

    void u8(std::uint8_t v) { out_.push_back(v); }
    void u16(std::uint16_t v) { put(v, 2); }
    void u32(std::uint32_t v) { put(v, 4); }
    void u48(std::uint64_t v) { put(v, 6); }
    void u64(std::uint64_t v) { put(v, 8); }
    void i16(std::int16_t v) { u16(static_cast<std::uint16_t>(v)); }
    void f32(float v) { u32(std::bit_cast<std::uint32_t>(v)); }
    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }
    /// Fixed-width text, space padded or cut to `width`.
    void text(const std::string& s, std::size_t width)
    {
        for (std::size_t i = 0; i < width; ++i)
            out_.push_back(i < s.size() ? static_cast<std::uint8_t>(s[i]) : std::uint8_t{' '});
    }
    void patch_u16(std::size_t at, std::uint16_t v)
    {
        out_[at] = static_cast<std::uint8_t>(v >> 8);
        out_[at + 1] = static_cast<std::uint8_t>(v);
    }
    std::size_t size() const noexcept { return out_.size(); }

private:
    void put(std::uint64_t v, int n)
    {
        for (int i = n - 1; i >= 0; --i)
            out_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
    }
    Bytes& out_;
};

class ReadPastEnd : public std::out_of_range {
public:
    ReadPastEnd() : std::out_of_range("read past end of buffer") {}
};

/// Big-endian cursor; throws ReadPastEnd on overrun.
class ByteReader {
public:
    explicit ByteReader(std::span<const std::uint8_t> in) : in_(in) {}

    std::uint8_t u8() { return static_cast<std::uint8_t>(get(1)); }
    std::uint16_t u16() { return static_cast<std::uint16_t>(get(2)); }
    std::uint32_t u32() { return static_cast<std::uint32_t>(get(4)); }
    std::uint64_t u48() { return get(6); }
    std::uint64_t u64() { return get(8); }
    std::int16_t i16() { return static_cast<std::int16_t>(u16()); }
    float f32() { return std::bit_cast<float>(u32()); }
    double f64() { return std::bit_cast<double>(u64()); }
    /// Fixed-width text with trailing spaces removed.
    std::string text(std::size_t width)
    {
        need(width);
        std::string s(reinterpret_cast<const char*>(in_.data() + pos_), width);
        pos_ += width;
        while (!s.empty() && (s.back() == ' ' || s.back() == '\0'))
            s.pop_back();
        return s;
    }
    std::size_t position() const noexcept { return pos_; }
    std::size_t remaining() const noexcept { return in_.size() - pos_; }

private:
    void need(std::size_t n) const
    {
        if (in_.size() - pos_ < n)
            throw ReadPastEnd();
    }
    std::uint64_t get(int n)
    {
        need(static_cast<std::size_t>(n));
        std::uint64_t v = 0;
        for (int i = 0; i < n; ++i)
            v = (v << 8) | in_[pos_++];
        return v;
    }
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

}  // namespace gridcosim::protocols
