#include "gridcosim/protocols/c37118.hpp"

#include "gridcosim/protocols/crc16.hpp"

namespace gridcosim::protocols {

namespace {

constexpr std::size_t kPrefixSize = 14;
constexpr std::size_t kMinFrame = kPrefixSize + 2;
constexpr std::size_t kNameWidth = 16;

bool known_type(std::uint8_t b) noexcept
{
    return b == static_cast<std::uint8_t>(FrameType::Data) || b == static_cast<std::uint8_t>(FrameType::Header) ||
           b == static_cast<std::uint8_t>(FrameType::Config2) || b == static_cast<std::uint8_t>(FrameType::Command);
}

[[noreturn]] void fail(C37Error code, const std::string& msg)
{
    throw C37DecodeError(code, to_string(code) + ": " + msg);
}

void write_prefix(ByteWriter& w, FrameType type, const C37Prefix& p)
{
    w.u8(kC37Sync);
    w.u8(static_cast<std::uint8_t>(type));
    w.u16(0);  // framesize, patched in finish()
    w.u16(p.idcode);
    w.u32(p.soc);
    w.u32(p.fracsec);
}

Bytes finish(Bytes out)
{
    ByteWriter w(out);
    const auto total = out.size() + 2;
    if (total > 0xFFFF)
        throw std::length_error("frame exceeds 65535 bytes");
    w.patch_u16(2, static_cast<std::uint16_t>(total));
    w.u16(crc16(out));
    return out;
}

C37Prefix read_prefix(ByteReader& r)
{
    r.u8();
    r.u8();
    r.u16();
    C37Prefix p;
    p.idcode = r.u16();
    p.soc = r.u32();
    p.fracsec = r.u32();
    return p;
}

/// Outer checks shared by every frame type, in detection order.
FrameInfo check_outer(std::span<const std::uint8_t> bytes)
{
    if (bytes.empty())
        fail(C37Error::Truncated, "empty buffer");
    if (bytes[0] != kC37Sync)
        fail(C37Error::BadSync, "first byte is not 0xAA");
    if (bytes.size() < kMinFrame)
        fail(C37Error::Truncated, "buffer shorter than the minimum frame");
    const auto n = bytes.size();
    const std::uint16_t stored = static_cast<std::uint16_t>((bytes[n - 2] << 8) | bytes[n - 1]);
    if (crc16(bytes.first(n - 2)) != stored)
        fail(C37Error::BadCrc, "checksum mismatch");
    if (!known_type(bytes[1]))
        fail(C37Error::BadSync, "unknown frame type byte");
    const std::uint16_t framesize = static_cast<std::uint16_t>((bytes[2] << 8) | bytes[3]);
    if (framesize != n)
        fail(C37Error::SizeMismatch, "FRAMESIZE disagrees with the buffer length");
    const std::uint16_t idcode = static_cast<std::uint16_t>((bytes[4] << 8) | bytes[5]);
    return {static_cast<FrameType>(bytes[1]), idcode, framesize};
}

void expect_type(const FrameInfo& info, FrameType want)
{
    if (info.type != want)
        fail(C37Error::BadSync, "unexpected frame type");
}

}  // namespace

std::string to_string(C37Error e)
{
    switch (e) {
    case C37Error::BadSync:
        return "BadSync";
    case C37Error::BadCrc:
        return "BadCrc";
    case C37Error::SizeMismatch:
        return "SizeMismatch";
    case C37Error::NoConfigBound:
        return "NoConfigBound";
    case C37Error::UnknownCommandCode:
        return "UnknownCommandCode";
    case C37Error::Truncated:
        return "Truncated";
    case C37Error::UnsupportedFormat:
        return "UnsupportedFormat";
    }
    return "Unknown";
}

std::size_t data_frame_size(const C37Config& cfg) noexcept
{
    std::size_t n = kPrefixSize + 2;
    for (const auto& p : cfg.pmus)
        n += 2 + 8 * p.phasor_names.size() + 4 + 4;
    return n;
}

FrameInfo inspect_frame(std::span<const std::uint8_t> bytes)
{
    return check_outer(bytes);
}

Bytes encode_data(const C37Data& frame, const C37Config& cfg)
{
    if (frame.pmus.size() != cfg.pmus.size())
        throw std::invalid_argument("data frame PMU count does not match config");
    Bytes out;
    out.reserve(data_frame_size(cfg));
    ByteWriter w(out);
    write_prefix(w, FrameType::Data, frame.prefix);
    for (std::size_t i = 0; i < frame.pmus.size(); ++i) {
        const auto& d = frame.pmus[i];
        if (d.phasors.size() != cfg.pmus[i].phasor_names.size())
            throw std::invalid_argument("data frame phasor count does not match config");
        w.u16(d.stat);
        for (const auto& ph : d.phasors) {
            w.f32(ph.magnitude);
            w.f32(ph.angle);
        }
        w.f32(d.freq);
        w.f32(d.dfreq);
    }
    return finish(std::move(out));
}

Bytes encode_config(const C37Config& cfg)
{
    Bytes out;
    ByteWriter w(out);
    write_prefix(w, FrameType::Config2, cfg.prefix);
    w.u32(cfg.time_base);
    w.u16(static_cast<std::uint16_t>(cfg.pmus.size()));
    for (const auto& p : cfg.pmus) {
        if (p.phasor_units.size() != p.phasor_names.size())
            throw std::invalid_argument("phasor_units and phasor_names differ in length");
        w.text(p.station, kNameWidth);
        w.u16(p.idcode);
        w.u16(p.format);
        w.u16(static_cast<std::uint16_t>(p.phasor_names.size()));
        w.u16(0);  // ANNMR
        w.u16(0);  // DGNMR
        for (const auto& name : p.phasor_names)
            w.text(name, kNameWidth);
        for (auto u : p.phasor_units)
            w.u32(u);
        w.u16(p.fnom);
        w.u16(p.cfgcnt);
    }
    w.i16(cfg.data_rate);
    return finish(std::move(out));
}

Bytes encode_command(const C37Command& cmd)
{
    Bytes out;
    ByteWriter w(out);
    write_prefix(w, FrameType::Command, cmd.prefix);
    w.u16(cmd.command);
    return finish(std::move(out));
}

Bytes encode_header(const C37Header& hdr)
{
    Bytes out;
    ByteWriter w(out);
    write_prefix(w, FrameType::Header, hdr.prefix);
    for (char c : hdr.text)
        w.u8(static_cast<std::uint8_t>(c));
    return finish(std::move(out));
}

C37Data decode_data(std::span<const std::uint8_t> bytes, const C37Config* cfg)
{
    const auto info = check_outer(bytes);
    expect_type(info, FrameType::Data);
    if (cfg == nullptr)
        fail(C37Error::NoConfigBound, "no configuration bound for idcode " + std::to_string(info.idcode));
    if (cfg->prefix.idcode != info.idcode)
        fail(C37Error::NoConfigBound, "bound configuration is for another idcode");
    if (bytes.size() != data_frame_size(*cfg))
        fail(C37Error::SizeMismatch, "frame size disagrees with the bound configuration");

    ByteReader r(bytes.first(bytes.size() - 2));
    C37Data frame;
    frame.prefix = read_prefix(r);
    frame.pmus.resize(cfg->pmus.size());
    for (std::size_t i = 0; i < cfg->pmus.size(); ++i) {
        auto& d = frame.pmus[i];
        d.stat = r.u16();
        d.phasors.resize(cfg->pmus[i].phasor_names.size());
        for (auto& ph : d.phasors) {
            ph.magnitude = r.f32();
            ph.angle = r.f32();
        }
        d.freq = r.f32();
        d.dfreq = r.f32();
    }
    return frame;
}

C37Config decode_config(std::span<const std::uint8_t> bytes)
{
    const auto info = check_outer(bytes);
    expect_type(info, FrameType::Config2);
    ByteReader r(bytes.first(bytes.size() - 2));
    C37Config cfg;
    try {
        cfg.prefix = read_prefix(r);
        cfg.time_base = r.u32();
        const auto num_pmu = r.u16();
        for (std::uint16_t i = 0; i < num_pmu; ++i) {
            PmuChannelConfig p;
            p.station = r.text(kNameWidth);
            p.idcode = r.u16();
            p.format = r.u16();
            const auto phnmr = r.u16();
            const auto annmr = r.u16();
            const auto dgnmr = r.u16();
            if (p.format != kFormatFloatPolar)
                fail(C37Error::UnsupportedFormat, "only float polar format is supported");
            if (annmr != 0 || dgnmr != 0)
                fail(C37Error::UnsupportedFormat, "analog and digital channels are not supported");
            for (std::uint16_t k = 0; k < phnmr; ++k)
                p.phasor_names.push_back(r.text(kNameWidth));
            for (std::uint16_t k = 0; k < phnmr; ++k)
                p.phasor_units.push_back(r.u32());
            p.fnom = r.u16();
            p.cfgcnt = r.u16();
            cfg.pmus.push_back(std::move(p));
        }
        cfg.data_rate = r.i16();
    } catch (const ReadPastEnd&) {
        fail(C37Error::SizeMismatch, "configuration body shorter than its channel counts");
    }
    if (r.remaining() != 0)
        fail(C37Error::SizeMismatch, "trailing bytes after configuration body");
    return cfg;
}

C37Command decode_command(std::span<const std::uint8_t> bytes)
{
    const auto info = check_outer(bytes);
    expect_type(info, FrameType::Command);
    if (bytes.size() != kMinFrame + 2)
        fail(C37Error::SizeMismatch, "command frame must be 18 bytes");
    ByteReader r(bytes.first(bytes.size() - 2));
    C37Command cmd;
    cmd.prefix = read_prefix(r);
    cmd.command = r.u16();
    switch (static_cast<CommandCode>(cmd.command)) {
    case CommandCode::DataOff:
    case CommandCode::DataOn:
    case CommandCode::SendConfig2:
        break;
    default:
        fail(C37Error::UnknownCommandCode, "command code " + std::to_string(cmd.command));
    }
    return cmd;
}

C37Header decode_header(std::span<const std::uint8_t> bytes)
{
    const auto info = check_outer(bytes);
    expect_type(info, FrameType::Header);
    ByteReader r(bytes.first(bytes.size() - 2));
    C37Header hdr;
    hdr.prefix = read_prefix(r);
    const auto n = r.remaining();
    hdr.text.reserve(n);
    for (std::size_t i = 0; i < n; ++i)
        hdr.text.push_back(static_cast<char>(r.u8()));
    return hdr;
}

C37Frame decode_frame(std::span<const std::uint8_t> bytes, const C37Config* cfg)
{
    switch (check_outer(bytes).type) {
    case FrameType::Data:
        return decode_data(bytes, cfg);
    case FrameType::Config2:
        return decode_config(bytes);
    case FrameType::Command:
        return decode_command(bytes);
    case FrameType::Header:
        return decode_header(bytes);
    }
    fail(C37Error::BadSync, "unknown frame type byte");
}

void C37StreamDecoder::feed(std::span<const std::uint8_t> bytes)
{
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<Bytes> C37StreamDecoder::next()
{
    auto drop = [this](std::size_t n) {
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(n));
        discarded_ += n;
    };
    for (;;) {
        std::size_t skip = 0;
        while (skip < buf_.size() && buf_[skip] != kC37Sync)
            ++skip;
        if (skip > 0)
            drop(skip);
        if (buf_.size() < 4)
            return std::nullopt;
        if (!known_type(buf_[1])) {
            drop(1);
            continue;
        }
        const std::size_t size = static_cast<std::size_t>((buf_[2] << 8) | buf_[3]);
        if (size < kMinFrame) {
            drop(1);
            continue;
        }
        if (buf_.size() < size)
            return std::nullopt;
        const std::span<const std::uint8_t> frame(buf_.data(), size);
        const std::uint16_t stored = static_cast<std::uint16_t>((frame[size - 2] << 8) | frame[size - 1]);
        if (crc16(frame.first(size - 2)) != stored) {
            drop(1);
            continue;
        }
        Bytes out(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(size));
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(size));
        return out;
    }
}

}  // namespace gridcosim::protocols
