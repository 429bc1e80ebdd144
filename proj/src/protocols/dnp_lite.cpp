#include "gridcosim/protocols/dnp_lite.hpp"

#include "gridcosim/protocols/crc16.hpp"

namespace gridcosim::protocols {

namespace {

constexpr std::size_t kMinFrame = kDnpHeaderSize + 2;
constexpr std::uint64_t kU48Max = (std::uint64_t{1} << 48) - 1;

template <class... Ts>
struct overloaded : Ts... {
    using Ts::operator()...;
};

[[noreturn]] void fail(DnpError code, const std::string& msg)
{
    throw DnpDecodeError(code, to_string(code) + ": " + msg);
}

bool magic_at(std::span<const std::uint8_t> b, std::size_t i) noexcept
{
    return i + 1 < b.size() && b[i] == kDnpMagic0 && b[i + 1] == kDnpMagic1;
}

std::optional<std::size_t> inner_magic(std::span<const std::uint8_t> b)
{
    for (std::size_t i = 2; i + 1 < b.size(); ++i)
        if (magic_at(b, i))
            return i;
    return std::nullopt;
}

bool kind_known(std::uint8_t k) noexcept
{
    return k >= static_cast<std::uint8_t>(DnpKind::AnalogInputBlock) && k <= static_cast<std::uint8_t>(DnpKind::Ack);
}

void write_timestamp(ByteWriter& w, std::uint64_t ms)
{
    if (ms > kU48Max)
        throw std::out_of_range("timestamp exceeds 48 bits");
    w.u48(ms);
}

DnpBody read_body(DnpKind kind, ByteReader& r)
{
    switch (kind) {
    case DnpKind::AnalogInputBlock: {
        AnalogInputBlock b;
        b.timestamp_ms = r.u48();
        const auto n = r.u16();
        b.points.resize(n);
        for (auto& p : b.points) {
            p.index = r.u16();
            p.value = r.f64();
            p.quality = r.u8();
        }
        return b;
    }
    case DnpKind::BinaryInputBlock: {
        BinaryInputBlock b;
        b.timestamp_ms = r.u48();
        const auto n = r.u16();
        b.points.resize(n);
        for (auto& p : b.points) {
            p.index = r.u16();
            p.state = r.u8() != 0;
            p.quality = r.u8();
        }
        return b;
    }
    case DnpKind::AnalogCommand: {
        AnalogCommand c;
        c.index = r.u16();
        c.value = r.f64();
        return c;
    }
    case DnpKind::BinaryCommand: {
        BinaryCommand c;
        c.index = r.u16();
        const auto op = r.u8();
        if (op > 1)
            fail(DnpError::UnknownKind, "binary operation " + std::to_string(op));
        c.operation = static_cast<BinaryOperation>(op);
        return c;
    }
    case DnpKind::Ack: {
        Ack a;
        a.acked_seq = r.u16();
        a.status = static_cast<AckStatus>(r.u8());
        return a;
    }
    }
    fail(DnpError::UnknownKind, "kind " + std::to_string(static_cast<int>(kind)));
}

}  // namespace

std::string to_string(DnpError e)
{
    switch (e) {
    case DnpError::BadMagic:
        return "BadMagic";
    case DnpError::BadCrc:
        return "BadCrc";
    case DnpError::TruncatedBody:
        return "TruncatedBody";
    case DnpError::UnknownKind:
        return "UnknownKind";
    }
    return "Unknown";
}

DnpKind DnpMessage::kind() const noexcept
{
    return std::visit(overloaded{
                          [](const AnalogInputBlock&) { return DnpKind::AnalogInputBlock; },
                          [](const BinaryInputBlock&) { return DnpKind::BinaryInputBlock; },
                          [](const AnalogCommand&) { return DnpKind::AnalogCommand; },
                          [](const BinaryCommand&) { return DnpKind::BinaryCommand; },
                          [](const Ack&) { return DnpKind::Ack; },
                      },
                      body);
}

Bytes encode_dnp(const DnpMessage& msg)
{
    Bytes out;
    ByteWriter w(out);
    w.u8(kDnpMagic0);
    w.u8(kDnpMagic1);
    w.u16(0);
    w.u8(static_cast<std::uint8_t>(msg.kind()));
    w.u16(msg.seq);
    w.u16(msg.src);
    w.u16(msg.dst);
    std::visit(overloaded{
                   [&](const AnalogInputBlock& b) {
                       write_timestamp(w, b.timestamp_ms);
                       w.u16(static_cast<std::uint16_t>(b.points.size()));
                       for (const auto& p : b.points) {
                           w.u16(p.index);
                           w.f64(p.value);
                           w.u8(p.quality);
                       }
                   },
                   [&](const BinaryInputBlock& b) {
                       write_timestamp(w, b.timestamp_ms);
                       w.u16(static_cast<std::uint16_t>(b.points.size()));
                       for (const auto& p : b.points) {
                           w.u16(p.index);
                           w.u8(p.state ? 1 : 0);
                           w.u8(p.quality);
                       }
                   },
                   [&](const AnalogCommand& c) {
                       w.u16(c.index);
                       w.f64(c.value);
                   },
                   [&](const BinaryCommand& c) {
                       w.u16(c.index);
                       w.u8(static_cast<std::uint8_t>(c.operation));
                   },
                   [&](const Ack& a) {
                       w.u16(a.acked_seq);
                       w.u8(static_cast<std::uint8_t>(a.status));
                   },
               },
               msg.body);
    const auto total = out.size() + 2;
    if (total > 0xFFFF)
        throw std::length_error("message exceeds 65535 bytes");
    w.patch_u16(2, static_cast<std::uint16_t>(total));
    w.u16(crc16(out));
    return out;
}

DnpMessage decode_dnp(std::span<const std::uint8_t> bytes)
{
    if (!magic_at(bytes, 0))
        fail(DnpError::BadMagic, "missing 0x4C54 magic");
    if (bytes.size() < kMinFrame)
        fail(DnpError::TruncatedBody, "shorter than a header");
    const std::size_t n = bytes.size();
    const std::uint16_t stored = static_cast<std::uint16_t>((bytes[n - 2] << 8) | bytes[n - 1]);
    if (crc16(bytes.first(n - 2)) != stored)
        fail(DnpError::BadCrc, "checksum mismatch");
    const std::size_t length = static_cast<std::size_t>((bytes[2] << 8) | bytes[3]);
    if (length != n)
        fail(DnpError::TruncatedBody, "length field disagrees with the buffer");
    if (!kind_known(bytes[4]))
        fail(DnpError::UnknownKind, "kind " + std::to_string(bytes[4]));

    ByteReader r(bytes.first(length - 2));
    r.u16();
    r.u16();
    const auto kind = static_cast<DnpKind>(r.u8());
    DnpMessage msg;
    msg.seq = r.u16();
    msg.src = r.u16();
    msg.dst = r.u16();
    try {
        msg.body = read_body(kind, r);
    } catch (const ReadPastEnd&) {
        fail(DnpError::TruncatedBody, "body shorter than its declared contents");
    }
    if (r.remaining() != 0)
        fail(DnpError::TruncatedBody, "trailing bytes after body");
    return msg;
}

void DnpStreamDecoder::feed(std::span<const std::uint8_t> bytes)
{
    buf_.insert(buf_.end(), bytes.begin(), bytes.end());
}

std::optional<DnpStreamDecoder::Item> DnpStreamDecoder::next()
{
    auto drop = [this](std::size_t n) { buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(n)); };
    for (;;) {
        std::size_t skip = 0;
        while (skip < buf_.size() && !(buf_[skip] == kDnpMagic0 && (skip + 1 == buf_.size() || buf_[skip + 1] == kDnpMagic1)))
            ++skip;
        if (skip > 0)
            drop(skip);
        if (buf_.size() < 4)
            return std::nullopt;
        const std::size_t length = static_cast<std::size_t>((buf_[2] << 8) | buf_[3]);
        if (length < kMinFrame) {
            drop(2);
            continue;
        }
        if (buf_.size() < length)
            return std::nullopt;

        const std::span<const std::uint8_t> frame(buf_.data(), length);
        const std::uint16_t stored = static_cast<std::uint16_t>((frame[length - 2] << 8) | frame[length - 1]);
        if (crc16(frame.first(length - 2)) != stored) {
            if (auto p = inner_magic(frame)) {
                drop(*p);
                return Item{std::nullopt, DnpError::TruncatedBody};
            }
            drop(length);
            return Item{std::nullopt, DnpError::BadCrc};
        }
        Item item;
        try {
            item.message = decode_dnp(frame);
        } catch (const DnpDecodeError& e) {
            item.error = e.code();
        }
        drop(length);
        return item;
    }
}

std::optional<DnpStreamDecoder::Item> DnpStreamDecoder::finish()
{
    if (buf_.empty())
        return std::nullopt;
    if (auto p = inner_magic(buf_)) {
        buf_.erase(buf_.begin(), buf_.begin() + static_cast<std::ptrdiff_t>(*p));
    } else {
        buf_.clear();
    }
    return Item{std::nullopt, DnpError::TruncatedBody};
}

std::optional<Bytes> DnpEndpoint::receive(std::span<const std::uint8_t> bytes)
{
    const auto reply = receive(decode_dnp(bytes));
    if (!reply)
        return std::nullopt;
    return encode_dnp(*reply);
}

std::optional<DnpMessage> DnpEndpoint::receive(const DnpMessage& msg)
{
    if (!msg.is_command())
        return std::nullopt;
    DnpMessage ack;
    ack.seq = seq_++;
    ack.src = address_;
    ack.dst = msg.src;
    ack.body = Ack{msg.seq, msg.dst == address_ ? handler_(msg) : AckStatus::UnknownPoint};
    return ack;
}

}  // namespace gridcosim::protocols
