#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gridcosim/protocols/bytes.hpp"

namespace gridcosim::protocols {

/// Wire layout, big-endian:
///   magic 0x4C 0x54 | length u16 (whole frame) | kind u8 | seq u16 | src u16 | dst u16
///   | body | crc16 over everything before it.
inline constexpr std::uint8_t kDnpMagic0 = 0x4C;
inline constexpr std::uint8_t kDnpMagic1 = 0x54;
inline constexpr std::size_t kDnpHeaderSize = 11;

enum class DnpKind : std::uint8_t {
    AnalogInputBlock = 0x01,
    BinaryInputBlock = 0x02,
    AnalogCommand = 0x03,
    BinaryCommand = 0x04,
    Ack = 0x05,
};

enum class DnpError { BadMagic, BadCrc, TruncatedBody, UnknownKind };

std::string to_string(DnpError e);

class DnpDecodeError : public std::runtime_error {
public:
    DnpDecodeError(DnpError code, const std::string& what) : std::runtime_error(what), code_(code) {}
    DnpError code() const noexcept { return code_; }

private:
    DnpError code_;
};

struct DnpAnalogPoint {
    std::uint16_t index = 0;
    double value = 0.0;
    std::uint8_t quality = 0;

    bool operator==(const DnpAnalogPoint&) const = default;
};

struct DnpBinaryPoint {
    std::uint16_t index = 0;
    bool state = false;
    std::uint8_t quality = 0;

    bool operator==(const DnpBinaryPoint&) const = default;
};

/// Timestamps are u48 milliseconds.
struct AnalogInputBlock {
    std::uint64_t timestamp_ms = 0;
    std::vector<DnpAnalogPoint> points;

    bool operator==(const AnalogInputBlock&) const = default;
};

struct BinaryInputBlock {
    std::uint64_t timestamp_ms = 0;
    std::vector<DnpBinaryPoint> points;

    bool operator==(const BinaryInputBlock&) const = default;
};

struct AnalogCommand {
    std::uint16_t index = 0;
    double value = 0.0;

    bool operator==(const AnalogCommand&) const = default;
};

enum class BinaryOperation : std::uint8_t { Trip = 0, Close = 1 };

struct BinaryCommand {
    std::uint16_t index = 0;
    BinaryOperation operation = BinaryOperation::Trip;

    bool operator==(const BinaryCommand&) const = default;
};

enum class AckStatus : std::uint8_t { Ok = 0, UnknownPoint = 1, Rejected = 2 };

struct Ack {
    std::uint16_t acked_seq = 0;
    AckStatus status = AckStatus::Ok;

    bool operator==(const Ack&) const = default;
};

using DnpBody = std::variant<AnalogInputBlock, BinaryInputBlock, AnalogCommand, BinaryCommand, Ack>;

struct DnpMessage {
    std::uint16_t seq = 0;
    std::uint16_t src = 0;
    std::uint16_t dst = 0;
    DnpBody body;

    DnpKind kind() const noexcept;
    bool is_command() const noexcept
    {
        return std::holds_alternative<AnalogCommand>(body) || std::holds_alternative<BinaryCommand>(body);
    }
    bool operator==(const DnpMessage&) const = default;
};

Bytes encode_dnp(const DnpMessage& msg);

/// Decodes exactly one frame occupying the whole buffer.
DnpMessage decode_dnp(std::span<const std::uint8_t> bytes);

/// Incremental splitter. A damaged frame yields an error entry; when another
/// magic sits inside the damaged span the stream resumes there.
class DnpStreamDecoder {
public:
    struct Item {
        std::optional<DnpMessage> message;
        std::optional<DnpError> error;
    };

    void feed(std::span<const std::uint8_t> bytes);
    std::optional<Item> next();
    /// Flushes an incomplete trailing frame as TruncatedBody.
    std::optional<Item> finish();

private:
    Bytes buf_;
};

/// Receiving side of the command path: every command is handed to
/// `handler` and answered with an Ack echoing its sequence number.
class DnpEndpoint {
public:
    using Handler = std::function<AckStatus(const DnpMessage&)>;

    DnpEndpoint(std::uint16_t address, Handler handler) : address_(address), handler_(std::move(handler)) {}

    /// Ack bytes for commands; nullopt for everything else.
    std::optional<Bytes> receive(std::span<const std::uint8_t> bytes);
    std::optional<DnpMessage> receive(const DnpMessage& msg);

    std::uint16_t address() const noexcept { return address_; }

private:
    std::uint16_t address_;
    Handler handler_;
    std::uint16_t seq_ = 0;
};

}  // namespace gridcosim::protocols
