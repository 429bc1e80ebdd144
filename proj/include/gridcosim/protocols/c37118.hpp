#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "gridcosim/protocols/bytes.hpp"

namespace gridcosim::protocols {

inline constexpr std::uint8_t kC37Sync = 0xAA;

enum class FrameType : std::uint8_t { Data = 0x01, Header = 0x11, Config2 = 0x31, Command = 0x41 };

enum class CommandCode : std::uint16_t { DataOff = 1, DataOn = 2, SendConfig2 = 5 };

/// FORMAT word bits: polar, float phasors, float analogs, float frequency.
inline constexpr std::uint16_t kFormatFloatPolar = 0x000F;

/// STAT word values used by the sensors.
inline constexpr std::uint16_t kStatOk = 0x0000;
inline constexpr std::uint16_t kStatInvalid = 0x4000;
inline constexpr std::uint16_t kStatDeenergized = 0x4008;

enum class C37Error { BadSync, BadCrc, SizeMismatch, NoConfigBound, UnknownCommandCode, Truncated, UnsupportedFormat };

std::string to_string(C37Error e);

class C37DecodeError : public std::runtime_error {
public:
    C37DecodeError(C37Error code, const std::string& what) : std::runtime_error(what), code_(code) {}
    C37Error code() const noexcept { return code_; }

private:
    C37Error code_;
};

/// Common frame prefix; fracsec carries the quality byte in its top 8 bits.
struct C37Prefix {
    std::uint16_t idcode = 0;
    std::uint32_t soc = 0;
    std::uint32_t fracsec = 0;

    bool operator==(const C37Prefix&) const = default;
};

struct PmuChannelConfig {
    std::string station;  // up to 16 characters
    std::uint16_t idcode = 0;
    std::uint16_t format = kFormatFloatPolar;
    std::vector<std::string> phasor_names;
    /// PHUNIT words: top byte 0 voltage, 1 current; low 24 bits scale (unused for float).
    std::vector<std::uint32_t> phasor_units;
    std::uint16_t fnom = 0;  // bit 0 set means 50 Hz
    std::uint16_t cfgcnt = 0;

    bool operator==(const PmuChannelConfig&) const = default;
};

struct C37Config {
    C37Prefix prefix;
    std::uint32_t time_base = 1'000'000;
    std::vector<PmuChannelConfig> pmus;
    std::int16_t data_rate = 30;

    bool operator==(const C37Config&) const = default;
};

struct PolarPhasor {
    float magnitude = 0.0f;
    float angle = 0.0f;

    bool operator==(const PolarPhasor&) const = default;
};

struct PmuData {
    std::uint16_t stat = kStatOk;
    std::vector<PolarPhasor> phasors;
    float freq = 0.0f;   // Hz
    float dfreq = 0.0f;  // Hz/s

    bool operator==(const PmuData&) const = default;
};

struct C37Data {
    C37Prefix prefix;
    std::vector<PmuData> pmus;

    bool operator==(const C37Data&) const = default;
};

struct C37Command {
    C37Prefix prefix;
    std::uint16_t command = 0;

    bool operator==(const C37Command&) const = default;
};

struct C37Header {
    C37Prefix prefix;
    std::string text;

    bool operator==(const C37Header&) const = default;
};

using C37Frame = std::variant<C37Data, C37Config, C37Command, C37Header>;

/// Data frame size implied by a config.
std::size_t data_frame_size(const C37Config& cfg) noexcept;

Bytes encode_data(const C37Data& frame, const C37Config& cfg);
Bytes encode_config(const C37Config& cfg);
Bytes encode_command(const C37Command& cmd);
Bytes encode_header(const C37Header& hdr);

/// Validates sync, CRC, type and size, then the body against `cfg`.
C37Data decode_data(std::span<const std::uint8_t> bytes, const C37Config* cfg);
C37Config decode_config(std::span<const std::uint8_t> bytes);
C37Command decode_command(std::span<const std::uint8_t> bytes);
C37Header decode_header(std::span<const std::uint8_t> bytes);

/// Decodes any frame type; data frames need a bound config.
C37Frame decode_frame(std::span<const std::uint8_t> bytes, const C37Config* cfg);

/// Type and source id of a frame that passed the outer checks.
struct FrameInfo {
    FrameType type;
    std::uint16_t idcode;
    std::uint16_t framesize;
};
FrameInfo inspect_frame(std::span<const std::uint8_t> bytes);

/// Incremental splitter for a concatenated frame stream. Garbage and corrupt
/// frames are skipped by searching for the next sync byte.
class C37StreamDecoder {
public:
    void feed(std::span<const std::uint8_t> bytes);

    /// Next complete, checksum-valid frame, if any.
    std::optional<Bytes> next();

    std::size_t discarded_bytes() const noexcept { return discarded_; }
    std::size_t buffered() const noexcept { return buf_.size(); }

private:
    Bytes buf_;
    std::size_t discarded_ = 0;
};

}  // namespace gridcosim::protocols
