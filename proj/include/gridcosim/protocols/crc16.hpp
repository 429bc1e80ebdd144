#pragma once

#include <cstdint>
#include <span>

namespace gridcosim::protocols {

/// CRC-16/CCITT-FALSE: poly 0x1021, init 0xFFFF, no reflection, no final xor.
std::uint16_t crc16(std::span<const std::uint8_t> bytes) noexcept;

/// Bit-at-a-time version of the same checksum.
std::uint16_t crc16_bitwise(std::span<const std::uint8_t> bytes) noexcept;

}  // namespace gridcosim::protocols
