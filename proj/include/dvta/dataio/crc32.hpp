#pragma once

#include <cstddef>
#include <cstdint>
#include <span>

namespace dvta {

/// IEEE 802.3 CRC-32 (the zlib/PNG polynomial).
std::uint32_t crc32(std::span<const std::byte> bytes, std::uint32_t seed = 0);

}  // namespace dvta
