#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dvta/numkernel/matrix.hpp"

namespace dvta {

// Feature file layout (all integers little-endian):
//   bytes 0..3   magic "DVTA"
//   u32          version (1)
//   u32          rows
//   u32          cols
//   rows*cols    IEEE-754 binary32, row-major
//   u32          CRC-32 of the payload bytes
inline constexpr std::array<char, 4> kFeatureMagic{'D', 'V', 'T', 'A'};
inline constexpr std::uint32_t kFeatureVersion = 1;
inline constexpr std::size_t kFeatureHeaderBytes = 16;

/// Serializes m as binary32. Throws NumericError when a value is non-finite
/// or overflows single precision.
std::vector<std::byte> encode_feature_matrix(const Matrix& m);

/// Parses one feature block starting at bytes[0]. `consumed` receives the
/// block length; `base_offset` is added to offsets reported in FormatError.
Matrix decode_feature_matrix(std::span<const std::byte> bytes, std::size_t* consumed = nullptr,
                             std::uint64_t base_offset = 0);

Matrix load_feature_file(const std::filesystem::path& path);
void save_feature_file(const std::filesystem::path& path, const Matrix& m);

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

/// Writes to a sibling temporary file and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

// Little-endian helpers shared with the checkpoint container.
void put_u32(std::vector<std::byte>& out, std::uint32_t v);
std::uint32_t get_u32(std::span<const std::byte> bytes, std::size_t at);

}  // namespace dvta
