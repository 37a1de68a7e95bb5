#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "dvta/alignment/config.hpp"
#include "dvta/alignment/params.hpp"

namespace dvta {

// Checkpoint container (integers little-endian):
//   "DVCK"  u32 version (1)
//   u32 config_length, config_length bytes of ModelConfig JSON
//   u32 tensor_count
//   per tensor, in parameter_layout() order:
//     u32 name_length, name bytes, one feature-file block ("DVTA" ... CRC)
//   u32 CRC-32 of every preceding byte
// Tensors are stored as binary32, so a reload rounds parameters to single
// precision.
inline constexpr std::array<char, 4> kCheckpointMagic{'D', 'V', 'C', 'K'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct Checkpoint {
  ModelConfig config;
  ModelParams params;
};

std::vector<std::byte> encode_checkpoint(const ModelConfig& config, const ModelParams& params);
Checkpoint decode_checkpoint(std::span<const std::byte> bytes);

void save_checkpoint(const std::filesystem::path& path, const ModelConfig& config,
                     const ModelParams& params);
Checkpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace dvta
