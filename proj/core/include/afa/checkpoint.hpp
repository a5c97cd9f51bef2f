#pragma once

// AFAC checkpoint format (all integers little-endian):
//   "AFAC" | u32 version = 1 | u32 config length + key=value text
//   | u32 tensor count | per tensor: u16 name length + name, u8 rank,
//     u32 per dim, raw float32 values.

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "afa/network.hpp"

namespace afa {

inline constexpr std::uint32_t kCheckpointVersion = 1;

std::vector<std::uint8_t> encode_checkpoint(const Parameters<float>& params);

/// Validates magic, version and that every tensor name/shape matches the embedded config.
Parameters<float> decode_checkpoint(std::span<const std::uint8_t> bytes);

void save_checkpoint(const std::filesystem::path& path, const Parameters<float>& params);
Parameters<float> load_checkpoint(const std::filesystem::path& path);

/// Also throws ConfigError when the stored config differs from `expected`.
Parameters<float> load_checkpoint(const std::filesystem::path& path, const NetworkConfig& expected);

}  // namespace afa
