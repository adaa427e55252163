#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "spn/training.hpp"

namespace spn {

/// Binary model file:
///   "SPNW" | u32 version | u32 len + architecture name | u32 len + options
///   | u32 tensor count | per tensor: u32 len + name, u32 rank, u64 dims...,
///   f64 values...
/// All integers and reals little-endian.
inline constexpr char kModelMagic[4] = {'S', 'P', 'N', 'W'};
inline constexpr std::uint32_t kModelVersion = 1;

std::vector<unsigned char> encode_model(const ModelState& state);
/// Throws FormatError naming the field that is bad or truncated, and
/// GraphError when the tensors do not fit the named architecture.
ModelState decode_model(std::span<const unsigned char> bytes);

void save_model(const ModelState& state, const std::filesystem::path& path);
ModelState load_model(const std::filesystem::path& path);
/// As above, but rejects a file holding any other architecture.
ModelState load_model(const std::filesystem::path& path, const ArchitectureId& expected);

}  // namespace spn
