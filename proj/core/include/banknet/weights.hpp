#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "banknet/model.hpp"

namespace bnk {

// .bnkw checkpoint layout, all integers little-endian:
//   "BNKW" | version u32 | tensor count u32
//   per tensor: name length u16, UTF-8 name, rank u8, dims u32 each,
//               values as 32-bit IEEE-754 floats in row-major order
//   trailing CRC-32 (IEEE, reflected poly 0xEDB88320) of all preceding bytes.
// Tensors appear in ParamStore declaration order.
inline constexpr std::uint32_t kWeightVersion = 1;

std::uint32_t crc32_ieee(const std::uint8_t* data, std::size_t n);

void save_weights(const ParamStore& params, const std::filesystem::path& path);

/// Validates checksum, magic and version; values are widened to double.
ParamStore load_weights(const std::filesystem::path& path);

/// Additionally checks that names and shapes agree exactly with the model's
/// parameter declarations.
ParamStore load_weights(const std::filesystem::path& path, const ModelSpec& expect);

struct WeightEntry {
  std::string name;
  std::vector<int> shape;
};

/// Names and shapes only (still validates the file).
std::vector<WeightEntry> peek_weights(const std::filesystem::path& path);

}  // namespace bnk
