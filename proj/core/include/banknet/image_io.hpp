#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "banknet/tensor.hpp"

namespace bnk {

/// 8-bit interleaved RGB raster.
struct ImageU8 {
  int h = 0;
  int w = 0;
  std::vector<std::uint8_t> data;  // h * w * 3
};

/// Binary PPM (P6, maxval 255) reader. Throws DataError on anything it
/// cannot decode.
ImageU8 read_ppm(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const ImageU8& image);

/// u8 RGB -> H x W x 3 doubles in [0, 1] (x / 255).
Tensor decode_to_unit(const ImageU8& image);
/// [0, 1] doubles -> u8 RGB, clamped and rounded.
ImageU8 encode_from_unit(const Tensor& image);

/// Half-pixel-center bilinear resize with edge clamping:
/// src = (dst + 0.5) * in/out - 0.5.
Tensor resize_bilinear(const Tensor& image, int out_h, int out_w);

}  // namespace bnk
