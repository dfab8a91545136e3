// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "skycast/tensor.hpp"

namespace skycast {

/// 8-bit RGB raster, interleaved, row-major.
struct Image {
  std::size_t width = 0;
  std::size_t height = 0;
  std::vector<std::uint8_t> pixels;

  Image() = default;
  Image(std::size_t w, std::size_t h, std::uint8_t fill = 0) : width(w), height(h), pixels(w * h * 3, fill) {}

  std::uint8_t& at(std::size_t x, std::size_t y, std::size_t c) { return pixels[(y * width + x) * 3 + c]; }
  std::uint8_t at(std::size_t x, std::size_t y, std::size_t c) const { return pixels[(y * width + x) * 3 + c]; }
};

/// PNG or JPEG, detected from the file signature. Grey images are expanded
/// to RGB. Throws DecodeError carrying the path.
Image decode_image(const std::filesystem::path& path);

void write_png(const std::filesystem::path& path, const Image& image);
void write_jpeg(const std::filesystem::path& path, const Image& image, int quality = 95);

/// Pads the shorter side with black to a centered square (an odd remainder
/// goes to the bottom/right band).
Image letterbox(const Image& image);

/// Letterbox, area-resample to side x side and scale by 1/255. Returns a
/// [3, side, side] tensor with values in [0, 1].
Tensor normalize_image(const Image& image, std::size_t side = 64);

Tensor decode_and_normalize(const std::filesystem::path& path, std::size_t side = 64);

/// Inverse scaling of a [3,H,W] tensor, rounding to the nearest level.
Image tensor_to_image(const Tensor& chw);

}  // namespace skycast
