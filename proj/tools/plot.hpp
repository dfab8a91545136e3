// SPDX-License-Identifier: Apache-2.0
//
// Minimal raster figures written as PNG: line series, grouped bars and a
// heatmap colormap.
#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "skycast/image.hpp"
#include "skycast/tensor.hpp"

namespace skycast::cli {

using Rgb = std::array<std::uint8_t, 3>;

struct Series {
  std::vector<double> values;  // NaN leaves a gap
  Rgb color;
};

/// Series share the x axis (index) and a y axis from 0 to the largest value.
Image line_plot(const std::vector<Series>& series, std::size_t width = 800, std::size_t height = 300);

/// One bar group per index; each series contributes one bar per group.
Image bar_plot(const std::vector<Series>& series, std::size_t width = 800, std::size_t height = 300);

/// Blue-cyan-yellow-red ramp for v in [0, 1].
Rgb heat_color(double v);

/// [H,W] map in [0,1] to a colormapped image.
Image heatmap_image(const Tensor& map);

/// 50/50 blend of a frame and a colormapped map of the same size.
Image overlay(const Image& frame, const Tensor& map);

/// Tiles equally sized images into `rows` x `cols` with a gap.
Image tile(const std::vector<Image>& images, std::size_t cols, std::size_t gap = 2);

}  // namespace skycast::cli
