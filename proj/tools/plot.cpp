// SPDX-License-Identifier: Apache-2.0
#include "plot.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>

#include "skycast/errors.hpp"

namespace skycast::cli {

namespace {

constexpr std::size_t kMargin = 20;
const Rgb kAxis{60, 60, 60};

void put(Image& img, long x, long y, const Rgb& c) {
  if (x < 0 || y < 0 || x >= static_cast<long>(img.width) || y >= static_cast<long>(img.height)) return;
  for (std::size_t k = 0; k < 3; ++k) img.at(static_cast<std::size_t>(x), static_cast<std::size_t>(y), k) = c[k];
}

void line(Image& img, long x0, long y0, long x1, long y1, const Rgb& c) {
  const long dx = std::labs(x1 - x0), dy = -std::labs(y1 - y0);
  const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
  long err = dx + dy;
  while (true) {
    put(img, x0, y0, c);
    if (x0 == x1 && y0 == y1) break;
    const long e2 = 2 * err;
    if (e2 >= dy) {
      err += dy;
      x0 += sx;
    }
    if (e2 <= dx) {
      err += dx;
      y0 += sy;
    }
  }
}

void fill(Image& img, long x0, long y0, long x1, long y1, const Rgb& c) {
  for (long y = std::min(y0, y1); y <= std::max(y0, y1); ++y) {
    for (long x = std::min(x0, x1); x <= std::max(x0, x1); ++x) put(img, x, y, c);
  }
}

double series_max(const std::vector<Series>& series) {
  double hi = 0.0;
  for (const auto& s : series) {
    for (double v : s.values) {
      if (std::isfinite(v)) hi = std::max(hi, v);
    }
  }
  return hi > 0.0 ? hi : 1.0;
}

Image canvas(std::size_t width, std::size_t height) {
  if (width <= 2 * kMargin || height <= 2 * kMargin) throw InvalidArgument("plot: canvas too small");
  Image img(width, height, 255);
  const long l = kMargin, b = static_cast<long>(height - kMargin);
  line(img, l, static_cast<long>(kMargin), l, b, kAxis);
  line(img, l, b, static_cast<long>(width - kMargin), b, kAxis);
  return img;
}

}  // namespace

Image line_plot(const std::vector<Series>& series, std::size_t width, std::size_t height) {
  Image img = canvas(width, height);
  const double hi = series_max(series);
  const double w = static_cast<double>(width - 2 * kMargin), h = static_cast<double>(height - 2 * kMargin);
  for (const auto& s : series) {
    const std::size_t n = s.values.size();
    bool have = false;
    long px = 0, py = 0;
    for (std::size_t i = 0; i < n; ++i) {
      if (!std::isfinite(s.values[i])) {
        have = false;
        continue;
      }
      const double fx = n > 1 ? static_cast<double>(i) / static_cast<double>(n - 1) : 0.5;
      const long x = static_cast<long>(kMargin) + std::lround(fx * w);
      const long y = static_cast<long>(height - kMargin) - std::lround(std::max(0.0, s.values[i]) / hi * h);
      if (have) {
        line(img, px, py, x, y, s.color);
      } else {
        put(img, x, y, s.color);
      }
      px = x;
      py = y;
      have = true;
    }
  }
  return img;
}

Image bar_plot(const std::vector<Series>& series, std::size_t width, std::size_t height) {
  Image img = canvas(width, height);
  std::size_t groups = 0;
  for (const auto& s : series) groups = std::max(groups, s.values.size());
  if (groups == 0 || series.empty()) return img;
  const double hi = series_max(series);
  const double w = static_cast<double>(width - 2 * kMargin), h = static_cast<double>(height - 2 * kMargin);
  const double group_w = w / static_cast<double>(groups);
  const double bar_w = group_w * 0.8 / static_cast<double>(series.size());
  for (std::size_t g = 0; g < groups; ++g) {
    for (std::size_t k = 0; k < series.size(); ++k) {
      if (g >= series[k].values.size() || !std::isfinite(series[k].values[g])) continue;
      const double x0 = static_cast<double>(kMargin) + group_w * (static_cast<double>(g) + 0.1) +
                        bar_w * static_cast<double>(k);
      const long top = static_cast<long>(height - kMargin) - std::lround(std::max(0.0, series[k].values[g]) / hi * h);
      fill(img, std::lround(x0), top, std::lround(x0 + bar_w) - 1, static_cast<long>(height - kMargin) - 1,
           series[k].color);
    }
  }
  return img;
}

Rgb heat_color(double v) {
  v = std::clamp(v, 0.0, 1.0);
  // Piecewise-linear through blue, cyan, yellow, red.
  static const double stops[4][3] = {{0, 0, 160}, {0, 200, 220}, {250, 230, 0}, {220, 0, 0}};
  const double s = v * 3.0;
  const std::size_t i = std::min<std::size_t>(2, static_cast<std::size_t>(s));
  const double f = s - static_cast<double>(i);
  Rgb c;
  for (std::size_t k = 0; k < 3; ++k) {
    c[k] = static_cast<std::uint8_t>(std::lround(stops[i][k] + f * (stops[i + 1][k] - stops[i][k])));
  }
  return c;
}

Image heatmap_image(const Tensor& map) {
  if (map.rank() != 2) throw InvalidShape("heatmap_image: expected [H,W]");
  const std::size_t h = map.dim(0), w = map.dim(1);
  Image img(w, h);
  const auto d = map.data();
  for (std::size_t y = 0; y < h; ++y) {
    for (std::size_t x = 0; x < w; ++x) {
      const Rgb c = heat_color(d[y * w + x]);
      for (std::size_t k = 0; k < 3; ++k) img.at(x, y, k) = c[k];
    }
  }
  return img;
}

Image overlay(const Image& frame, const Tensor& map) {
  const Image heat = heatmap_image(map);
  if (heat.width != frame.width || heat.height != frame.height) throw InvalidShape("overlay: size mismatch");
  Image out = frame;
  for (std::size_t i = 0; i < out.pixels.size(); ++i) {
    out.pixels[i] = static_cast<std::uint8_t>((frame.pixels[i] + heat.pixels[i] + 1) / 2);
  }
  return out;
}

Image tile(const std::vector<Image>& images, std::size_t cols, std::size_t gap) {
  if (images.empty() || cols == 0) throw InvalidArgument("tile: nothing to tile");
  const std::size_t w = images.front().width, h = images.front().height;
  const std::size_t rows = (images.size() + cols - 1) / cols;
  Image out(cols * w + (cols + 1) * gap, rows * h + (rows + 1) * gap, 255);
  for (std::size_t i = 0; i < images.size(); ++i) {
    const Image& im = images[i];
    if (im.width != w || im.height != h) throw InvalidShape("tile: images differ in size");
    const std::size_t ox = gap + (i % cols) * (w + gap), oy = gap + (i / cols) * (h + gap);
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        for (std::size_t k = 0; k < 3; ++k) out.at(ox + x, oy + y, k) = im.at(x, y, k);
      }
    }
  }
  return out;
}

}  // namespace skycast::cli
