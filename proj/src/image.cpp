// SPDX-License-Identifier: Apache-2.0
#include "skycast/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <array>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <memory>

#include "skycast/errors.hpp"

namespace skycast {
namespace fs = std::filesystem;

namespace {

enum class Format { kPng, kJpeg, kUnknown };

Format sniff(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DecodeError(path.string(), "cannot open file");
  std::array<unsigned char, 8> sig{};
  in.read(reinterpret_cast<char*>(sig.data()), sig.size());
  const auto n = in.gcount();
  if (n >= 8 && png_sig_cmp(sig.data(), 0, 8) == 0) return Format::kPng;
  if (n >= 3 && sig[0] == 0xFF && sig[1] == 0xD8 && sig[2] == 0xFF) return Format::kJpeg;
  return Format::kUnknown;
}

Image decode_png(const fs::path& path) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  if (!png_image_begin_read_from_file(&img, path.c_str())) {
    throw DecodeError(path.string(), img.message);
  }
  img.format = PNG_FORMAT_RGB;
  Image out(img.width, img.height);
  if (!png_image_finish_read(&img, nullptr, out.pixels.data(), 0, nullptr)) {
    const std::string msg = img.message;
    png_image_free(&img);
    throw DecodeError(path.string(), msg);
  }
  return out;
}

struct JpegErrorManager {
  jpeg_error_mgr base;
  std::jmp_buf jump;
  char message[JMSG_LENGTH_MAX];
};

void jpeg_error_exit(j_common_ptr cinfo) {
  auto* err = reinterpret_cast<JpegErrorManager*>(cinfo->err);
  (*cinfo->err->format_message)(cinfo, err->message);
  std::longjmp(err->jump, 1);
}

struct FileCloser {
  void operator()(std::FILE* f) const {
    if (f) std::fclose(f);
  }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

// Only trivially destructible locals live in frames that setjmp/longjmp
// cross; the caller owns the image and turns failure into an exception.
bool read_jpeg(std::FILE* file, Image* out, char* message) {
  jpeg_decompress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    std::memcpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_decompress(&cinfo);
    return false;
  }
  jpeg_create_decompress(&cinfo);
  jpeg_stdio_src(&cinfo, file);
  jpeg_read_header(&cinfo, TRUE);
  cinfo.out_color_space = JCS_RGB;
  jpeg_start_decompress(&cinfo);
  out->width = cinfo.output_width;
  out->height = cinfo.output_height;
  out->pixels.resize(out->width * out->height * 3);
  while (cinfo.output_scanline < cinfo.output_height) {
    JSAMPROW row = out->pixels.data() + static_cast<std::size_t>(cinfo.output_scanline) * out->width * 3;
    jpeg_read_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_decompress(&cinfo);
  jpeg_destroy_decompress(&cinfo);
  return true;
}

bool write_jpeg_file(std::FILE* file, const Image* image, int quality, char* message) {
  jpeg_compress_struct cinfo;
  JpegErrorManager err;
  cinfo.err = jpeg_std_error(&err.base);
  err.base.error_exit = jpeg_error_exit;
  if (setjmp(err.jump)) {
    std::memcpy(message, err.message, JMSG_LENGTH_MAX);
    jpeg_destroy_compress(&cinfo);
    return false;
  }
  jpeg_create_compress(&cinfo);
  jpeg_stdio_dest(&cinfo, file);
  cinfo.image_width = static_cast<JDIMENSION>(image->width);
  cinfo.image_height = static_cast<JDIMENSION>(image->height);
  cinfo.input_components = 3;
  cinfo.in_color_space = JCS_RGB;
  jpeg_set_defaults(&cinfo);
  jpeg_set_quality(&cinfo, quality, TRUE);
  jpeg_start_compress(&cinfo, TRUE);
  while (cinfo.next_scanline < cinfo.image_height) {
    JSAMPROW row = const_cast<JSAMPLE*>(image->pixels.data()) +
                   static_cast<std::size_t>(cinfo.next_scanline) * image->width * 3;
    jpeg_write_scanlines(&cinfo, &row, 1);
  }
  jpeg_finish_compress(&cinfo);
  jpeg_destroy_compress(&cinfo);
  return true;
}

Image decode_jpeg(const fs::path& path) {
  FilePtr file(std::fopen(path.c_str(), "rb"));
  if (!file) throw DecodeError(path.string(), "cannot open file");
  Image out;
  char message[JMSG_LENGTH_MAX] = {};
  if (!read_jpeg(file.get(), &out, message)) throw DecodeError(path.string(), message);
  return out;
}

// Per-axis box-filter weights for resampling n source cells onto m targets.
struct AxisWeights {
  std::vector<std::size_t> first;
  std::vector<std::vector<double>> w;
};

AxisWeights area_weights(std::size_t n, std::size_t m) {
  AxisWeights a;
  a.first.resize(m);
  a.w.resize(m);
  const double scale = static_cast<double>(n) / static_cast<double>(m);
  for (std::size_t j = 0; j < m; ++j) {
    const double lo = j * scale;
    const double hi = (j + 1) * scale;
    const auto s0 = static_cast<std::size_t>(std::floor(lo));
    const auto s1 = std::min(n, static_cast<std::size_t>(std::ceil(hi)));
    a.first[j] = s0;
    for (std::size_t s = s0; s < s1; ++s) {
      const double cover = std::min(hi, s + 1.0) - std::max(lo, static_cast<double>(s));
      a.w[j].push_back(cover / scale);
    }
  }
  return a;
}

}  // namespace

Image decode_image(const fs::path& path) {
  switch (sniff(path)) {
    case Format::kPng:
      return decode_png(path);
    case Format::kJpeg:
      return decode_jpeg(path);
    case Format::kUnknown:
      break;
  }
  throw DecodeError(path.string(), "not a PNG or JPEG file");
}

void write_png(const fs::path& path, const Image& image) {
  png_image img;
  std::memset(&img, 0, sizeof img);
  img.version = PNG_IMAGE_VERSION;
  img.width = static_cast<png_uint_32>(image.width);
  img.height = static_cast<png_uint_32>(image.height);
  img.format = PNG_FORMAT_RGB;
  if (!png_image_write_to_file(&img, path.c_str(), 0, image.pixels.data(), 0, nullptr)) {
    throw IoError("cannot write " + path.string() + ": " + img.message);
  }
}

void write_jpeg(const fs::path& path, const Image& image, int quality) {
  FilePtr file(std::fopen(path.c_str(), "wb"));
  if (!file) throw IoError("cannot open " + path.string() + " for writing");
  char message[JMSG_LENGTH_MAX] = {};
  if (!write_jpeg_file(file.get(), &image, quality, message)) {
    throw IoError("cannot write " + path.string() + ": " + message);
  }
}

Image letterbox(const Image& image) {
  const std::size_t side = std::max(image.width, image.height);
  Image out(side, side, 0);
  const std::size_t x0 = (side - image.width) / 2;
  const std::size_t y0 = (side - image.height) / 2;
  for (std::size_t y = 0; y < image.height; ++y) {
    std::copy_n(image.pixels.begin() + static_cast<std::ptrdiff_t>(y * image.width * 3), image.width * 3,
                out.pixels.begin() + static_cast<std::ptrdiff_t>(((y + y0) * side + x0) * 3));
  }
  return out;
}

Tensor normalize_image(const Image& image, std::size_t side) {
  if (image.width == 0 || image.height == 0) throw InvalidArgument("normalize_image: empty image");
  if (side == 0) throw InvalidArgument("normalize_image: output side must be positive");
  const Image sq = letterbox(image);
  const std::size_t n = sq.width;
  const AxisWeights a = area_weights(n, side);

  // Horizontal pass into [c][y][side], then vertical into [c][side][side].
  std::vector<double> tmp(3 * n * side, 0.0);
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t j = 0; j < side; ++j) {
      for (std::size_t c = 0; c < 3; ++c) {
        double acc = 0.0;
        for (std::size_t t = 0; t < a.w[j].size(); ++t) acc += a.w[j][t] * sq.at(a.first[j] + t, y, c);
        tmp[(c * n + y) * side + j] = acc;
      }
    }
  }
  std::vector<double> out(3 * side * side, 0.0);
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t i = 0; i < side; ++i) {
      for (std::size_t j = 0; j < side; ++j) {
        double acc = 0.0;
        for (std::size_t t = 0; t < a.w[i].size(); ++t) acc += a.w[i][t] * tmp[(c * n + a.first[i] + t) * side + j];
        out[(c * side + i) * side + j] = std::clamp(acc / 255.0, 0.0, 1.0);
      }
    }
  }
  return Tensor({3, side, side}, std::move(out));
}

Tensor decode_and_normalize(const fs::path& path, std::size_t side) {
  return normalize_image(decode_image(path), side);
}

Image tensor_to_image(const Tensor& chw) {
  if (chw.rank() != 3 || chw.dim(0) != 3) {
    throw InvalidShape("tensor_to_image: expected [3,H,W], got " + shape_string(chw.shape()));
  }
  const std::size_t h = chw.dim(1), w = chw.dim(2);
  Image img(w, h);
  const auto d = chw.data();
  for (std::size_t c = 0; c < 3; ++c) {
    for (std::size_t y = 0; y < h; ++y) {
      for (std::size_t x = 0; x < w; ++x) {
        const double v = std::clamp(d[(c * h + y) * w + x], 0.0, 1.0);
        img.at(x, y, c) = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return img;
}

}  // namespace skycast
