// Copyright 2026 The CAP Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "cap/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <string>

#include "cap/error.hpp"

namespace cap {
namespace {

struct ReadCursor {
  std::span<const uint8_t> bytes;
  size_t offset = 0;
};

void read_from_span(png_structp png, png_bytep out, png_size_t n) {
  auto* cursor = static_cast<ReadCursor*>(png_get_io_ptr(png));
  if (cursor->offset + n > cursor->bytes.size()) {
    png_error(png, "truncated png");
  }
  std::memcpy(out, cursor->bytes.data() + cursor->offset, n);
  cursor->offset += n;
}

void write_to_vector(png_structp png, png_bytep data, png_size_t n) {
  auto* out = static_cast<std::vector<uint8_t>*>(png_get_io_ptr(png));
  out->insert(out->end(), data, data + n);
}

void flush_noop(png_structp) {}

void error_fn(png_structp png, png_const_charp msg) {
  auto* what = static_cast<std::string*>(png_get_error_ptr(png));
  if (what) *what = msg;
  png_longjmp(png, 1);
}

void warning_fn(png_structp, png_const_charp) {}

// Encodes `rows` of `bytes_per_row`. `bit_depth` 8 with RGB, or 16 gray.
std::vector<uint8_t> encode(int width, int height, int bit_depth,
                            int color_type,
                            const std::vector<std::vector<uint8_t>>& rows) {
  std::string what;
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, &what,
                                            error_fn, warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kImageWriteFailure, "png allocation failed");
  }
  std::vector<uint8_t> out;
  std::vector<png_bytep> row_ptrs(rows.size());
  for (size_t i = 0; i < rows.size(); ++i) {
    row_ptrs[i] = const_cast<png_bytep>(rows[i].data());
  }
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    throw Error(ErrorCode::kImageWriteFailure, what);
  }
  png_set_write_fn(png, &out, write_to_vector, flush_noop);
  png_set_IHDR(png, info, width, height, bit_depth, color_type,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT,
               PNG_FILTER_TYPE_DEFAULT);
  png_set_compression_level(png, 3);
  png_write_info(png, info);
  png_write_image(png, row_ptrs.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
  return out;
}

struct Decoded {
  int width = 0;
  int height = 0;
  int bit_depth = 0;
  int color_type = 0;
  std::vector<std::vector<uint8_t>> rows;
};

Decoded decode(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8 || png_sig_cmp(bytes.data(), 0, 8) != 0) {
    throw Error(ErrorCode::kImageReadFailure, "not a png stream");
  }
  std::string what;
  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, &what,
                                           error_fn, warning_fn);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!png || !info) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kImageReadFailure, "png allocation failed");
  }
  ReadCursor cursor{bytes, 0};
  Decoded d;
  std::vector<png_bytep> row_ptrs;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    throw Error(ErrorCode::kImageReadFailure, what);
  }
  png_set_read_fn(png, &cursor, read_from_span);
  png_read_info(png, info);
  d.width = static_cast<int>(png_get_image_width(png, info));
  d.height = static_cast<int>(png_get_image_height(png, info));
  d.bit_depth = png_get_bit_depth(png, info);
  d.color_type = png_get_color_type(png, info);
  const size_t rowbytes = png_get_rowbytes(png, info);
  d.rows.assign(d.height, std::vector<uint8_t>(rowbytes));
  row_ptrs.resize(d.height);
  for (int y = 0; y < d.height; ++y) row_ptrs[y] = d.rows[y].data();
  png_read_image(png, row_ptrs.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);
  return d;
}

std::vector<uint8_t> slurp(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) {
    throw Error(ErrorCode::kImageReadFailure,
                "cannot open " + path.string());
  }
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(in), {});
}

void dump(const std::filesystem::path& path, const std::vector<uint8_t>& b) {
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(b.data()),
            static_cast<std::streamsize>(b.size()));
  if (!out) {
    throw Error(ErrorCode::kImageWriteFailure,
                "cannot write " + path.string());
  }
}

}  // namespace

DepthImageMm depth_to_millimeters(const DepthMap& depth) {
  DepthImageMm out(depth.width, depth.height);
  for (size_t i = 0; i < depth.pixels.size(); ++i) {
    const double mm = std::round(depth.pixels[i] * 1000.0);
    out.pixels[i] = static_cast<uint16_t>(std::clamp(mm, 0.0, 65535.0));
  }
  return out;
}

DepthMap depth_from_millimeters(const DepthImageMm& depth) {
  DepthMap out(depth.width, depth.height);
  for (size_t i = 0; i < depth.pixels.size(); ++i) {
    out.pixels[i] = depth.pixels[i] / 1000.0;
  }
  return out;
}

std::vector<uint8_t> encode_png(const RgbImage& image) {
  std::vector<std::vector<uint8_t>> rows(image.height);
  for (int y = 0; y < image.height; ++y) {
    const auto* begin = &image.at(0, y);
    rows[y].assign(begin, begin + 3 * image.width);
  }
  return encode(image.width, image.height, 8, PNG_COLOR_TYPE_RGB, rows);
}

std::vector<uint8_t> encode_png(const DepthImageMm& image) {
  std::vector<std::vector<uint8_t>> rows(image.height,
                                         std::vector<uint8_t>(2 * image.width));
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      const uint16_t v = image.at(x, y);
      rows[y][2 * x] = static_cast<uint8_t>(v >> 8);  // png is big-endian
      rows[y][2 * x + 1] = static_cast<uint8_t>(v & 0xff);
    }
  }
  return encode(image.width, image.height, 16, PNG_COLOR_TYPE_GRAY, rows);
}

RgbImage decode_png_rgb(std::span<const uint8_t> bytes) {
  const Decoded d = decode(bytes);
  if (d.bit_depth != 8 || d.color_type != PNG_COLOR_TYPE_RGB) {
    throw Error(ErrorCode::kImageReadFailure, "expected 8-bit RGB png");
  }
  RgbImage out(d.width, d.height);
  for (int y = 0; y < d.height; ++y) {
    std::copy(d.rows[y].begin(), d.rows[y].begin() + 3 * d.width,
              &out.at(0, y));
  }
  return out;
}

DepthImageMm decode_png_depth(std::span<const uint8_t> bytes) {
  const Decoded d = decode(bytes);
  if (d.bit_depth != 16 || d.color_type != PNG_COLOR_TYPE_GRAY) {
    throw Error(ErrorCode::kImageReadFailure, "expected 16-bit gray png");
  }
  DepthImageMm out(d.width, d.height);
  for (int y = 0; y < d.height; ++y) {
    for (int x = 0; x < d.width; ++x) {
      out.at(x, y) = static_cast<uint16_t>((d.rows[y][2 * x] << 8) |
                                           d.rows[y][2 * x + 1]);
    }
  }
  return out;
}

void write_png(const std::filesystem::path& path, const RgbImage& image) {
  dump(path, encode_png(image));
}

void write_png(const std::filesystem::path& path, const DepthImageMm& image) {
  dump(path, encode_png(image));
}

RgbImage read_png_rgb(const std::filesystem::path& path) {
  return decode_png_rgb(slurp(path));
}

DepthImageMm read_png_depth(const std::filesystem::path& path) {
  return decode_png_depth(slurp(path));
}

}  // namespace cap
