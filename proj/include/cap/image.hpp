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

#ifndef CAP_IMAGE_HPP_
#define CAP_IMAGE_HPP_

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

namespace cap {

// Row-major interleaved image buffer.
template <typename T, int Channels = 1>
struct Image {
  int width = 0;
  int height = 0;
  std::vector<T> pixels;

  Image() = default;
  Image(int w, int h, T fill = T{})
      : width(w), height(h),
        pixels(static_cast<size_t>(w) * h * Channels, fill) {}

  static constexpr int channels() { return Channels; }
  bool empty() const { return pixels.empty(); }

  T& at(int x, int y, int c = 0) {
    return pixels[(static_cast<size_t>(y) * width + x) * Channels + c];
  }
  const T& at(int x, int y, int c = 0) const {
    return pixels[(static_cast<size_t>(y) * width + x) * Channels + c];
  }

  bool operator==(const Image&) const = default;
};

using RgbImage = Image<uint8_t, 3>;
using DepthMap = Image<double>;         // meters, 0 = no hit
using DepthImageMm = Image<uint16_t>;   // millimeters, 0 = no depth
using SegmentationMap = Image<int32_t>; // body ids, 0 = background

template <typename T, int C>
Image<T, C> flip_horizontal(const Image<T, C>& in) {
  Image<T, C> out = in;
  for (int y = 0; y < in.height; ++y) {
    for (int x = 0; x < in.width; ++x) {
      for (int c = 0; c < C; ++c) {
        out.at(in.width - 1 - x, y, c) = in.at(x, y, c);
      }
    }
  }
  return out;
}

DepthImageMm depth_to_millimeters(const DepthMap& depth);
DepthMap depth_from_millimeters(const DepthImageMm& depth);

// PNG codecs. File variants throw kImageReadFailure / kImageWriteFailure.
std::vector<uint8_t> encode_png(const RgbImage& image);
std::vector<uint8_t> encode_png(const DepthImageMm& image);
RgbImage decode_png_rgb(std::span<const uint8_t> bytes);
DepthImageMm decode_png_depth(std::span<const uint8_t> bytes);

void write_png(const std::filesystem::path& path, const RgbImage& image);
void write_png(const std::filesystem::path& path, const DepthImageMm& image);
RgbImage read_png_rgb(const std::filesystem::path& path);
DepthImageMm read_png_depth(const std::filesystem::path& path);

}  // namespace cap

#endif  // CAP_IMAGE_HPP_
