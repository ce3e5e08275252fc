#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "adagent/errors.hpp"

namespace adagent::vision {

inline constexpr int kMinImageSide = 8;

// Row-major 8-bit image, RGB for 3 channels, grayscale for 1.
struct ImageBuffer {
  int width = 0;
  int height = 0;
  int channels = 0;  // 1 or 3
  std::vector<std::uint8_t> data;

  bool valid() const {
    return (channels == 1 || channels == 3) && width >= kMinImageSide &&
           height >= kMinImageSide &&
           data.size() == static_cast<std::size_t>(width) * height * channels;
  }

  std::uint8_t at(int x, int y, int c) const {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
  std::uint8_t& at(int x, int y, int c) {
    return data[(static_cast<std::size_t>(y) * width + x) * channels + c];
  }
};

struct Rect {
  int x = 0;
  int y = 0;
  int width = 0;
  int height = 0;

  long long area() const { return static_cast<long long>(width) * height; }
};

// Decodes PNG or JPEG bytes. Alpha is dropped; palette/16-bit inputs are
// normalized to 8-bit. Throws InputError on undecodable or undersized input.
ImageBuffer decode_image(std::span<const std::uint8_t> bytes);

std::vector<std::uint8_t> encode_png(const ImageBuffer& img);
std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& img, int quality = 95);

}  // namespace adagent::vision
