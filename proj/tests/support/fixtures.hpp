#pragma once

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "adagent/image.hpp"

namespace testsupport {

// RAII temp directory under the system temp root.
class TempDir {
 public:
  TempDir() {
    auto pattern = (std::filesystem::temp_directory_path() / "adagent_test_XXXXXX").string();
    if (!mkdtemp(pattern.data())) throw std::runtime_error("mkdtemp failed");
    path_ = pattern;
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }

 private:
  std::filesystem::path path_;
};

inline adagent::vision::ImageBuffer solid_image(int w, int h, std::uint8_t r, std::uint8_t g,
                                                std::uint8_t b) {
  adagent::vision::ImageBuffer img;
  img.width = w;
  img.height = h;
  img.channels = 3;
  img.data.resize(static_cast<std::size_t>(w) * h * 3);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      img.at(x, y, 0) = r;
      img.at(x, y, 1) = g;
      img.at(x, y, 2) = b;
    }
  }
  return img;
}

inline adagent::vision::ImageBuffer gray_image(int w, int h, std::uint8_t v) {
  adagent::vision::ImageBuffer img;
  img.width = w;
  img.height = h;
  img.channels = 1;
  img.data.assign(static_cast<std::size_t>(w) * h, v);
  return img;
}

// Grayscale image whose luminance histogram is uniform inside every
// tile_grid x tile_grid tile (value = (8x + y) mod 256 on a 256x256 grid).
inline adagent::vision::ImageBuffer tile_uniform_image(int side = 256) {
  adagent::vision::ImageBuffer img = gray_image(side, side, 0);
  for (int y = 0; y < side; ++y) {
    for (int x = 0; x < side; ++x) {
      img.at(x, y, 0) = static_cast<std::uint8_t>((8 * x + y) % 256);
    }
  }
  return img;
}

inline adagent::vision::ImageBuffer add_noise(adagent::vision::ImageBuffer img, double sigma,
                                              unsigned seed) {
  std::mt19937 rng(seed);
  std::normal_distribution<double> noise(0.0, sigma);
  for (auto& v : img.data) {
    const double nv = static_cast<double>(v) + noise(rng);
    v = static_cast<std::uint8_t>(std::min(255.0, std::max(0.0, nv)));
  }
  return img;
}

// Left half black, right half white; the edge sits at x = w/2.
inline adagent::vision::ImageBuffer step_edge_image(int w, int h) {
  adagent::vision::ImageBuffer img = gray_image(w, h, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = w / 2; x < w; ++x) img.at(x, y, 0) = 255;
  }
  return img;
}

// A "defective" fixture: solid base with a bright square blemish.
inline adagent::vision::ImageBuffer defect_image(int w, int h, std::uint8_t base,
                                                 std::uint8_t blemish) {
  auto img = solid_image(w, h, base, base, base);
  for (int y = h / 4; y < h / 2; ++y) {
    for (int x = w / 4; x < w / 2; ++x) {
      img.at(x, y, 0) = blemish;
      img.at(x, y, 1) = blemish;
      img.at(x, y, 2) = 20;
    }
  }
  return img;
}

inline void write_png(const std::filesystem::path& path,
                      const adagent::vision::ImageBuffer& img) {
  std::filesystem::create_directories(path.parent_path());
  const auto bytes = adagent::vision::encode_png(img);
  std::ofstream out(path, std::ios::binary);
  out.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
}

}  // namespace testsupport
