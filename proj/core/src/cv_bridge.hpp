#pragma once

// Internal OpenCV <-> ImageBuffer bridge. Not installed; cv types stay out
// of the public headers.

#include <cstring>

#include <opencv2/core.hpp>
#include <opencv2/imgproc.hpp>

#include "adagent/image.hpp"

namespace adagent::vision::detail {

inline cv::Mat to_mat_bgr(const ImageBuffer& img) {
  if (!img.valid()) throw InputError("image buffer is invalid or below minimum size");
  cv::Mat m(img.height, img.width, img.channels == 3 ? CV_8UC3 : CV_8UC1);
  std::memcpy(m.data, img.data.data(), img.data.size());
  if (img.channels == 3) cv::cvtColor(m, m, cv::COLOR_RGB2BGR);
  return m;
}

inline ImageBuffer from_mat_bgr(const cv::Mat& m) {
  cv::Mat rgb;
  if (m.channels() == 3) {
    cv::cvtColor(m, rgb, cv::COLOR_BGR2RGB);
  } else {
    rgb = m;
  }
  ImageBuffer out;
  out.width = rgb.cols;
  out.height = rgb.rows;
  out.channels = rgb.channels();
  out.data.resize(static_cast<std::size_t>(rgb.cols) * rgb.rows * rgb.channels());
  if (rgb.isContinuous()) {
    std::memcpy(out.data.data(), rgb.data, out.data.size());
  } else {
    const std::size_t row_bytes = static_cast<std::size_t>(rgb.cols) * rgb.channels();
    for (int y = 0; y < rgb.rows; ++y) {
      std::memcpy(out.data.data() + y * row_bytes, rgb.ptr(y), row_bytes);
    }
  }
  return out;
}

}  // namespace adagent::vision::detail
