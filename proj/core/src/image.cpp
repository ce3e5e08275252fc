#include "adagent/image.hpp"

#include <opencv2/imgcodecs.hpp>

#include "cv_bridge.hpp"

namespace adagent::vision {

ImageBuffer decode_image(std::span<const std::uint8_t> bytes) {
  if (bytes.empty()) throw InputError("decode_image: empty payload");
  cv::Mat raw(1, static_cast<int>(bytes.size()), CV_8UC1,
              const_cast<std::uint8_t*>(bytes.data()));
  cv::Mat decoded = cv::imdecode(raw, cv::IMREAD_UNCHANGED);
  if (decoded.empty()) throw InputError("decode_image: payload is not a decodable PNG/JPEG");
  if (decoded.depth() != CV_8U) {
    decoded.convertTo(decoded, CV_8U, decoded.depth() == CV_16U ? 1.0 / 257.0 : 1.0);
  }
  if (decoded.channels() == 4) {
    cv::cvtColor(decoded, decoded, cv::COLOR_BGRA2BGR);
  } else if (decoded.channels() == 2) {
    cv::Mat planes[2];
    cv::split(decoded, planes);
    decoded = planes[0];
  }
  if (decoded.cols < kMinImageSide || decoded.rows < kMinImageSide) {
    throw InputError("decode_image: image below minimum size " +
                     std::to_string(kMinImageSide) + "x" + std::to_string(kMinImageSide));
  }
  return detail::from_mat_bgr(decoded);
}

std::vector<std::uint8_t> encode_png(const ImageBuffer& img) {
  cv::Mat m = detail::to_mat_bgr(img);
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".png", m, out)) throw EncodingError("encode_png: encoder failed");
  return out;
}

std::vector<std::uint8_t> encode_jpeg(const ImageBuffer& img, int quality) {
  if (quality < 1 || quality > 100) throw ParameterError("encode_jpeg: quality must be 1..100");
  cv::Mat m = detail::to_mat_bgr(img);
  std::vector<std::uint8_t> out;
  if (!cv::imencode(".jpg", m, out, {cv::IMWRITE_JPEG_QUALITY, quality})) {
    throw EncodingError("encode_jpeg: encoder failed");
  }
  return out;
}

}  // namespace adagent::vision
