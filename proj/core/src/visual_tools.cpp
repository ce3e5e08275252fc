#include "adagent/visual_tools.hpp"

#include <httplib.h>

#include <algorithm>
#include <cmath>

#include <opencv2/photo.hpp>

#include "adagent/image.hpp"
#include "cv_bridge.hpp"

namespace adagent::vision {

using detail::from_mat_bgr;
using detail::to_mat_bgr;

std::string to_string(Tool t) {
  switch (t) {
    case Tool::denoise:
      return "denoise";
    case Tool::deblur:
      return "deblur";
    case Tool::brightness:
      return "brightness";
    case Tool::zoom:
      return "zoom";
    case Tool::super_resolution:
      return "super_resolution";
  }
  throw ContractError("to_string: invalid Tool");
}

Tool tool_from_string(const std::string& name) {
  if (name == "denoise") return Tool::denoise;
  if (name == "deblur") return Tool::deblur;
  if (name == "brightness") return Tool::brightness;
  if (name == "zoom") return Tool::zoom;
  if (name == "super_resolution") return Tool::super_resolution;
  throw ToolDispatchError("unknown visual tool '" + name + "'");
}

nlohmann::json ToolInvocation::to_json() const {
  nlohmann::json j;
  j["tool"] = vision::to_string(tool);
  if (!params.empty()) j["params"] = params;
  if (region) {
    j["region"] = {{"x", region->x},
                   {"y", region->y},
                   {"width", region->width},
                   {"height", region->height}};
  }
  return j;
}

ToolInvocation ToolInvocation::from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("tool") || !j.at("tool").is_string()) {
    throw ToolDispatchError("tool invocation must be an object with a string 'tool' field");
  }
  ToolInvocation inv;
  inv.tool = tool_from_string(j.at("tool").get<std::string>());
  if (j.contains("params") && j.at("params").is_object()) {
    for (const auto& [k, v] : j.at("params").items()) {
      if (v.is_number()) inv.params[k] = v.get<double>();
    }
  }
  if (j.contains("region") && j.at("region").is_object()) {
    const auto& r = j.at("region");
    Rect rect;
    rect.x = r.value("x", 0);
    rect.y = r.value("y", 0);
    rect.width = r.value("width", 0);
    rect.height = r.value("height", 0);
    inv.region = rect;
  }
  if (inv.tool == Tool::zoom && !inv.region) {
    throw ToolDispatchError("zoom invocation requires a region");
  }
  return inv;
}

ImageBuffer denoise(const ImageBuffer& img, double strength) {
  if (strength <= 0.0) throw ParameterError("denoise: strength must be > 0");
  cv::Mat m = to_mat_bgr(img);
  cv::Mat out;
  if (img.channels == 3) {
    cv::fastNlMeansDenoisingColored(m, out, static_cast<float>(strength),
                                    static_cast<float>(strength));
  } else {
    cv::fastNlMeansDenoising(m, out, static_cast<float>(strength));
  }
  return from_mat_bgr(out);
}

ImageBuffer deblur(const ImageBuffer& img, double radius, double amount) {
  if (radius <= 0.0) throw ParameterError("deblur: radius must be > 0");
  if (amount <= 0.0) throw ParameterError("deblur: amount must be > 0");
  cv::Mat m = to_mat_bgr(img);
  cv::Mat blurred;
  cv::GaussianBlur(m, blurred, cv::Size(0, 0), radius, radius, cv::BORDER_REPLICATE);
  cv::Mat sharp;
  // clamp(img + amount * (img - blurred)) via saturating addWeighted.
  cv::addWeighted(m, 1.0 + amount, blurred, -amount, 0.0, sharp);
  return from_mat_bgr(sharp);
}

ImageBuffer enhance_brightness(const ImageBuffer& img, double clip_limit, int tile_grid) {
  if (clip_limit <= 0.0) throw ParameterError("enhance_brightness: clip_limit must be > 0");
  if (tile_grid < 1) throw ParameterError("enhance_brightness: tile_grid must be >= 1");
  cv::Mat m = to_mat_bgr(img);
  auto clahe = cv::createCLAHE(clip_limit, cv::Size(tile_grid, tile_grid));
  cv::Mat out;
  if (img.channels == 3) {
    cv::Mat lab;
    cv::cvtColor(m, lab, cv::COLOR_BGR2Lab);
    std::vector<cv::Mat> planes;
    cv::split(lab, planes);
    clahe->apply(planes[0], planes[0]);
    cv::merge(planes, lab);
    cv::cvtColor(lab, out, cv::COLOR_Lab2BGR);
  } else {
    clahe->apply(m, out);
  }
  return from_mat_bgr(out);
}

ImageBuffer zoom(const ImageBuffer& img, const Rect& region, int target_long_side) {
  if (!img.valid()) throw InputError("zoom: invalid image");
  if (target_long_side < kMinImageSide) {
    throw ParameterError("zoom: target_long_side must be >= " + std::to_string(kMinImageSide));
  }
  if (region.x < 0 || region.y < 0 || region.width <= 0 || region.height <= 0 ||
      region.x + region.width > img.width || region.y + region.height > img.height) {
    throw InputError("zoom: region outside image bounds");
  }
  if (region.area() < 64) throw InputError("zoom: region area below 64 px^2");

  cv::Mat m = to_mat_bgr(img);
  cv::Mat crop = m(cv::Rect(region.x, region.y, region.width, region.height)).clone();
  const int long_side = std::max(region.width, region.height);
  if (long_side == target_long_side) return from_mat_bgr(crop);

  const double scale = static_cast<double>(target_long_side) / long_side;
  int out_w = region.width >= region.height
                  ? target_long_side
                  : std::max(1, static_cast<int>(std::lround(region.width * scale)));
  int out_h = region.height > region.width
                  ? target_long_side
                  : std::max(1, static_cast<int>(std::lround(region.height * scale)));
  cv::Mat resized;
  cv::resize(crop, resized, cv::Size(out_w, out_h), 0, 0, cv::INTER_LINEAR);
  return from_mat_bgr(resized);
}

ImageBuffer super_resolve(const ImageBuffer& img, int factor) {
  if (factor != 2 && factor != 4) throw ParameterError("super_resolve: factor must be 2 or 4");
  cv::Mat m = to_mat_bgr(img);
  cv::Mat out;
  cv::resize(m, out, cv::Size(img.width * factor, img.height * factor), 0, 0, cv::INTER_CUBIC);
  return from_mat_bgr(out);
}

ImageBuffer super_resolve_remote(const ImageBuffer& img, const std::string& endpoint_url) {
  if (endpoint_url.empty()) throw ParameterError("super_resolve_remote: no endpoint configured");
  const auto png = encode_png(img);
  // endpoint_url is scheme://host:port/path; split at the path.
  const auto scheme_end = endpoint_url.find("://");
  const auto path_start =
      endpoint_url.find('/', scheme_end == std::string::npos ? 0 : scheme_end + 3);
  const std::string base =
      path_start == std::string::npos ? endpoint_url : endpoint_url.substr(0, path_start);
  const std::string path = path_start == std::string::npos ? "/" : endpoint_url.substr(path_start);
  httplib::Client cli(base);
  cli.set_read_timeout(120, 0);
  auto res = cli.Post(path, reinterpret_cast<const char*>(png.data()), png.size(), "image/png");
  if (!res) {
    throw TransportError("super_resolve_remote: " + httplib::to_string(res.error()));
  }
  if (res->status < 200 || res->status >= 300) {
    throw ProviderError("super_resolve_remote: HTTP " + std::to_string(res->status), res->status);
  }
  const auto* bytes = reinterpret_cast<const std::uint8_t*>(res->body.data());
  return decode_image(std::span<const std::uint8_t>(bytes, res->body.size()));
}

ImageBuffer apply_tool(const ImageBuffer& img, const ToolInvocation& inv) {
  auto param = [&](const char* key, double fallback) {
    auto it = inv.params.find(key);
    return it == inv.params.end() ? fallback : it->second;
  };
  switch (inv.tool) {
    case Tool::denoise:
      return denoise(img, param("strength", ToolDefaults::denoise_strength));
    case Tool::deblur:
      return deblur(img, param("radius", ToolDefaults::deblur_radius),
                    param("amount", ToolDefaults::deblur_amount));
    case Tool::brightness:
      return enhance_brightness(
          img, param("clip_limit", ToolDefaults::clahe_clip_limit),
          static_cast<int>(param("tile_grid", ToolDefaults::clahe_tile_grid)));
    case Tool::zoom: {
      if (!inv.region) throw ToolDispatchError("zoom invocation requires a region");
      return zoom(img, *inv.region,
                  static_cast<int>(
                      param("target_long_side", ToolDefaults::zoom_target_long_side)));
    }
    case Tool::super_resolution:
      return super_resolve(img, static_cast<int>(param("factor", ToolDefaults::sr_factor)));
  }
  throw ToolDispatchError("apply_tool: invalid tool enum value");
}

}  // namespace adagent::vision
