#pragma once

#include <map>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "adagent/image.hpp"

namespace adagent::vision {

enum class Tool { denoise, deblur, brightness, zoom, super_resolution };

std::string to_string(Tool t);

// Parses a planner-facing tool name; throws ToolDispatchError for anything
// outside the five-tool set so the loop can report it as missing evidence.
Tool tool_from_string(const std::string& name);

struct ToolDefaults {
  static constexpr double denoise_strength = 10.0;
  static constexpr double deblur_radius = 2.0;
  static constexpr double deblur_amount = 1.0;
  static constexpr double clahe_clip_limit = 2.0;
  static constexpr int clahe_tile_grid = 8;
  static constexpr int zoom_target_long_side = 512;
  static constexpr int sr_factor = 2;
};

// A tool request parsed from a plan/reflection. `region` is required iff the
// tool is zoom.
struct ToolInvocation {
  Tool tool = Tool::denoise;
  std::map<std::string, double> params;
  std::optional<Rect> region;

  nlohmann::json to_json() const;
  static ToolInvocation from_json(const nlohmann::json& j);
};

// Fast non-local means filtering; suppresses noise while keeping structure.
ImageBuffer denoise(const ImageBuffer& img, double strength = ToolDefaults::denoise_strength);

// Unsharp masking: out = clamp(img + amount * (img - gaussian_blur(img, radius))).
ImageBuffer deblur(const ImageBuffer& img, double radius = ToolDefaults::deblur_radius,
                   double amount = ToolDefaults::deblur_amount);

// CLAHE on the L channel in LAB space (3-channel) or directly (1-channel).
ImageBuffer enhance_brightness(const ImageBuffer& img,
                               double clip_limit = ToolDefaults::clahe_clip_limit,
                               int tile_grid = ToolDefaults::clahe_tile_grid);

// Crop `region` and resize (bilinear) so the long side equals
// `target_long_side`, preserving aspect. No resampling when already exact.
ImageBuffer zoom(const ImageBuffer& img, const Rect& region,
                 int target_long_side = ToolDefaults::zoom_target_long_side);

// Deterministic bicubic upscale by 2 or 4.
ImageBuffer super_resolve(const ImageBuffer& img, int factor = ToolDefaults::sr_factor);

// POSTs PNG bytes to an external super-resolution service and decodes the
// returned image bytes. Disabled unless an endpoint URL is configured.
ImageBuffer super_resolve_remote(const ImageBuffer& img, const std::string& endpoint_url);

// Dispatches to the matching tool, defaulting absent parameters. Never
// mutates the input.
ImageBuffer apply_tool(const ImageBuffer& img, const ToolInvocation& inv);

}  // namespace adagent::vision
