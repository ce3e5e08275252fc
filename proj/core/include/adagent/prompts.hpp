#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace adagent::semantic {

enum class PromptRole {
  description,
  candidate_generation,
  planner,
  reasoner,
  reflector,
  relation_judge,
  gr_narrative,
  cr_narrative,
  entry_hard_negative,
  class_hard_negative_summary,
};

std::string to_string(PromptRole role);

// Replaces every "{class}" placeholder with the concrete class name.
std::string expand_class(const std::string& text, const std::string& class_name);

// Versioned plain-text assets: one file per prompt role under prompts/, one
// file per template ensemble under templates/.
class PromptLibrary {
 public:
  static std::filesystem::path default_data_dir();
  static PromptLibrary load(const std::filesystem::path& data_dir);

  const std::string& prompt(PromptRole role) const;
  const std::vector<std::string>& normal_templates() const { return normal_templates_; }
  const std::vector<std::string>& anomaly_templates() const { return anomaly_templates_; }
  const std::filesystem::path& data_dir() const { return data_dir_; }

 private:
  std::filesystem::path data_dir_;
  std::map<PromptRole, std::string> prompts_;
  std::vector<std::string> normal_templates_;
  std::vector<std::string> anomaly_templates_;
};

}  // namespace adagent::semantic
