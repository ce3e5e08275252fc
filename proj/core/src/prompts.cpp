#include "adagent/prompts.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "adagent/errors.hpp"

namespace adagent::semantic {
namespace {

constexpr const char* kRoleFiles[] = {
    "description",    "candidate_generation", "planner",
    "reasoner",       "reflector",            "relation_judge",
    "gr_narrative",   "cr_narrative",         "entry_hard_negative",
    "class_hard_negative_summary",
};

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read prompt asset " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> read_lines(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read template asset " + path.string());
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (!line.empty()) lines.push_back(line);
  }
  return lines;
}

}  // namespace

std::string to_string(PromptRole role) { return kRoleFiles[static_cast<int>(role)]; }

std::string expand_class(const std::string& text, const std::string& class_name) {
  std::string out = text;
  const std::string placeholder = "{class}";
  std::size_t pos = 0;
  while ((pos = out.find(placeholder, pos)) != std::string::npos) {
    out.replace(pos, placeholder.size(), class_name);
    pos += class_name.size();
  }
  return out;
}

std::filesystem::path PromptLibrary::default_data_dir() {
  if (const char* env = std::getenv("ADAGENT_DATA_DIR"); env && *env) return env;
#ifdef ADAGENT_SOURCE_DATA_DIR
  return ADAGENT_SOURCE_DATA_DIR;
#else
  return "data";
#endif
}

PromptLibrary PromptLibrary::load(const std::filesystem::path& data_dir) {
  PromptLibrary lib;
  lib.data_dir_ = data_dir;
  for (int i = 0; i <= static_cast<int>(PromptRole::class_hard_negative_summary); ++i) {
    const auto role = static_cast<PromptRole>(i);
    lib.prompts_[role] = read_file(data_dir / "prompts" / (to_string(role) + std::string(".txt")));
  }
  lib.normal_templates_ = read_lines(data_dir / "templates" / "normal_ensemble.txt");
  lib.anomaly_templates_ = read_lines(data_dir / "templates" / "anomaly_ensemble.txt");
  if (lib.normal_templates_.empty() || lib.anomaly_templates_.empty()) {
    throw IoError("template ensembles must be nonempty");
  }
  for (const auto* list : {&lib.normal_templates_, &lib.anomaly_templates_}) {
    for (const auto& t : *list) {
      if (t.find("{class}") == std::string::npos) {
        throw IoError("template '" + t + "' lacks the {class} placeholder");
      }
    }
  }
  return lib;
}

const std::string& PromptLibrary::prompt(PromptRole role) const {
  auto it = prompts_.find(role);
  if (it == prompts_.end()) throw ContractError("prompt role not loaded");
  return it->second;
}

}  // namespace adagent::semantic
