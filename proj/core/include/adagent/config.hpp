#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

namespace adagent {

// One run's knobs: provider endpoints/models and the pipeline
// hyperparameters. Loaded from a JSON key-value file; every field has a
// default so a minimal config only names the endpoints.
struct RunConfig {
  std::string chat_base_url = "http://127.0.0.1:8080";
  std::string embed_base_url;  // empty: use chat_base_url
  std::string api_key_env = "ADAGENT_API_KEY";

  std::string primary_model = "gpt-5.1";      // plan / reason / reflect / captions
  std::string aux_model = "gpt-4.1-mini";     // candidates, narratives, memory ops
  std::string embed_model = "qwen3-embedding-4b";
  std::string image_embed_model = "clip-image";

  int top_k = 5;          // candidates retrieved per side (1..10)
  int termination_n = 3;  // consecutive normal judgments to terminate (1..4)
  int max_iters = 6;
  double gamma = 0.80;    // memory retrieval similarity threshold
  double tau_cand = 1.0;  // calibrated matching temperature

  int workers = 4;
  unsigned seed = 17;
  std::string cache_dir = "cache";
  std::string data_dir;      // empty: PromptLibrary::default_data_dir()
  std::string sr_endpoint;   // optional remote super-resolution service
  int retry_attempts = 3;
  int retry_base_ms = 1000;

  static RunConfig from_json(const nlohmann::json& j);
  static RunConfig from_file(const std::filesystem::path& path);
  nlohmann::json to_json() const;

  // Throws ConfigError when any hyperparameter leaves its documented range.
  void validate() const;

  std::string effective_embed_base_url() const {
    return embed_base_url.empty() ? chat_base_url : embed_base_url;
  }
};

}  // namespace adagent
