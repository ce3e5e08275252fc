#include "adagent/config.hpp"

#include <fstream>

#include "adagent/errors.hpp"

namespace adagent {

using nlohmann::json;

RunConfig RunConfig::from_json(const json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  RunConfig c;
  c.chat_base_url = j.value("chat_base_url", c.chat_base_url);
  c.embed_base_url = j.value("embed_base_url", c.embed_base_url);
  c.api_key_env = j.value("api_key_env", c.api_key_env);
  c.primary_model = j.value("primary_model", c.primary_model);
  c.aux_model = j.value("aux_model", c.aux_model);
  c.embed_model = j.value("embed_model", c.embed_model);
  c.image_embed_model = j.value("image_embed_model", c.image_embed_model);
  c.top_k = j.value("top_k", c.top_k);
  c.termination_n = j.value("termination_n", c.termination_n);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.gamma = j.value("gamma", c.gamma);
  c.tau_cand = j.value("tau_cand", c.tau_cand);
  c.workers = j.value("workers", c.workers);
  c.seed = j.value("seed", c.seed);
  c.cache_dir = j.value("cache_dir", c.cache_dir);
  c.data_dir = j.value("data_dir", c.data_dir);
  c.sr_endpoint = j.value("sr_endpoint", c.sr_endpoint);
  c.retry_attempts = j.value("retry_attempts", c.retry_attempts);
  c.retry_base_ms = j.value("retry_base_ms", c.retry_base_ms);
  c.validate();
  return c;
}

RunConfig RunConfig::from_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ConfigError("config file is not valid JSON: " + path.string());
  return from_json(j);
}

json RunConfig::to_json() const {
  return {{"chat_base_url", chat_base_url},
          {"embed_base_url", embed_base_url},
          {"api_key_env", api_key_env},
          {"primary_model", primary_model},
          {"aux_model", aux_model},
          {"embed_model", embed_model},
          {"image_embed_model", image_embed_model},
          {"top_k", top_k},
          {"termination_n", termination_n},
          {"max_iters", max_iters},
          {"gamma", gamma},
          {"tau_cand", tau_cand},
          {"workers", workers},
          {"seed", seed},
          {"cache_dir", cache_dir},
          {"data_dir", data_dir},
          {"sr_endpoint", sr_endpoint},
          {"retry_attempts", retry_attempts},
          {"retry_base_ms", retry_base_ms}};
}

void RunConfig::validate() const {
  if (chat_base_url.empty()) throw ConfigError("chat_base_url must be set");
  if (primary_model.empty() || aux_model.empty() || embed_model.empty()) {
    throw ConfigError("model ids must be nonempty");
  }
  if (top_k < 1 || top_k > 10) throw ConfigError("top_k must be in 1..10");
  if (termination_n < 1 || termination_n > 4) throw ConfigError("termination_n must be in 1..4");
  if (max_iters < termination_n) throw ConfigError("max_iters must be >= termination_n");
  if (max_iters > 32) throw ConfigError("max_iters must be <= 32");
  if (!(gamma > 0.0 && gamma < 1.0)) throw ConfigError("gamma must be in (0, 1)");
  if (!(tau_cand > 0.0)) throw ConfigError("tau_cand must be > 0");
  if (workers < 1) throw ConfigError("workers must be >= 1");
  if (retry_attempts < 1) throw ConfigError("retry_attempts must be >= 1");
  if (retry_base_ms < 0) throw ConfigError("retry_base_ms must be >= 0");
}

}  // namespace adagent
