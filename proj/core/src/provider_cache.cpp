#include "adagent/provider_cache.hpp"

#include <unistd.h>

#include <atomic>
#include <chrono>
#include <fstream>

#include "adagent/digest.hpp"

namespace adagent::providers {

using nlohmann::json;

std::string to_string(CacheMode m) {
  switch (m) {
    case CacheMode::record:
      return "record";
    case CacheMode::replay_strict:
      return "replay-strict";
    case CacheMode::passthrough:
      return "passthrough";
  }
  throw ContractError("to_string: invalid CacheMode");
}

CacheMode cache_mode_from_string(const std::string& s) {
  if (s == "record") return CacheMode::record;
  if (s == "replay-strict") return CacheMode::replay_strict;
  if (s == "passthrough") return CacheMode::passthrough;
  throw ConfigError("cache mode must be record|replay-strict|passthrough, got '" + s + "'");
}

namespace {

std::string iso8601_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

}  // namespace

ProviderCache::ProviderCache(std::filesystem::path dir) : dir_(std::move(dir)) {}

std::filesystem::path ProviderCache::entry_path(const std::string& key) const {
  return dir_ / key.substr(0, 2) / (key + ".json");
}

std::optional<json> ProviderCache::load(const std::string& key) const {
  const auto path = entry_path(key);
  std::ifstream in(path);
  if (!in) return std::nullopt;
  json entry = json::parse(in, nullptr, false);
  if (entry.is_discarded() || !entry.contains("response")) {
    throw IoError("corrupt cache entry at " + path.string());
  }
  return entry.at("response");
}

void ProviderCache::store(const std::string& key, const json& response) const {
  const auto path = entry_path(key);
  std::error_code ec;
  std::filesystem::create_directories(path.parent_path(), ec);
  if (ec) throw IoError("cannot create cache directory " + path.parent_path().string());
  const json entry{{"request_digest", key}, {"response", response}, {"created_at", iso8601_now()}};
  // Temp-then-rename keeps concurrent readers away from partial writes; the
  // suffix keeps two workers racing on the same key apart.
  static std::atomic<unsigned> counter{0};
  const auto tmp = path.string() + ".tmp." + std::to_string(::getpid()) + "." +
                   std::to_string(counter.fetch_add(1));
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot write cache entry " + tmp);
    out << entry.dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("cannot commit cache entry " + path.string());
}

// ---------------------------------------------------------------------------

namespace {

json usage_json(const TokenUsage& u) {
  return {{"prompt_tokens", u.prompt_tokens},
          {"completion_tokens", u.completion_tokens},
          {"total_tokens", u.total_tokens}};
}

TokenUsage usage_from_json(const json& j) {
  TokenUsage u;
  u.prompt_tokens = j.value("prompt_tokens", 0L);
  u.completion_tokens = j.value("completion_tokens", 0L);
  u.total_tokens = j.value("total_tokens", 0L);
  return u;
}

}  // namespace

CachedChatClient::CachedChatClient(std::shared_ptr<ChatClient> upstream,
                                   std::shared_ptr<ProviderCache> cache, CacheMode mode)
    : upstream_(std::move(upstream)), cache_(std::move(cache)), mode_(mode) {
  if (mode_ != CacheMode::passthrough && !cache_) {
    throw ContractError("CachedChatClient: cache required unless passthrough");
  }
}

ChatResponse CachedChatClient::complete(const ChatRequest& req) {
  if (mode_ == CacheMode::passthrough) return upstream_->complete(req);
  const std::string key = canonical_digest(chat_request_key(req));
  if (auto hit = cache_->load(key)) {
    ChatResponse res;
    res.text = hit->value("text", "");
    res.usage = usage_from_json(hit->value("usage", json::object()));
    return res;
  }
  if (mode_ == CacheMode::replay_strict) {
    throw CacheMissError("replay-strict cache miss for chat request " + key, key);
  }
  ChatResponse res = upstream_->complete(req);
  cache_->store(key, json{{"text", res.text}, {"usage", usage_json(res.usage)}});
  return res;
}

CachedEmbedClient::CachedEmbedClient(std::shared_ptr<EmbedClient> upstream,
                                     std::shared_ptr<ProviderCache> cache, CacheMode mode)
    : upstream_(std::move(upstream)), cache_(std::move(cache)), mode_(mode) {
  if (mode_ != CacheMode::passthrough && !cache_) {
    throw ContractError("CachedEmbedClient: cache required unless passthrough");
  }
}

std::vector<Embedding> CachedEmbedClient::embed_texts(const std::vector<std::string>& texts,
                                                      const std::string& model_id) {
  if (mode_ == CacheMode::passthrough) return upstream_->embed_texts(texts, model_id);
  const std::string key =
      canonical_digest(json{{"kind", "embed_texts"}, {"model", model_id}, {"input", texts}});
  if (auto hit = cache_->load(key)) {
    std::vector<Embedding> out;
    for (const auto& vec : hit->at("embeddings")) {
      out.emplace_back(vec.get<std::vector<double>>());
    }
    return out;
  }
  if (mode_ == CacheMode::replay_strict) {
    throw CacheMissError("replay-strict cache miss for embedding request " + key, key);
  }
  std::vector<Embedding> out = upstream_->embed_texts(texts, model_id);
  json vecs = json::array();
  for (const auto& e : out) vecs.push_back(e.values);
  cache_->store(key, json{{"embeddings", vecs}});
  return out;
}

Embedding CachedEmbedClient::embed_image(const ImagePayload& image, const std::string& model_id) {
  if (mode_ == CacheMode::passthrough) return upstream_->embed_image(image, model_id);
  const std::string key = canonical_digest(json{{"kind", "embed_image"},
                                                {"model", model_id},
                                                {"image_digest", sha256_hex(image.bytes)}});
  if (auto hit = cache_->load(key)) {
    return Embedding(hit->at("embedding").get<std::vector<double>>());
  }
  if (mode_ == CacheMode::replay_strict) {
    throw CacheMissError("replay-strict cache miss for image embedding " + key, key);
  }
  Embedding out = upstream_->embed_image(image, model_id);
  cache_->store(key, json{{"embedding", out.values}});
  return out;
}

}  // namespace adagent::providers
