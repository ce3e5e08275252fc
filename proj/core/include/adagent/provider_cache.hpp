#pragma once

#include <filesystem>
#include <memory>
#include <optional>
#include <string>

#include "adagent/providers.hpp"

namespace adagent::providers {

enum class CacheMode { record, replay_strict, passthrough };

std::string to_string(CacheMode m);
CacheMode cache_mode_from_string(const std::string& s);

// One JSON file per entry at <dir>/<first 2 hex>/<key>.json. Writes go
// through a temp file and rename, so committed entries can be read without
// locking.
class ProviderCache {
 public:
  explicit ProviderCache(std::filesystem::path dir);

  std::optional<nlohmann::json> load(const std::string& key) const;
  void store(const std::string& key, const nlohmann::json& response) const;
  std::filesystem::path entry_path(const std::string& key) const;
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
};

// Record/replay layer over any ChatClient. record: call upstream on miss and
// persist. replay_strict: serve from cache only; a miss raises CacheMissError
// carrying the digest and the upstream is never consulted. passthrough: no
// cache I/O at all.
class CachedChatClient : public ChatClient {
 public:
  CachedChatClient(std::shared_ptr<ChatClient> upstream, std::shared_ptr<ProviderCache> cache,
                   CacheMode mode);
  ChatResponse complete(const ChatRequest& req) override;

 private:
  std::shared_ptr<ChatClient> upstream_;
  std::shared_ptr<ProviderCache> cache_;
  CacheMode mode_;
};

class CachedEmbedClient : public EmbedClient {
 public:
  CachedEmbedClient(std::shared_ptr<EmbedClient> upstream, std::shared_ptr<ProviderCache> cache,
                    CacheMode mode);
  std::vector<Embedding> embed_texts(const std::vector<std::string>& texts,
                                     const std::string& model_id) override;
  Embedding embed_image(const ImagePayload& image, const std::string& model_id) override;

 private:
  std::shared_ptr<EmbedClient> upstream_;
  std::shared_ptr<ProviderCache> cache_;
  CacheMode mode_;
};

}  // namespace adagent::providers
