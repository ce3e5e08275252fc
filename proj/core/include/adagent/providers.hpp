#pragma once

#include <chrono>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adagent/embedding.hpp"
#include "adagent/errors.hpp"

namespace adagent::providers {

struct ImagePayload {
  std::vector<std::uint8_t> bytes;
  std::string media_type = "image/png";
};

struct MessagePart {
  bool is_text = true;
  std::string text;
  ImagePayload image;

  static MessagePart make_text(std::string t) {
    MessagePart p;
    p.is_text = true;
    p.text = std::move(t);
    return p;
  }
  static MessagePart make_image(ImagePayload img) {
    MessagePart p;
    p.is_text = false;
    p.image = std::move(img);
    return p;
  }
};

struct ChatMessage {
  std::string role;  // "system" | "user" | "assistant"
  std::vector<MessagePart> parts;
};

struct ResponseSchema {
  std::string name;
  nlohmann::json schema;
};

struct ChatRequest {
  std::string model_id;
  std::vector<ChatMessage> messages;
  std::optional<ResponseSchema> response_schema;
  double temperature = 0.0;

  void add_system(std::string text);
  void add_user_text(std::string text);
};

struct TokenUsage {
  long prompt_tokens = 0;
  long completion_tokens = 0;
  long total_tokens = 0;

  TokenUsage& operator+=(const TokenUsage& o) {
    prompt_tokens += o.prompt_tokens;
    completion_tokens += o.completion_tokens;
    total_tokens += o.total_tokens;
    return *this;
  }
};

struct ChatResponse {
  std::string text;
  std::optional<nlohmann::json> parsed;  // present iff a schema was set and parsing succeeded
  TokenUsage usage;
};

// Canonical cache-key payload for a chat request. Image bytes never appear;
// their SHA-256 digests stand in.
nlohmann::json chat_request_key(const ChatRequest& req);

// OpenAI-compatible wire body (images as base64 data URLs).
nlohmann::json chat_request_body(const ChatRequest& req);

std::string base64_encode(const std::uint8_t* data, std::size_t size);

// ---------------------------------------------------------------------------
// Transport

struct HttpResult {
  int status = 0;
  std::string body;
};

class HttpTransport {
 public:
  virtual ~HttpTransport() = default;
  virtual HttpResult post_json(const std::string& base_url, const std::string& path,
                               const std::string& bearer_token, const std::string& body) = 0;
};

std::shared_ptr<HttpTransport> make_httplib_transport();

// Throws TransportError on any use. Backs replay-strict runs so that a cache
// miss can never silently reach the network.
std::shared_ptr<HttpTransport> make_denying_transport();

struct RetryPolicy {
  int attempts = 3;
  std::chrono::milliseconds base_delay{1000};  // doubled per retry: 1s/2s/4s
};

struct EndpointConfig {
  std::string base_url;     // e.g. http://127.0.0.1:8080
  std::string api_key_env;  // environment variable holding the bearer token
};

// ---------------------------------------------------------------------------
// Clients

class ChatClient {
 public:
  virtual ~ChatClient() = default;
  virtual ChatResponse complete(const ChatRequest& req) = 0;
};

class EmbedClient {
 public:
  virtual ~EmbedClient() = default;
  virtual std::vector<Embedding> embed_texts(const std::vector<std::string>& texts,
                                             const std::string& model_id) = 0;
  virtual Embedding embed_image(const ImagePayload& image, const std::string& model_id) = 0;
};

class HttpChatClient : public ChatClient {
 public:
  HttpChatClient(std::shared_ptr<HttpTransport> transport, EndpointConfig endpoint,
                 RetryPolicy retry = {});
  ChatResponse complete(const ChatRequest& req) override;

 private:
  std::shared_ptr<HttpTransport> transport_;
  EndpointConfig endpoint_;
  RetryPolicy retry_;
};

class HttpEmbedClient : public EmbedClient {
 public:
  HttpEmbedClient(std::shared_ptr<HttpTransport> transport, EndpointConfig endpoint,
                  RetryPolicy retry = {});
  std::vector<Embedding> embed_texts(const std::vector<std::string>& texts,
                                     const std::string& model_id) override;
  Embedding embed_image(const ImagePayload& image, const std::string& model_id) override;

 private:
  std::vector<Embedding> request_embeddings(const std::vector<std::string>& inputs,
                                            const std::string& model_id);
  std::shared_ptr<HttpTransport> transport_;
  EndpointConfig endpoint_;
  RetryPolicy retry_;
};

// Schema-enforced completion. Parses the reply as JSON (code fences
// tolerated), validates it against the request schema, then runs the
// caller's semantic check. Invalid replies trigger a corrective re-prompt;
// after `max_attempts` total tries a SchemaError is raised.
ChatResponse complete_structured(
    ChatClient& client, ChatRequest req,
    const std::function<void(const nlohmann::json&)>& semantic_check = {}, int max_attempts = 3);

// Minimal structural validation: type / required / properties / items / enum.
void validate_schema(const nlohmann::json& value, const nlohmann::json& schema,
                     const std::string& path = "$");

}  // namespace adagent::providers
