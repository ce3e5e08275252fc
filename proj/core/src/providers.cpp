#include "adagent/providers.hpp"

#include <httplib.h>

#include <cstdlib>
#include <thread>

#include "adagent/digest.hpp"

namespace adagent::providers {

using nlohmann::json;

void ChatRequest::add_system(std::string text) {
  messages.push_back({"system", {MessagePart::make_text(std::move(text))}});
}

void ChatRequest::add_user_text(std::string text) {
  messages.push_back({"user", {MessagePart::make_text(std::move(text))}});
}

std::string base64_encode(const std::uint8_t* data, std::size_t size) {
  static const char* table = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((size + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < size; i += 3) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8) | data[i + 2];
    out.push_back(table[(v >> 18) & 0x3f]);
    out.push_back(table[(v >> 12) & 0x3f]);
    out.push_back(table[(v >> 6) & 0x3f]);
    out.push_back(table[v & 0x3f]);
  }
  if (i + 1 == size) {
    const std::uint32_t v = data[i] << 16;
    out.push_back(table[(v >> 18) & 0x3f]);
    out.push_back(table[(v >> 12) & 0x3f]);
    out += "==";
  } else if (i + 2 == size) {
    const std::uint32_t v = (data[i] << 16) | (data[i + 1] << 8);
    out.push_back(table[(v >> 18) & 0x3f]);
    out.push_back(table[(v >> 12) & 0x3f]);
    out.push_back(table[(v >> 6) & 0x3f]);
    out.push_back('=');
  }
  return out;
}

namespace {

std::string data_url(const ImagePayload& img) {
  return "data:" + img.media_type + ";base64," + base64_encode(img.bytes.data(), img.bytes.size());
}

void check_chat_preconditions(const ChatRequest& req) {
  if (req.model_id.empty()) throw ContractError("chat: model_id not configured");
  if (req.messages.empty()) throw ContractError("chat: request has zero messages");
  int image_messages = 0;
  for (const auto& msg : req.messages) {
    bool has_image = false;
    for (const auto& part : msg.parts) {
      if (!part.is_text) {
        has_image = true;
        if (part.image.bytes.empty()) throw InputError("chat: empty image payload");
      }
    }
    image_messages += has_image ? 1 : 0;
  }
  if (image_messages > 1) {
    throw ContractError("chat: at most one image-bearing message per stage request");
  }
}

json response_format_json(const ResponseSchema& schema) {
  return {{"type", "json_schema"},
          {"json_schema", {{"name", schema.name}, {"schema", schema.schema}, {"strict", true}}}};
}

std::string bearer_from_env(const std::string& env_name) {
  if (env_name.empty()) return {};
  const char* v = std::getenv(env_name.c_str());
  return v ? std::string(v) : std::string{};
}

bool retryable_status(int status) { return status == 429 || (status >= 500 && status < 600); }

// Shared retry loop: bounded exponential backoff on transport errors and
// retryable statuses, provider errors surfaced with the provider message.
HttpResult post_with_retries(HttpTransport& transport, const EndpointConfig& endpoint,
                             const RetryPolicy& retry, const std::string& path,
                             const std::string& body) {
  const std::string token = bearer_from_env(endpoint.api_key_env);
  std::string last_error;
  for (int attempt = 0; attempt < std::max(1, retry.attempts); ++attempt) {
    if (attempt > 0) {
      std::this_thread::sleep_for(retry.base_delay * (1 << (attempt - 1)));
    }
    HttpResult res;
    try {
      res = transport.post_json(endpoint.base_url, path, token, body);
    } catch (const TransportError& e) {
      last_error = e.what();
      continue;
    }
    if (res.status >= 200 && res.status < 300) return res;
    if (retryable_status(res.status)) {
      last_error = "HTTP " + std::to_string(res.status) + ": " + res.body;
      continue;
    }
    std::string message = res.body;
    if (auto parsed = json::parse(res.body, nullptr, false); parsed.is_object()) {
      if (parsed.contains("error")) {
        const auto& err = parsed.at("error");
        if (err.is_object() && err.contains("message")) {
          message = err.at("message").get<std::string>();
        } else if (err.is_string()) {
          message = err.get<std::string>();
        }
      }
    }
    throw ProviderError("provider rejected request (" + std::to_string(res.status) + "): " + message,
                        res.status);
  }
  throw TransportError("request to " + endpoint.base_url + path + " failed after " +
                       std::to_string(retry.attempts) + " attempts: " + last_error);
}

TokenUsage parse_usage(const json& payload) {
  TokenUsage usage;
  if (payload.contains("usage") && payload.at("usage").is_object()) {
    const auto& u = payload.at("usage");
    usage.prompt_tokens = u.value("prompt_tokens", 0L);
    usage.completion_tokens = u.value("completion_tokens", 0L);
    usage.total_tokens = u.value("total_tokens", usage.prompt_tokens + usage.completion_tokens);
  }
  return usage;
}

}  // namespace

json chat_request_key(const ChatRequest& req) {
  json messages = json::array();
  for (const auto& msg : req.messages) {
    json parts = json::array();
    for (const auto& part : msg.parts) {
      if (part.is_text) {
        parts.push_back({{"type", "text"}, {"text", part.text}});
      } else {
        parts.push_back({{"type", "image"},
                         {"digest", sha256_hex(part.image.bytes)},
                         {"media_type", part.image.media_type}});
      }
    }
    messages.push_back({{"role", msg.role}, {"parts", parts}});
  }
  json key{{"kind", "chat"},
           {"model", req.model_id},
           {"messages", messages},
           {"temperature", req.temperature}};
  key["response_format"] = req.response_schema ? response_format_json(*req.response_schema)
                                               : json(nullptr);
  return key;
}

json chat_request_body(const ChatRequest& req) {
  json messages = json::array();
  for (const auto& msg : req.messages) {
    json content = json::array();
    for (const auto& part : msg.parts) {
      if (part.is_text) {
        content.push_back({{"type", "text"}, {"text", part.text}});
      } else {
        content.push_back({{"type", "image_url"}, {"image_url", {{"url", data_url(part.image)}}}});
      }
    }
    messages.push_back({{"role", msg.role}, {"content", content}});
  }
  json body{{"model", req.model_id}, {"messages", messages}, {"temperature", req.temperature}};
  if (req.response_schema) body["response_format"] = response_format_json(*req.response_schema);
  return body;
}

// ---------------------------------------------------------------------------

namespace {

class HttplibTransport : public HttpTransport {
 public:
  HttpResult post_json(const std::string& base_url, const std::string& path,
                       const std::string& bearer_token, const std::string& body) override {
    httplib::Client cli(base_url);
    cli.set_connection_timeout(10, 0);
    cli.set_read_timeout(300, 0);
    cli.set_write_timeout(60, 0);
    httplib::Headers headers;
    if (!bearer_token.empty()) headers.emplace("Authorization", "Bearer " + bearer_token);
    auto res = cli.Post(path, headers, body, "application/json");
    if (!res) {
      throw TransportError("POST " + base_url + path + ": " + httplib::to_string(res.error()));
    }
    return {res->status, res->body};
  }
};

class DenyingTransport : public HttpTransport {
 public:
  HttpResult post_json(const std::string& base_url, const std::string& path, const std::string&,
                       const std::string&) override {
    throw TransportError("network access disabled, refused POST " + base_url + path);
  }
};

}  // namespace

std::shared_ptr<HttpTransport> make_httplib_transport() {
  return std::make_shared<HttplibTransport>();
}

std::shared_ptr<HttpTransport> make_denying_transport() {
  return std::make_shared<DenyingTransport>();
}

// ---------------------------------------------------------------------------

HttpChatClient::HttpChatClient(std::shared_ptr<HttpTransport> transport, EndpointConfig endpoint,
                               RetryPolicy retry)
    : transport_(std::move(transport)), endpoint_(std::move(endpoint)), retry_(retry) {}

ChatResponse HttpChatClient::complete(const ChatRequest& req) {
  check_chat_preconditions(req);
  const std::string body = chat_request_body(req).dump();
  const HttpResult res =
      post_with_retries(*transport_, endpoint_, retry_, "/v1/chat/completions", body);
  json payload = json::parse(res.body, nullptr, false);
  if (payload.is_discarded()) {
    throw ProviderError("chat: response is not valid JSON", res.status);
  }
  ChatResponse out;
  out.usage = parse_usage(payload);
  if (!payload.contains("choices") || !payload.at("choices").is_array() ||
      payload.at("choices").empty()) {
    throw ProviderError("chat: response has no choices", res.status);
  }
  const auto& message = payload.at("choices").at(0).at("message");
  const auto& content = message.at("content");
  if (content.is_string()) {
    out.text = content.get<std::string>();
  } else if (content.is_array()) {
    for (const auto& part : content) {
      if (part.is_object() && part.value("type", "") == "text") {
        out.text += part.value("text", "");
      }
    }
  }
  return out;
}

HttpEmbedClient::HttpEmbedClient(std::shared_ptr<HttpTransport> transport, EndpointConfig endpoint,
                                 RetryPolicy retry)
    : transport_(std::move(transport)), endpoint_(std::move(endpoint)), retry_(retry) {}

std::vector<Embedding> HttpEmbedClient::request_embeddings(const std::vector<std::string>& inputs,
                                                           const std::string& model_id) {
  if (model_id.empty()) throw ContractError("embed: model_id not configured");
  const json body{{"model", model_id}, {"input", inputs}};
  const HttpResult res =
      post_with_retries(*transport_, endpoint_, retry_, "/v1/embeddings", body.dump());
  json payload = json::parse(res.body, nullptr, false);
  if (payload.is_discarded() || !payload.contains("data") || !payload.at("data").is_array()) {
    throw ProviderError("embed: malformed response", res.status);
  }
  const auto& data = payload.at("data");
  if (data.size() != inputs.size()) {
    throw ProviderError("embed: provider returned " + std::to_string(data.size()) +
                            " embeddings for " + std::to_string(inputs.size()) + " inputs",
                        res.status);
  }
  std::vector<Embedding> out(inputs.size());
  for (std::size_t pos = 0; pos < data.size(); ++pos) {
    const auto& item = data.at(pos);
    const std::size_t index =
        item.contains("index") ? item.at("index").get<std::size_t>() : pos;
    if (index >= out.size()) throw ProviderError("embed: out-of-range index in response", res.status);
    std::vector<double> values;
    for (const auto& v : item.at("embedding")) values.push_back(v.get<double>());
    out[index] = Embedding(std::move(values));
  }
  const std::size_t dim = out.front().dim();
  for (const auto& e : out) {
    if (e.dim() == 0 || e.dim() != dim) {
      throw ProviderError("embed: inconsistent embedding dimensions across batch", res.status);
    }
    if (!e.finite()) throw ProviderError("embed: non-finite embedding component", res.status);
  }
  return out;
}

std::vector<Embedding> HttpEmbedClient::embed_texts(const std::vector<std::string>& texts,
                                                    const std::string& model_id) {
  if (texts.empty()) throw ContractError("embed_texts: empty input list");
  for (const auto& t : texts) {
    if (t.find_first_not_of(" \t\r\n") == std::string::npos) {
      throw ContractError("embed_texts: input text empty after trimming");
    }
  }
  // Duplicate strings share one upstream slot, so identical inputs always
  // map to identical vectors.
  std::vector<std::string> unique;
  std::vector<std::size_t> slot(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) {
    std::size_t found = unique.size();
    for (std::size_t j = 0; j < unique.size(); ++j) {
      if (unique[j] == texts[i]) {
        found = j;
        break;
      }
    }
    if (found == unique.size()) unique.push_back(texts[i]);
    slot[i] = found;
  }
  const std::vector<Embedding> uniques = request_embeddings(unique, model_id);
  std::vector<Embedding> out;
  out.reserve(texts.size());
  for (std::size_t i = 0; i < texts.size(); ++i) out.push_back(uniques[slot[i]]);
  return out;
}

Embedding HttpEmbedClient::embed_image(const ImagePayload& image, const std::string& model_id) {
  if (image.bytes.empty()) throw InputError("embed_image: empty payload");
  // Images travel through the same endpoint as a single data-URL string.
  const std::vector<std::string> inputs{data_url(image)};
  return request_embeddings(inputs, model_id).front();
}

// ---------------------------------------------------------------------------

namespace {

json parse_json_reply(const std::string& text) {
  json direct = json::parse(text, nullptr, false);
  if (!direct.is_discarded()) return direct;
  const auto open = text.find_first_of("{[");
  const auto close = text.find_last_of("}]");
  if (open != std::string::npos && close != std::string::npos && close > open) {
    json inner = json::parse(text.substr(open, close - open + 1), nullptr, false);
    if (!inner.is_discarded()) return inner;
  }
  throw SchemaError("reply is not parseable JSON");
}

}  // namespace

void validate_schema(const json& value, const json& schema, const std::string& path) {
  if (!schema.is_object()) return;
  if (schema.contains("type")) {
    const std::string type = schema.at("type").get<std::string>();
    const bool ok = (type == "object" && value.is_object()) ||
                    (type == "array" && value.is_array()) ||
                    (type == "string" && value.is_string()) ||
                    (type == "number" && value.is_number()) ||
                    (type == "integer" && value.is_number_integer()) ||
                    (type == "boolean" && value.is_boolean()) || (type == "null" && value.is_null());
    if (!ok) {
      throw SchemaError(path + ": expected " + type + ", got " + std::string(value.type_name()));
    }
  }
  if (schema.contains("enum")) {
    bool matched = false;
    for (const auto& candidate : schema.at("enum")) matched = matched || candidate == value;
    if (!matched) throw SchemaError(path + ": value not in enum");
  }
  if (value.is_object()) {
    if (schema.contains("required")) {
      for (const auto& key : schema.at("required")) {
        if (!value.contains(key.get<std::string>())) {
          throw SchemaError(path + ": missing required field '" + key.get<std::string>() + "'");
        }
      }
    }
    if (schema.contains("properties")) {
      for (const auto& [key, sub] : schema.at("properties").items()) {
        if (value.contains(key)) validate_schema(value.at(key), sub, path + "." + key);
      }
    }
  }
  if (value.is_array()) {
    if (schema.contains("minItems") && value.size() < schema.at("minItems").get<std::size_t>()) {
      throw SchemaError(path + ": fewer than minItems elements");
    }
    if (schema.contains("maxItems") && value.size() > schema.at("maxItems").get<std::size_t>()) {
      throw SchemaError(path + ": more than maxItems elements");
    }
    if (schema.contains("items")) {
      for (std::size_t i = 0; i < value.size(); ++i) {
        validate_schema(value.at(i), schema.at("items"), path + "[" + std::to_string(i) + "]");
      }
    }
  }
}

ChatResponse complete_structured(ChatClient& client, ChatRequest req,
                                 const std::function<void(const json&)>& semantic_check,
                                 int max_attempts) {
  if (!req.response_schema) {
    throw ContractError("complete_structured: request has no response schema");
  }
  TokenUsage accumulated;
  std::string last_error;
  for (int attempt = 0; attempt < max_attempts; ++attempt) {
    ChatResponse res = client.complete(req);
    accumulated += res.usage;
    try {
      json parsed = parse_json_reply(res.text);
      validate_schema(parsed, req.response_schema->schema);
      if (semantic_check) semantic_check(parsed);
      res.parsed = std::move(parsed);
      res.usage = accumulated;
      return res;
    } catch (const SchemaError& e) {
      last_error = e.what();
      req.messages.push_back({"assistant", {MessagePart::make_text(res.text)}});
      req.messages.push_back(
          {"user",
           {MessagePart::make_text("Your previous reply was rejected: " + last_error +
                                   ". Respond again with ONLY a JSON object that satisfies the "
                                   "requested schema. No prose, no code fences.")}});
    }
  }
  throw SchemaError("structured output invalid after " + std::to_string(max_attempts) +
                    " attempts: " + last_error);
}

}  // namespace adagent::providers
