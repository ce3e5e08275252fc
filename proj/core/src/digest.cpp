#include "adagent/digest.hpp"

#include <openssl/evp.h>

#include <array>
#include <cmath>

#include "adagent/errors.hpp"

namespace adagent {
namespace {

void reject_non_finite(const nlohmann::json& j) {
  if (j.is_number_float()) {
    if (!std::isfinite(j.get<double>())) {
      throw EncodingError("canonical_digest: non-finite number has no canonical encoding");
    }
    return;
  }
  if (j.is_object() || j.is_array()) {
    for (const auto& item : j) reject_non_finite(item);
  }
}

}  // namespace

std::string sha256_hex(const void* data, std::size_t size) {
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int md_len = 0;
  if (EVP_Digest(data, size, md.data(), &md_len, EVP_sha256(), nullptr) != 1) {
    throw EncodingError("sha256_hex: digest computation failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  out.reserve(md_len * 2);
  for (unsigned int i = 0; i < md_len; ++i) {
    out.push_back(hex[md[i] >> 4]);
    out.push_back(hex[md[i] & 0x0f]);
  }
  return out;
}

std::string sha256_hex(const std::string& bytes) { return sha256_hex(bytes.data(), bytes.size()); }

std::string sha256_hex(const std::vector<std::uint8_t>& bytes) {
  return sha256_hex(bytes.data(), bytes.size());
}

std::string canonical_digest(const nlohmann::json& payload) {
  reject_non_finite(payload);
  // nlohmann::json stores object members in a std::map, so dump() already
  // emits sorted keys and no whitespace: that is the canonical form.
  const std::string canonical = payload.dump();
  return sha256_hex(canonical);
}

}  // namespace adagent
