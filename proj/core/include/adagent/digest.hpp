#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace adagent {

// SHA-256 of raw bytes, lowercase hex.
std::string sha256_hex(const void* data, std::size_t size);
std::string sha256_hex(const std::string& bytes);
std::string sha256_hex(const std::vector<std::uint8_t>& bytes);

// Digest of a structured value over its canonical byte form: object keys
// sorted, no insignificant whitespace. Equal payloads always hash equal;
// non-finite numbers are rejected (they have no canonical JSON encoding).
std::string canonical_digest(const nlohmann::json& payload);

}  // namespace adagent
