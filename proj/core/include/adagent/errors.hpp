#pragma once

#include <stdexcept>
#include <string>

namespace adagent {

// Base for everything this library throws on purpose.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

// A caller broke a documented precondition or invariant.
class ContractError : public Error {
 public:
  using Error::Error;
};

// Numeric input outside the operation's domain (NaN, zero vector, ...).
class DomainError : public Error {
 public:
  using Error::Error;
};

// Malformed external payload: undecodable image, bad CSV row, truncated file.
class InputError : public Error {
 public:
  using Error::Error;
};

// Out-of-range or missing operation parameter.
class ParameterError : public Error {
 public:
  using Error::Error;
};

// Payload cannot be put into canonical serialized form.
class EncodingError : public Error {
 public:
  using Error::Error;
};

class IoError : public Error {
 public:
  using Error::Error;
};

// Network-level failure; retryable by policy.
class TransportError : public Error {
 public:
  using Error::Error;
};

// Provider rejected the request (auth, quota, protocol); carries HTTP status.
class ProviderError : public Error {
 public:
  ProviderError(const std::string& what, int status) : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_ = 0;
};

// Structured output still invalid after bounded re-prompts.
class SchemaError : public Error {
 public:
  using Error::Error;
};

// replay-strict cache lookup missed; carries the request digest.
class CacheMissError : public Error {
 public:
  CacheMissError(const std::string& what, std::string digest)
      : Error(what), digest_(std::move(digest)) {}
  const std::string& digest() const { return digest_; }

 private:
  std::string digest_;
};

// A pipeline stage could not produce its output; the episode aborts.
class StageError : public Error {
 public:
  using Error::Error;
};

// Plan/reflection referenced a tool this build does not provide.
class ToolDispatchError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Dataset directory tree does not match the declared layout.
class LayoutError : public Error {
 public:
  using Error::Error;
};

// Metric undefined for the given label mix.
class MetricError : public Error {
 public:
  using Error::Error;
};

}  // namespace adagent
