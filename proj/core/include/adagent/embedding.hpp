#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "adagent/errors.hpp"

namespace adagent {

// A provider-produced embedding vector. Components are kept as 64-bit reals
// regardless of the wire payload precision: margin computations downstream
// subtract near-equal similarities.
struct Embedding {
  std::vector<double> values;

  Embedding() = default;
  explicit Embedding(std::vector<double> v) : values(std::move(v)) {}

  std::size_t dim() const { return values.size(); }

  double norm() const {
    double s = 0.0;
    for (double v : values) s += v * v;
    return std::sqrt(s);
  }

  bool finite() const {
    for (double v : values) {
      if (!std::isfinite(v)) return false;
    }
    return true;
  }
};

inline double dot(const Embedding& a, const Embedding& b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.values.size(); ++i) s += a.values[i] * b.values[i];
  return s;
}

inline double cosine_similarity(const Embedding& a, const Embedding& b) {
  if (a.dim() != b.dim()) {
    throw ContractError("cosine_similarity: dimension mismatch (" + std::to_string(a.dim()) +
                        " vs " + std::to_string(b.dim()) + ")");
  }
  if (a.dim() == 0) throw ContractError("cosine_similarity: empty embeddings");
  const double na = a.norm();
  const double nb = b.norm();
  if (na == 0.0 || nb == 0.0) throw DomainError("cosine_similarity: zero vector");
  return dot(a, b) / (na * nb);
}

inline double sigmoid(double x) {
  if (!std::isfinite(x)) throw DomainError("sigmoid: non-finite input");
  return 1.0 / (1.0 + std::exp(-x));
}

inline double clip_unit(double x) {
  if (!std::isfinite(x)) throw DomainError("clip_unit: non-finite input");
  return std::min(std::max(x, 0.0), 1.0);
}

// Arithmetic mean renormalized to unit length. Throws DomainError when the
// mean collapses to (numerically) zero.
Embedding normalized_mean(const std::vector<Embedding>& vecs);

}  // namespace adagent
