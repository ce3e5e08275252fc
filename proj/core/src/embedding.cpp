#include "adagent/embedding.hpp"

namespace adagent {

Embedding normalized_mean(const std::vector<Embedding>& vecs) {
  if (vecs.empty()) throw ContractError("normalized_mean: empty input");
  const std::size_t d = vecs.front().dim();
  if (d == 0) throw ContractError("normalized_mean: zero-dimensional input");
  std::vector<double> acc(d, 0.0);
  for (const auto& v : vecs) {
    if (v.dim() != d) throw ContractError("normalized_mean: inconsistent dimensions");
    for (std::size_t i = 0; i < d; ++i) acc[i] += v.values[i];
  }
  for (double& x : acc) x /= static_cast<double>(vecs.size());
  Embedding mean(std::move(acc));
  const double n = mean.norm();
  if (n < 1e-12) throw DomainError("normalized_mean: degenerate (near-zero) mean");
  for (double& x : mean.values) x /= n;
  return mean;
}

}  // namespace adagent
