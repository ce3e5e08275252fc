#include "adagent/metrics.hpp"

#include <algorithm>
#include <cstddef>
#include <numeric>

#include "adagent/errors.hpp"

namespace adagent::eval {

double auroc(const std::vector<ScoredRecord>& records) {
  std::size_t n_pos = 0;
  for (const auto& r : records) n_pos += r.label.anomalous() ? 1 : 0;
  const std::size_t n_neg = records.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) {
    throw MetricError("auroc: needs at least one positive and one negative label");
  }

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].ranking_score < records[b].ranking_score;
  });

  // Average ranks over tie groups, then the rank-sum form of Mann-Whitney U.
  double pos_rank_sum = 0.0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() &&
           records[order[j]].ranking_score == records[order[i]].ranking_score) {
      ++j;
    }
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);  // ranks are 1-based
    for (std::size_t k = i; k < j; ++k) {
      if (records[order[k]].label.anomalous()) pos_rank_sum += avg_rank;
    }
    i = j;
  }

  const double n1 = static_cast<double>(n_pos);
  const double u = pos_rank_sum - n1 * (n1 + 1.0) / 2.0;
  return u / (n1 * static_cast<double>(n_neg));
}

double f1_max(const std::vector<ScoredRecord>& records) {
  std::size_t n_pos = 0;
  for (const auto& r : records) n_pos += r.label.anomalous() ? 1 : 0;
  if (n_pos == 0) throw MetricError("f1_max: needs at least one positive label");

  std::vector<std::size_t> order(records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return records[a].ranking_score > records[b].ranking_score;
  });

  // Sweep thresholds at each distinct score, highest first. After consuming
  // a full tie group, everything seen so far is predicted positive, which is
  // exactly "score >= t" at that group's score. The all-positive case equals
  // the lowest distinct score, so an explicit -inf adds nothing but is
  // covered regardless.
  double best = 0.0;
  std::size_t tp = 0;
  std::size_t fp = 0;
  std::size_t i = 0;
  while (i < order.size()) {
    std::size_t j = i;
    while (j < order.size() &&
           records[order[j]].ranking_score == records[order[i]].ranking_score) {
      if (records[order[j]].label.anomalous()) {
        ++tp;
      } else {
        ++fp;
      }
      ++j;
    }
    const std::size_t fn = n_pos - tp;
    const double denom = static_cast<double>(2 * tp + fp + fn);
    if (denom > 0.0) best = std::max(best, 2.0 * static_cast<double>(tp) / denom);
    i = j;
  }
  return best;
}

int MetricsSummary::total_failures() const {
  int n = 0;
  for (const auto& [_, d] : datasets) n += d.failures;
  return n;
}

int MetricsSummary::total_fallbacks() const {
  int n = 0;
  for (const auto& [_, d] : datasets) n += d.fallbacks;
  return n;
}

}  // namespace adagent::eval
