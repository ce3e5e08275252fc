#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "adagent/scoring.hpp"

namespace adagent::eval {

// Probability that a random positive outranks a random negative, ties
// counted 1/2 (Mann-Whitney formulation). Requires at least one record of
// each label; throws MetricError otherwise.
double auroc(const std::vector<ScoredRecord>& records);

// Highest F1 over thresholds t in {distinct scores} an implicit -inf, with
// "predict anomalous iff score >= t" and positives = anomalous. Requires at
// least one positive label.
double f1_max(const std::vector<ScoredRecord>& records);

struct ClassMetrics {
  std::optional<double> auroc;   // absent when the class has a single label
  std::optional<double> f1_max;  // absent when the class has no positives
  int records = 0;
  int failures = 0;
  int fallbacks = 0;
};

struct DatasetMetrics {
  std::optional<double> auroc;
  std::optional<double> f1_max;
  int records = 0;
  int failures = 0;
  int fallbacks = 0;
  long prompt_tokens = 0;
  long completion_tokens = 0;
  std::map<std::string, ClassMetrics> per_class;
};

// Aggregate result of one benchmark run; metrics are computed only over
// successful episodes, failures are counted separately.
struct MetricsSummary {
  std::map<std::string, DatasetMetrics> datasets;
  int shots = 0;

  int total_failures() const;
  int total_fallbacks() const;
};

}  // namespace adagent::eval
