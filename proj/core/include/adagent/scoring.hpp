#pragma once

#include <string>

#include "adagent/embedding.hpp"
#include "adagent/errors.hpp"

namespace adagent {

// Hard-label episode outcome. `uncertain` exists only mid-episode: the loop
// must resolve it or fall back before a verdict becomes final.
enum class Verdict { normal, anomalous, uncertain };

std::string to_string(Verdict v);
Verdict verdict_from_string(const std::string& s);

// Ground-truth label: 0 = normal, 1 = anomalous.
struct BinaryLabel {
  int value = 0;

  BinaryLabel() = default;
  explicit BinaryLabel(int v) : value(v) {
    if (v != 0 && v != 1) throw ContractError("BinaryLabel: value must be 0 or 1");
  }
  bool anomalous() const { return value == 1; }
};

// Per-image record consumed by the metric computations.
struct ScoredRecord {
  std::string image_id;
  BinaryLabel label;
  Verdict verdict = Verdict::normal;
  double ranking_score = 0.0;
};

// Auxiliary ranking score for AUROC / F1-max over hard-label verdicts:
// ranks primarily by the verdict bit, breaks ties by the margin evidence.
// Always in [0, 2) since sigmoid stays in (0, 1).
inline double ranking_score(Verdict verdict, double mean_margin) {
  if (verdict == Verdict::uncertain) {
    throw ContractError("ranking_score: verdict must be final (normal or anomalous)");
  }
  const double verdict_bit = verdict == Verdict::anomalous ? 1.0 : 0.0;
  return verdict_bit + sigmoid(mean_margin);
}

}  // namespace adagent
