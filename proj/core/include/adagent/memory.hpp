#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adagent/embedding.hpp"
#include "adagent/scoring.hpp"
#include "adagent/semantic.hpp"

namespace adagent::memory {

enum class Relation { fit, conflict, unrelated };
enum class CandidateSide { anomaly, normal };

std::string to_string(Relation r);
Relation relation_from_string(const std::string& s);

// One relation verdict for a (candidate, reference) pair.
struct RelationJudgment {
  Relation relation = Relation::unrelated;
  std::string candidate;
  std::string reference_image_id;
};

// Full evidence captured by running the zero-shot pipeline on one
// known-normal reference image.
struct ReferenceRecord {
  std::string image_id;
  Embedding image_embedding;  // image-level embedding of the reference
  semantic::CaptionSet captions;
  semantic::GeneralReport report_gr;
  semantic::CounterfactualReport report_cr;
  Verdict verdict = Verdict::normal;
  std::string reason;

  bool judged_correctly() const { return verdict == Verdict::normal; }
};

// Per-candidate reliability weights, initialized to 0.5.
struct CalibrationWeights {
  std::map<std::string, double> by_candidate;

  static CalibrationWeights init(const semantic::CandidateSet& cands, double value = 0.5);

  double at(const std::string& candidate) const;
  void set(const std::string& candidate, double w);
};

// Per-class store of normal references with the optional gated class note.
struct MemoryBank {
  std::string class_name;
  std::vector<ReferenceRecord> entries;
  std::optional<std::string> class_note;  // drafted hard-normal note, enabled or not
  bool note_enabled = false;
};

struct MemoryReportEntry {
  std::string image_id;
  double similarity = 0.0;
  double mean_margin = 0.0;
  bool judged_correctly = true;
};

// Similarity statistics over retrieved normal memories. Framed as
// historical calibration evidence, never a decision rule.
struct MemoryReport {
  int retrieved_count = 0;
  std::vector<MemoryReportEntry> entries;
  double mean_similarity = 0.0;
  double max_similarity = 0.0;
  double avg_margin = 0.0;
  bool all_retrieved_reliable = true;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

struct RetrievedEntry {
  std::size_t index = 0;  // into bank.entries
  double similarity = 0.0;
};

// ---------------------------------------------------------------------------
// Pure calibration math

inline constexpr double kBaseDelta = 0.1;      // fit update coefficient
inline constexpr double kWrongCrDelta = 0.2;   // larger coefficient when the
                                               // counterfactual evidence was wrong
inline constexpr double kConflictScale = 0.05; // anomaly-conflict reinforcement

// max over the reference's captions of cos(caption, candidate).
double matching_strength(const semantic::CaptionSet& ref_captions, const Embedding& candidate_emb);

// The update term: s * delta * max(rho, 0) with
//   s = +1              (normal side, fit)
//   s = -1              (anomaly side, fit)
//   s = +kConflictScale (anomaly side, conflict)
//   s = 0               otherwise
// delta = kWrongCrDelta when the counterfactual evidence wrongly favored
// anomaly on the reference, else kBaseDelta. Flipping cr_was_wrong scales
// the term by exactly 2.
double update_delta(Relation relation, double rho, CandidateSide side, bool cr_was_wrong);

// w <- clip(w + update_delta(...), 0, 1)
double update_weight(double w, Relation relation, double rho, CandidateSide side,
                     bool cr_was_wrong);

// l(d, e) = sim / tau_cand + (w_e - 0.5); w_e = 0.5 recovers raw matching.
double calibrated_match_score(double similarity, double weight, double tau_cand);

// tau * max_a l(d, a) - tau * max_n l(d, n)
double calibrated_margin(const Embedding& caption_emb, const semantic::CandidateSet& cands,
                         const CalibrationWeights& weights, double tau_cand);

// Top-K per side ranked by the calibrated score, reported at tau * l scale.
std::pair<std::vector<semantic::TopMatch>, std::vector<semantic::TopMatch>>
retrieve_topk_calibrated(const Embedding& caption_emb, const semantic::CandidateSet& cands,
                         const CalibrationWeights& weights, double tau_cand, int k);

// All entries with cos(query, phi) strictly above gamma, most similar first.
std::vector<RetrievedEntry> retrieve_memories(const Embedding& query_emb, const MemoryBank& bank,
                                              double gamma);

MemoryReport compose_memory_report(const std::vector<RetrievedEntry>& retrieved,
                                   const MemoryBank& bank);

// ---------------------------------------------------------------------------
// Bank persistence (weights map, entry summaries, note, provenance digests)

nlohmann::json bank_to_json(const MemoryBank& bank, const CalibrationWeights& weights,
                            const nlohmann::json& provenance);
std::pair<MemoryBank, CalibrationWeights> bank_from_json(const nlohmann::json& j);

}  // namespace adagent::memory
