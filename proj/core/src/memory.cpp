#include "adagent/memory.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include "adagent/format.hpp"

namespace adagent::memory {

using nlohmann::json;

std::string to_string(Relation r) {
  switch (r) {
    case Relation::fit:
      return "fit";
    case Relation::conflict:
      return "conflict";
    case Relation::unrelated:
      return "unrelated";
  }
  throw ContractError("to_string: invalid Relation");
}

Relation relation_from_string(const std::string& s) {
  if (s == "fit") return Relation::fit;
  if (s == "conflict") return Relation::conflict;
  if (s == "unrelated") return Relation::unrelated;
  throw SchemaError("relation must be fit|conflict|unrelated, got '" + s + "'");
}

CalibrationWeights CalibrationWeights::init(const semantic::CandidateSet& cands, double value) {
  CalibrationWeights w;
  for (const auto& c : cands.anomaly_candidates) w.by_candidate[c] = value;
  for (const auto& c : cands.normal_candidates) w.by_candidate[c] = value;
  return w;
}

double CalibrationWeights::at(const std::string& candidate) const {
  auto it = by_candidate.find(candidate);
  if (it == by_candidate.end()) {
    throw ContractError("CalibrationWeights: no weight for candidate '" + candidate + "'");
  }
  return it->second;
}

void CalibrationWeights::set(const std::string& candidate, double w) {
  by_candidate[candidate] = clip_unit(w);
}

// ---------------------------------------------------------------------------

double matching_strength(const semantic::CaptionSet& ref_captions, const Embedding& candidate_emb) {
  if (ref_captions.embeddings.empty()) {
    throw ContractError("matching_strength: reference captions lack embeddings");
  }
  double best = -1.0;
  for (const auto& cap : ref_captions.embeddings) {
    best = std::max(best, cosine_similarity(cap, candidate_emb));
  }
  return best;
}

double update_delta(Relation relation, double rho, CandidateSide side, bool cr_was_wrong) {
  double s = 0.0;
  if (relation == Relation::fit) {
    s = side == CandidateSide::normal ? 1.0 : -1.0;
  } else if (relation == Relation::conflict && side == CandidateSide::anomaly) {
    s = kConflictScale;
  }
  const double delta = cr_was_wrong ? kWrongCrDelta : kBaseDelta;
  return s * delta * std::max(rho, 0.0);
}

double update_weight(double w, Relation relation, double rho, CandidateSide side,
                     bool cr_was_wrong) {
  return clip_unit(w + update_delta(relation, rho, side, cr_was_wrong));
}

double calibrated_match_score(double similarity, double weight, double tau_cand) {
  if (!(tau_cand > 0.0)) throw ParameterError("calibrated_match_score: tau_cand must be > 0");
  return similarity / tau_cand + (weight - 0.5);
}

namespace {

double best_calibrated(const Embedding& caption_emb, const std::vector<std::string>& candidates,
                       const std::vector<Embedding>& embeddings,
                       const CalibrationWeights& weights, double tau_cand) {
  double best = -1e300;
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    const double sim = cosine_similarity(caption_emb, embeddings[i]);
    best = std::max(best, calibrated_match_score(sim, weights.at(candidates[i]), tau_cand));
  }
  return best;
}

}  // namespace

double calibrated_margin(const Embedding& caption_emb, const semantic::CandidateSet& cands,
                         const CalibrationWeights& weights, double tau_cand) {
  if (!(tau_cand > 0.0)) throw ParameterError("calibrated_margin: tau_cand must be > 0");
  if (cands.anomaly_embeddings.empty() || cands.normal_embeddings.empty()) {
    throw ContractError("calibrated_margin: both candidate sides must be nonempty");
  }
  const double best_a = best_calibrated(caption_emb, cands.anomaly_candidates,
                                        cands.anomaly_embeddings, weights, tau_cand);
  const double best_n = best_calibrated(caption_emb, cands.normal_candidates,
                                        cands.normal_embeddings, weights, tau_cand);
  return tau_cand * best_a - tau_cand * best_n;
}

std::pair<std::vector<semantic::TopMatch>, std::vector<semantic::TopMatch>>
retrieve_topk_calibrated(const Embedding& caption_emb, const semantic::CandidateSet& cands,
                         const CalibrationWeights& weights, double tau_cand, int k) {
  if (k < 1) throw ContractError("retrieve_topk_calibrated: K must be >= 1");
  auto side = [&](const std::vector<std::string>& candidates,
                  const std::vector<Embedding>& embeddings) {
    std::vector<double> scores(candidates.size());
    for (std::size_t i = 0; i < candidates.size(); ++i) {
      const double sim = cosine_similarity(caption_emb, embeddings[i]);
      scores[i] = tau_cand * calibrated_match_score(sim, weights.at(candidates[i]), tau_cand);
    }
    std::vector<std::size_t> order(candidates.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
    const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
    std::vector<semantic::TopMatch> out;
    for (std::size_t i = 0; i < take; ++i) out.push_back({candidates[order[i]], scores[order[i]]});
    return out;
  };
  return {side(cands.anomaly_candidates, cands.anomaly_embeddings),
          side(cands.normal_candidates, cands.normal_embeddings)};
}

std::vector<RetrievedEntry> retrieve_memories(const Embedding& query_emb, const MemoryBank& bank,
                                              double gamma) {
  std::vector<RetrievedEntry> out;
  for (std::size_t i = 0; i < bank.entries.size(); ++i) {
    const double sim = cosine_similarity(query_emb, bank.entries[i].image_embedding);
    if (sim > gamma) out.push_back({i, sim});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const RetrievedEntry& a, const RetrievedEntry& b) {
                     return a.similarity > b.similarity;
                   });
  return out;
}

MemoryReport compose_memory_report(const std::vector<RetrievedEntry>& retrieved,
                                   const MemoryBank& bank) {
  MemoryReport report;
  report.retrieved_count = static_cast<int>(retrieved.size());
  if (retrieved.empty()) return report;

  double sum_sim = 0.0;
  double sum_margin = 0.0;
  report.max_similarity = -2.0;
  for (const auto& r : retrieved) {
    const auto& rec = bank.entries.at(r.index);
    report.entries.push_back(
        {rec.image_id, r.similarity, rec.report_cr.mean_margin, rec.judged_correctly()});
    sum_sim += r.similarity;
    sum_margin += rec.report_cr.mean_margin;
    report.max_similarity = std::max(report.max_similarity, r.similarity);
    report.all_retrieved_reliable = report.all_retrieved_reliable && rec.judged_correctly();
  }
  report.mean_similarity = sum_sim / static_cast<double>(retrieved.size());
  report.avg_margin = sum_margin / static_cast<double>(retrieved.size());
  return report;
}

std::string MemoryReport::to_text() const {
  std::ostringstream out;
  out << "Normal-reference memory report (historical normal-shot calibration, not a decision "
         "rule):\n";
  if (retrieved_count == 0) {
    out << "no similar normal reference retrieved\n";
    return out.str();
  }
  out << "retrieved " << retrieved_count << " similar normal reference(s)\n";
  for (const auto& e : entries) {
    out << "  " << e.image_id << ": similarity " << format_fixed(e.similarity)
        << ", reference mean margin " << format_fixed(e.mean_margin)
        << (e.judged_correctly ? ", previously judged normal (reliable)"
                               : ", previously misjudged anomalous (unreliable)")
        << "\n";
  }
  out << "mean similarity " << format_fixed(mean_similarity) << ", max similarity "
      << format_fixed(max_similarity) << ", average reference margin " << format_fixed(avg_margin)
      << "\n";
  if (!all_retrieved_reliable) {
    out << "caution: some retrieved references were previously misjudged\n";
  }
  return out.str();
}

json MemoryReport::to_json() const {
  json entries_json = json::array();
  for (const auto& e : entries) {
    entries_json.push_back({{"image_id", e.image_id},
                            {"similarity", e.similarity},
                            {"mean_margin", e.mean_margin},
                            {"judged_correctly", e.judged_correctly}});
  }
  return {{"retrieved_count", retrieved_count},
          {"entries", entries_json},
          {"mean_similarity", mean_similarity},
          {"max_similarity", max_similarity},
          {"avg_margin", avg_margin},
          {"all_retrieved_reliable", all_retrieved_reliable}};
}

// ---------------------------------------------------------------------------

json bank_to_json(const MemoryBank& bank, const CalibrationWeights& weights,
                  const json& provenance) {
  json entries = json::array();
  for (const auto& rec : bank.entries) {
    entries.push_back({{"image_id", rec.image_id},
                       {"phi", rec.image_embedding.values},
                       {"captions", rec.captions.captions},
                       {"report_gr", rec.report_gr.to_json()},
                       {"report_cr", rec.report_cr.to_json()},
                       {"verdict", adagent::to_string(rec.verdict)},
                       {"reason", rec.reason}});
  }
  return {{"class_name", bank.class_name},
          {"entries", entries},
          {"class_note", bank.class_note ? json(*bank.class_note) : json(nullptr)},
          {"note_enabled", bank.note_enabled},
          {"weights", weights.by_candidate},
          {"provenance", provenance}};
}

std::pair<MemoryBank, CalibrationWeights> bank_from_json(const json& j) {
  MemoryBank bank;
  bank.class_name = j.at("class_name").get<std::string>();
  for (const auto& e : j.at("entries")) {
    ReferenceRecord rec;
    rec.image_id = e.at("image_id").get<std::string>();
    rec.image_embedding = Embedding(e.at("phi").get<std::vector<double>>());
    rec.captions.captions = e.at("captions").get<std::vector<std::string>>();
    rec.report_cr.mean_margin = e.at("report_cr").value("mean_margin", 0.0);
    rec.report_cr.calibrated = e.at("report_cr").value("calibrated", false);
    rec.verdict = verdict_from_string(e.at("verdict").get<std::string>());
    rec.reason = e.value("reason", "");
    bank.entries.push_back(std::move(rec));
  }
  if (j.contains("class_note") && !j.at("class_note").is_null()) {
    bank.class_note = j.at("class_note").get<std::string>();
  }
  bank.note_enabled = j.value("note_enabled", false);
  CalibrationWeights weights;
  weights.by_candidate = j.at("weights").get<std::map<std::string, double>>();
  return {std::move(bank), std::move(weights)};
}

}  // namespace adagent::memory
