#include "adagent/memory_builder.hpp"

#include <algorithm>
#include <iostream>
#include <map>
#include <sstream>

namespace adagent::memory {

using nlohmann::json;
using providers::ChatRequest;
using providers::MessagePart;

namespace {

const json kRelationsSchema = {
    {"type", "object"},
    {"required", {"relations"}},
    {"properties",
     {{"relations",
       {{"type", "array"},
        {"items",
         {{"type", "object"},
          {"required", {"candidate", "relation"}},
          {"properties",
           {{"candidate", {{"type", "string"}}},
            {"relation",
             {{"type", "string"}, {"enum", {"fit", "conflict", "unrelated"}}}}}}}}}}}}};

const json kCuesSchema = {
    {"type", "object"},
    {"required", {"hard_normal_cues"}},
    {"properties",
     {{"hard_normal_cues",
       {{"type", "array"}, {"minItems", 1}, {"maxItems", 5}, {"items", {{"type", "string"}}}}}}}};

const json kNoteSchema = {{"type", "object"},
                          {"required", {"class_note"}},
                          {"properties", {{"class_note", {{"type", "string"}}}}}};

}  // namespace

MemoryBuilder::MemoryBuilder(agent::AgentPipeline& pipeline, semantic::SemanticToolkit& toolkit)
    : pipeline_(pipeline), toolkit_(toolkit) {}

ReferenceRecord MemoryBuilder::record_reference(const agent::EpisodeInput& reference,
                                                const agent::ClassContext& ctx,
                                                providers::TokenUsage* usage) const {
  // Zero-shot pass: no memory context while recording evidence.
  auto outcome = pipeline_.run_episode(reference, ctx, nullptr);
  if (outcome.trace.failed) {
    throw StageError("reference episode failed for '" + reference.image_id +
                     "': " + outcome.trace.failure);
  }
  if (usage) *usage += outcome.trace.usage;

  ReferenceRecord rec;
  rec.image_id = reference.image_id;
  rec.image_embedding =
      toolkit_.embedder().embed_image(reference.image, pipeline_.config().image_embed_model);
  rec.captions = std::move(outcome.captions);
  rec.report_gr = std::move(outcome.report_gr);
  rec.report_cr = std::move(outcome.report_cr);
  rec.verdict = outcome.trace.final_verdict;
  for (const auto& e : outcome.trace.events) {
    if (e.type == "judgment") rec.reason = e.data.value("reason", "");
  }
  return rec;
}

std::vector<RelationJudgment> MemoryBuilder::judge_relations(
    const semantic::CaptionSet& ref_captions, const std::string& reference_image_id,
    const semantic::CandidateSet& cands, providers::TokenUsage* usage) const {
  std::vector<std::string> all = cands.anomaly_candidates;
  all.insert(all.end(), cands.normal_candidates.begin(), cands.normal_candidates.end());

  std::map<std::string, Relation> judged;
  try {
    ChatRequest req;
    req.model_id = toolkit_.models().aux;
    req.response_schema = providers::ResponseSchema{"relations", kRelationsSchema};
    req.add_system(semantic::expand_class(
        toolkit_.prompts().prompt(semantic::PromptRole::relation_judge), cands.class_name));
    std::ostringstream text;
    text << "Reference captions of a known-normal " << cands.class_name << ":\n";
    for (std::size_t j = 0; j < ref_captions.captions.size(); ++j) {
      text << j << ": " << ref_captions.captions[j] << "\n";
    }
    text << "\nCandidates (JSON):\n" << json(all).dump() << "\n";
    req.add_user_text(text.str());

    const auto res = providers::complete_structured(
        toolkit_.chat(), std::move(req), [&](const json& j) {
          std::map<std::string, int> counts;
          for (const auto& r : j.at("relations")) {
            counts[r.at("candidate").get<std::string>()] += 1;
          }
          for (const auto& c : all) {
            auto it = counts.find(c);
            if (it == counts.end() || it->second != 1) {
              throw SchemaError("relations must cover candidate '" + c + "' exactly once");
            }
          }
        });
    if (usage) *usage += res.usage;
    for (const auto& r : res.parsed->at("relations")) {
      judged[r.at("candidate").get<std::string>()] =
          relation_from_string(r.at("relation").get<std::string>());
    }
  } catch (const Error& e) {
    std::cerr << "warning: relation judging failed for reference '" << reference_image_id
              << "', defaulting to unrelated: " << e.what() << "\n";
  }

  std::vector<RelationJudgment> out;
  out.reserve(all.size());
  for (const auto& c : all) {
    RelationJudgment rj;
    rj.candidate = c;
    rj.reference_image_id = reference_image_id;
    auto it = judged.find(c);
    rj.relation = it == judged.end() ? Relation::unrelated : it->second;
    out.push_back(std::move(rj));
  }
  return out;
}

RelationJudgment MemoryBuilder::judge_relation(const semantic::CaptionSet& ref_captions,
                                               const std::string& reference_image_id,
                                               const semantic::CandidateSet& cands,
                                               const std::string& candidate,
                                               providers::TokenUsage* usage) const {
  for (auto& rj : judge_relations(ref_captions, reference_image_id, cands, usage)) {
    if (rj.candidate == candidate) return rj;
  }
  throw ContractError("judge_relation: candidate '" + candidate + "' not in the candidate set");
}

MemoryBuilder::BuildResult MemoryBuilder::build_memory_bank(
    const std::vector<agent::EpisodeInput>& references, const agent::ClassContext& ctx) const {
  BuildResult result;
  result.references_attempted = static_cast<int>(references.size());
  result.bank.class_name = ctx.class_name;

  for (const auto& ref : references) {
    try {
      result.bank.entries.push_back(record_reference(ref, ctx, &result.usage));
    } catch (const Error& e) {
      std::cerr << "warning: excluding reference '" << ref.image_id << "': " << e.what() << "\n";
    }
  }
  result.references_usable = static_cast<int>(result.bank.entries.size());
  if (result.bank.entries.empty()) {
    throw StageError("build_memory_bank: no usable normal references for class '" +
                     ctx.class_name + "'");
  }

  // Counterfactual candidate calibration over every (reference, candidate)
  // pair. cr_was_wrong: the raw counterfactual margin favored anomaly on a
  // known-normal reference.
  result.weights = CalibrationWeights::init(ctx.candidates);
  for (const auto& rec : result.bank.entries) {
    const bool cr_was_wrong = rec.report_cr.mean_margin > 0.0;
    const auto relations = judge_relations(rec.captions, rec.image_id, ctx.candidates,
                                           &result.usage);
    std::map<std::string, Relation> by_candidate;
    for (const auto& rj : relations) by_candidate[rj.candidate] = rj.relation;

    for (std::size_t i = 0; i < ctx.candidates.anomaly_candidates.size(); ++i) {
      const auto& cand = ctx.candidates.anomaly_candidates[i];
      const double rho = matching_strength(rec.captions, ctx.candidates.anomaly_embeddings[i]);
      result.weights.set(cand, update_weight(result.weights.at(cand), by_candidate.at(cand), rho,
                                             CandidateSide::anomaly, cr_was_wrong));
    }
    for (std::size_t i = 0; i < ctx.candidates.normal_candidates.size(); ++i) {
      const auto& cand = ctx.candidates.normal_candidates[i];
      const double rho = matching_strength(rec.captions, ctx.candidates.normal_embeddings[i]);
      result.weights.set(cand, update_weight(result.weights.at(cand), by_candidate.at(cand), rho,
                                             CandidateSide::normal, cr_was_wrong));
    }
  }

  // Hard-normal flow: reflect on misjudged references, summarize into the
  // class note, then gate it on a non-degrading validation pass.
  std::vector<const ReferenceRecord*> misjudged;
  for (const auto& rec : result.bank.entries) {
    if (!rec.judged_correctly()) misjudged.push_back(&rec);
  }
  result.misjudged = static_cast<int>(misjudged.size());

  if (!misjudged.empty()) {
    std::vector<std::string> cues;
    for (const auto* rec : misjudged) {
      ChatRequest req;
      req.model_id = toolkit_.models().aux;
      req.response_schema = providers::ResponseSchema{"hard_normal_cues", kCuesSchema};
      req.add_system(semantic::expand_class(
          toolkit_.prompts().prompt(semantic::PromptRole::entry_hard_negative), ctx.class_name));
      std::ostringstream text;
      text << "Reference captions:\n";
      for (const auto& c : rec->captions.captions) text << "- " << c << "\n";
      text << "\nJudged reason: " << rec->reason << "\n";
      req.add_user_text(text.str());
      const auto res = providers::complete_structured(toolkit_.chat(), std::move(req));
      result.usage += res.usage;
      for (const auto& cue : res.parsed->at("hard_normal_cues")) {
        cues.push_back(cue.get<std::string>());
      }
    }

    ChatRequest req;
    req.model_id = toolkit_.models().aux;
    req.response_schema = providers::ResponseSchema{"class_note", kNoteSchema};
    req.add_system(semantic::expand_class(
        toolkit_.prompts().prompt(semantic::PromptRole::class_hard_negative_summary),
        ctx.class_name));
    std::ostringstream text;
    text << "Collected hard-normal cues:\n";
    for (const auto& cue : cues) text << "- " << cue << "\n";
    req.add_user_text(text.str());
    const auto res = providers::complete_structured(
        toolkit_.chat(), std::move(req), [](const json& j) {
          if (j.at("class_note").get<std::string>().empty()) {
            throw SchemaError("class_note must be nonempty");
          }
        });
    result.usage += res.usage;
    result.bank.class_note = res.parsed->at("class_note").get<std::string>();

    // Validation gate: re-judge every reference with the candidate note
    // active. Enable only if correctness improves and no previously correct
    // reference degrades.
    agent::MemoryContext validation_ctx;
    validation_ctx.weights = result.weights;
    validation_ctx.bank = result.bank;
    validation_ctx.bank.note_enabled = true;

    bool degraded = false;
    int fixed = 0;
    for (std::size_t i = 0; i < result.bank.entries.size(); ++i) {
      const auto& rec = result.bank.entries[i];
      const auto& ref = *std::find_if(references.begin(), references.end(),
                                      [&](const agent::EpisodeInput& r) {
                                        return r.image_id == rec.image_id;
                                      });
      auto outcome = pipeline_.run_episode(ref, ctx, &validation_ctx);
      result.usage += outcome.trace.usage;
      const bool was_correct = rec.judged_correctly();
      const bool now_correct =
          !outcome.trace.failed && outcome.trace.final_verdict == Verdict::normal;
      if (was_correct && !now_correct) degraded = true;
      if (!was_correct && now_correct) ++fixed;
    }
    result.bank.note_enabled = !degraded && fixed == result.misjudged && result.misjudged > 0;
  }

  return result;
}

}  // namespace adagent::memory
