#pragma once

#include <vector>

#include "adagent/agent.hpp"
#include "adagent/memory.hpp"

namespace adagent::memory {

// Builds per-class calibration artifacts from few-shot normal references:
// evidence records, candidate reliability weights, and the gated class note.
class MemoryBuilder {
 public:
  MemoryBuilder(agent::AgentPipeline& pipeline, semantic::SemanticToolkit& toolkit);

  // Runs the zero-shot pipeline on one known-normal reference and captures
  // all intermediate evidence plus the image-level embedding.
  ReferenceRecord record_reference(const agent::EpisodeInput& reference,
                                   const agent::ClassContext& ctx,
                                   providers::TokenUsage* usage = nullptr) const;

  // One batched auxiliary-model call judging every candidate against the
  // reference captions. Schema failures downgrade to `unrelated` for the
  // whole batch (no weight change), logged on stderr.
  std::vector<RelationJudgment> judge_relations(const semantic::CaptionSet& ref_captions,
                                                const std::string& reference_image_id,
                                                const semantic::CandidateSet& cands,
                                                providers::TokenUsage* usage = nullptr) const;

  // Single-candidate convenience over judge_relations.
  RelationJudgment judge_relation(const semantic::CaptionSet& ref_captions,
                                  const std::string& reference_image_id,
                                  const semantic::CandidateSet& cands,
                                  const std::string& candidate,
                                  providers::TokenUsage* usage = nullptr) const;

  struct BuildResult {
    MemoryBank bank;
    CalibrationWeights weights;
    int references_attempted = 0;
    int references_usable = 0;
    int misjudged = 0;
    providers::TokenUsage usage;
  };

  // Records every reference, runs calibration updates over all (reference,
  // candidate) pairs, drafts the class note from misjudged references, and
  // enables it only when re-validation fixes the failures without degrading
  // any previously correct reference.
  BuildResult build_memory_bank(const std::vector<agent::EpisodeInput>& references,
                                const agent::ClassContext& ctx) const;

 private:
  agent::AgentPipeline& pipeline_;
  semantic::SemanticToolkit& toolkit_;
};

}  // namespace adagent::memory
