#pragma once

#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "adagent/memory.hpp"
#include "adagent/providers.hpp"
#include "adagent/scoring.hpp"
#include "adagent/semantic.hpp"
#include "adagent/visual_tools.hpp"

namespace adagent::agent {

// Planner output: suspicious patterns, guidance, and up to 2 tool requests.
struct InspectionPlan {
  std::vector<std::string> potential_anomalies;
  std::string heuristic_prompt;
  std::vector<vision::ToolInvocation> tools_to_use;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

// Reasoner output: the structured anomaly judgment.
struct Judgment {
  Verdict verdict = Verdict::uncertain;
  std::string reason;
  std::vector<std::string> cited_evidence;

  nlohmann::json to_json() const;
};

// Reflector output: what is missing/ambiguous plus the refined instruction.
struct Reflection {
  std::vector<std::string> missing_evidence;
  std::vector<std::string> ambiguous_evidence;
  std::string refined_heuristic_prompt;
  std::vector<vision::ToolInvocation> tools_to_use;

  nlohmann::json to_json() const;
};

struct TraceEvent {
  std::string type;  // plan | tool | tool_error | judgment | reflection | fallback
  int iteration = 0;
  nlohmann::json data;
};

// Serializable record of one episode: every report, every loop event, and
// the final hard-label verdict.
struct EpisodeTrace {
  std::string image_id;
  std::string class_name;
  std::string dataset;
  int label = -1;  // ground truth when known, -1 otherwise
  nlohmann::json report_gr;
  nlohmann::json report_cr;
  nlohmann::json report_mem;  // null when zero-shot
  std::optional<std::string> class_note;
  std::vector<TraceEvent> events;
  Verdict final_verdict = Verdict::normal;
  int iterations = 0;
  bool fallback_used = false;
  bool failed = false;
  std::string failure;
  double mean_margin = 0.0;
  double score = 0.0;  // ranking_score(final_verdict, mean_margin)
  providers::TokenUsage usage;

  nlohmann::json to_json() const;
};

// Immutable per-class artifacts shared by every episode of the class.
struct ClassContext {
  std::string class_name;
  semantic::TemplateEnsemble ensemble;
  semantic::CandidateSet candidates;
  semantic::Prototypes prototypes;
};

ClassContext build_class_context(semantic::SemanticToolkit& toolkit, const std::string& class_name,
                                 providers::TokenUsage* usage = nullptr);

// Few-shot context: calibrated weights plus the normal-reference bank.
struct MemoryContext {
  memory::CalibrationWeights weights;
  memory::MemoryBank bank;
};

struct PipelineConfig {
  std::string primary_model;
  std::string image_embed_model;
  int top_k = 5;
  int termination_n = 3;  // consecutive normal judgments required
  int max_iters = 6;
  double gamma = 0.80;
  double tau_cand = 1.0;
  std::string sr_endpoint;  // optional remote super-resolution service
};

struct EpisodeInput {
  std::string image_id;
  std::string class_name;
  providers::ImagePayload image;
};

class AgentPipeline {
 public:
  AgentPipeline(semantic::SemanticToolkit& toolkit, PipelineConfig cfg);

  // Stage operations. Reports are passed by pointer so presence is part of
  // the contract: a missing report is a precondition violation.
  InspectionPlan plan(const providers::ImagePayload& image, const std::string& class_name,
                      const semantic::GeneralReport* gr, const semantic::CounterfactualReport* cr,
                      const std::optional<std::string>& heuristic,
                      providers::TokenUsage* usage = nullptr) const;

  Judgment reason(const providers::ImagePayload& image,
                  const std::vector<providers::ImagePayload>& enhanced,
                  const std::string& class_name, const InspectionPlan* plan,
                  const semantic::GeneralReport* gr, const semantic::CounterfactualReport* cr,
                  const memory::MemoryReport* mem, const std::string* class_note,
                  providers::TokenUsage* usage = nullptr) const;

  // Valid only on an uncertain judgment or during a normal-confirmation
  // pass; a terminal anomalous judgment is a contract violation.
  Reflection reflect(const providers::ImagePayload& image,
                     const std::vector<providers::ImagePayload>& enhanced,
                     const std::string& class_name, const InspectionPlan& plan,
                     const Judgment& judgment, const semantic::GeneralReport* gr,
                     const semantic::CounterfactualReport* cr, bool confirm_normal,
                     providers::TokenUsage* usage = nullptr) const;

  struct EpisodeOutcome {
    EpisodeTrace trace;
    semantic::CaptionSet captions;
    semantic::GeneralReport report_gr;
    semantic::CounterfactualReport report_cr;
  };

  // Full loop: reports, then plan / tools / reason until termination.
  // Anomalous terminates immediately; `termination_n` consecutive normal
  // judgments terminate; uncertain resets the counter and reflects. Hitting
  // max_iters falls back to sign(mean margin), recorded as such. Stage
  // errors mark the trace failed instead of propagating.
  EpisodeOutcome run_episode(const EpisodeInput& input, const ClassContext& ctx,
                             const MemoryContext* memory_ctx) const;

  const PipelineConfig& config() const { return cfg_; }

 private:
  semantic::SemanticToolkit& toolkit_;
  PipelineConfig cfg_;
};

}  // namespace adagent::agent
