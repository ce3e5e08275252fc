#pragma once

#include <array>
#include <map>
#include <mutex>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "adagent/embedding.hpp"
#include "adagent/prompts.hpp"
#include "adagent/providers.hpp"

namespace adagent::semantic {

inline constexpr int kCaptionCount = 3;
inline constexpr const char* kCaptionPerspectives[kCaptionCount] = {"global", "local", "layout"};

// Three perspective captions of one query image with their text embeddings.
struct CaptionSet {
  std::vector<std::string> captions;    // size 3: global, local, layout
  std::vector<Embedding> embeddings;    // parallel to captions

  void check() const;
};

// Class-conditioned normal/anomaly template ensembles, already expanded with
// the class name.
struct TemplateEnsemble {
  std::string class_name;
  std::vector<std::string> normal_templates;
  std::vector<std::string> anomaly_templates;
  std::vector<Embedding> normal_embeddings;
  std::vector<Embedding> anomaly_embeddings;
};

// Atomic candidate sets: one concrete abnormal/normal visual pattern per
// entry, deduplicated case-insensitively, each at most 20 words.
struct CandidateSet {
  std::string class_name;
  std::vector<std::string> anomaly_candidates;
  std::vector<std::string> normal_candidates;
  std::vector<Embedding> anomaly_embeddings;
  std::vector<Embedding> normal_embeddings;

  nlohmann::json to_json() const;
};

// Unit-norm means of the candidate-side embeddings.
struct Prototypes {
  Embedding anomaly;
  Embedding normal;
};

struct CaptionTemplateStats {
  double max_anomaly = 0.0;
  double mean_anomaly = 0.0;
  double max_normal = 0.0;
  double mean_normal = 0.0;
};

struct GeneralReport {
  std::vector<CaptionTemplateStats> per_caption;
  std::string narrative;  // empty when the auxiliary model was unavailable

  std::string to_text() const;
  nlohmann::json to_json() const;
};

struct TopMatch {
  std::string candidate;
  double similarity = 0.0;
};

struct CaptionCounterfactual {
  double soft_score = 0.5;
  double margin = 0.0;
  std::vector<TopMatch> topk_anomaly;
  std::vector<TopMatch> topk_normal;
};

struct CounterfactualReport {
  std::vector<CaptionCounterfactual> per_caption;
  double mean_margin = 0.0;
  bool calibrated = false;
  std::string narrative;

  std::string to_text() const;
  nlohmann::json to_json() const;
};

// ---------------------------------------------------------------------------
// Pure operations

Prototypes compute_prototypes(const CandidateSet& cands);

// sigmoid(sim(caption, p_A) - sim(caption, p_N))
double soft_anomaly_score(const Embedding& caption_emb, const Prototypes& protos);

// Per side, the min(K, side size) highest-cosine candidates, similarity
// descending, ties broken by candidate list order.
std::pair<std::vector<TopMatch>, std::vector<TopMatch>> retrieve_topk(const Embedding& caption_emb,
                                                                      const CandidateSet& cands,
                                                                      int k);

// max_a sim(caption, a) - max_n sim(caption, n)
double candidate_margin(const Embedding& caption_emb, const CandidateSet& cands);

// ---------------------------------------------------------------------------
// Provider-backed toolkit

class SemanticToolkit {
 public:
  struct Models {
    std::string primary;  // multimodal: captions
    std::string aux;      // lighter: candidates, narratives
    std::string embed;
  };

  SemanticToolkit(providers::ChatClient& chat, providers::EmbedClient& embed,
                  const PromptLibrary& prompts, Models models);

  // Expands and embeds both template ensembles for one class.
  TemplateEnsemble build_ensemble(const std::string& class_name) const;

  // Three perspective captions via the description prompt, then embeddings.
  CaptionSet generate_captions(const providers::ImagePayload& image, const std::string& class_name,
                               providers::TokenUsage* usage = nullptr) const;

  // Max/mean cosine of every caption against both ensembles plus an
  // auxiliary-model narrative; narrative failures degrade to numbers-only.
  GeneralReport build_general_report(const CaptionSet& caps, const TemplateEnsemble& ens,
                                     const std::string& class_name,
                                     providers::TokenUsage* usage = nullptr) const;

  // ~20 atomic candidates per side, deduplicated; memoized per class for the
  // lifetime of this toolkit (one provider call per class per run).
  CandidateSet generate_candidates(const std::string& class_name,
                                   providers::TokenUsage* usage = nullptr);

  // Assembles precomputed per-caption evidence verbatim and adds the
  // auxiliary narrative. Evidence only: never a decision.
  CounterfactualReport compose_counterfactual_report(
      const CaptionSet& caps, const std::array<double, kCaptionCount>& soft_scores,
      const std::array<std::pair<std::vector<TopMatch>, std::vector<TopMatch>>, kCaptionCount>&
          topk,
      const std::array<double, kCaptionCount>& margins, bool calibrated,
      const std::string& class_name, providers::TokenUsage* usage = nullptr) const;

  const Models& models() const { return models_; }
  const PromptLibrary& prompts() const { return prompts_; }
  providers::ChatClient& chat() const { return chat_; }
  providers::EmbedClient& embedder() const { return embed_; }

 private:
  providers::ChatClient& chat_;
  providers::EmbedClient& embed_;
  const PromptLibrary& prompts_;
  Models models_;

  mutable std::mutex candidates_mutex_;
  std::map<std::string, CandidateSet> candidates_by_class_;
};

}  // namespace adagent::semantic
