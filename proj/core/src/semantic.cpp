#include "adagent/semantic.hpp"

#include <algorithm>
#include <cctype>
#include <numeric>
#include <sstream>

#include "adagent/format.hpp"

namespace adagent::semantic {

using nlohmann::json;
using providers::ChatRequest;
using providers::MessagePart;

void CaptionSet::check() const {
  if (captions.size() != kCaptionCount || embeddings.size() != kCaptionCount) {
    throw ContractError("CaptionSet: expected exactly 3 captions with embeddings");
  }
  for (const auto& c : captions) {
    if (c.empty()) throw ContractError("CaptionSet: empty caption");
  }
  for (const auto& e : embeddings) {
    if (e.dim() == 0 || e.dim() != embeddings.front().dim()) {
      throw ContractError("CaptionSet: inconsistent embedding dimensions");
    }
  }
}

json CandidateSet::to_json() const {
  return {{"class_name", class_name},
          {"anomaly_candidates", anomaly_candidates},
          {"normal_candidates", normal_candidates}};
}

std::string GeneralReport::to_text() const {
  std::ostringstream out;
  out << "General template analysis:\n";
  for (std::size_t j = 0; j < per_caption.size(); ++j) {
    const auto& s = per_caption[j];
    out << "caption[" << j << "] (" << kCaptionPerspectives[j] << "): anomaly max "
        << format_fixed(s.max_anomaly) << ", anomaly mean " << format_fixed(s.mean_anomaly)
        << ", normal max " << format_fixed(s.max_normal) << ", normal mean "
        << format_fixed(s.mean_normal) << "\n";
  }
  if (!narrative.empty()) out << "summary: " << narrative << "\n";
  return out.str();
}

json GeneralReport::to_json() const {
  json caps = json::array();
  for (const auto& s : per_caption) {
    caps.push_back({{"max_anomaly", s.max_anomaly},
                    {"mean_anomaly", s.mean_anomaly},
                    {"max_normal", s.max_normal},
                    {"mean_normal", s.mean_normal}});
  }
  return {{"per_caption", caps}, {"narrative", narrative}};
}

std::string CounterfactualReport::to_text() const {
  std::ostringstream out;
  out << "Counterfactual candidate analysis (" << (calibrated ? "calibrated" : "raw") << "):\n";
  for (std::size_t j = 0; j < per_caption.size(); ++j) {
    const auto& c = per_caption[j];
    out << "caption[" << j << "]: soft score " << format_fixed(c.soft_score) << ", margin "
        << format_fixed(c.margin) << "\n";
    out << "  top anomaly matches:";
    for (const auto& m : c.topk_anomaly) {
      out << " \"" << m.candidate << "\" (" << format_fixed(m.similarity) << ");";
    }
    out << "\n  top normal matches:";
    for (const auto& m : c.topk_normal) {
      out << " \"" << m.candidate << "\" (" << format_fixed(m.similarity) << ");";
    }
    out << "\n";
  }
  out << "mean margin: " << format_fixed(mean_margin) << "\n";
  if (!narrative.empty()) out << "summary: " << narrative << "\n";
  return out.str();
}

json CounterfactualReport::to_json() const {
  json caps = json::array();
  for (const auto& c : per_caption) {
    json ta = json::array();
    for (const auto& m : c.topk_anomaly) ta.push_back({{"candidate", m.candidate}, {"similarity", m.similarity}});
    json tn = json::array();
    for (const auto& m : c.topk_normal) tn.push_back({{"candidate", m.candidate}, {"similarity", m.similarity}});
    caps.push_back({{"soft_score", c.soft_score},
                    {"margin", c.margin},
                    {"topk_anomaly", ta},
                    {"topk_normal", tn}});
  }
  return {{"per_caption", caps},
          {"mean_margin", mean_margin},
          {"calibrated", calibrated},
          {"narrative", narrative}};
}

// ---------------------------------------------------------------------------

Prototypes compute_prototypes(const CandidateSet& cands) {
  if (cands.anomaly_embeddings.empty() || cands.normal_embeddings.empty()) {
    throw ContractError("compute_prototypes: empty candidate embeddings");
  }
  Prototypes p;
  p.anomaly = normalized_mean(cands.anomaly_embeddings);
  p.normal = normalized_mean(cands.normal_embeddings);
  return p;
}

double soft_anomaly_score(const Embedding& caption_emb, const Prototypes& protos) {
  return sigmoid(cosine_similarity(caption_emb, protos.anomaly) -
                 cosine_similarity(caption_emb, protos.normal));
}

namespace {

std::vector<TopMatch> topk_side(const Embedding& caption_emb,
                                const std::vector<std::string>& candidates,
                                const std::vector<Embedding>& embeddings, int k) {
  std::vector<double> sims(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    sims[i] = cosine_similarity(caption_emb, embeddings[i]);
  }
  std::vector<std::size_t> order(candidates.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return sims[a] > sims[b]; });
  const std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), order.size());
  std::vector<TopMatch> out;
  out.reserve(take);
  for (std::size_t i = 0; i < take; ++i) {
    out.push_back({candidates[order[i]], sims[order[i]]});
  }
  return out;
}

}  // namespace

std::pair<std::vector<TopMatch>, std::vector<TopMatch>> retrieve_topk(const Embedding& caption_emb,
                                                                      const CandidateSet& cands,
                                                                      int k) {
  if (k < 1) throw ContractError("retrieve_topk: K must be >= 1");
  return {topk_side(caption_emb, cands.anomaly_candidates, cands.anomaly_embeddings, k),
          topk_side(caption_emb, cands.normal_candidates, cands.normal_embeddings, k)};
}

double candidate_margin(const Embedding& caption_emb, const CandidateSet& cands) {
  if (cands.anomaly_embeddings.empty() || cands.normal_embeddings.empty()) {
    throw ContractError("candidate_margin: both candidate sides must be nonempty");
  }
  auto best = [&](const std::vector<Embedding>& side) {
    double m = -2.0;
    for (const auto& e : side) m = std::max(m, cosine_similarity(caption_emb, e));
    return m;
  };
  return best(cands.anomaly_embeddings) - best(cands.normal_embeddings);
}

// ---------------------------------------------------------------------------

namespace {

const json kCaptionsSchema = {
    {"type", "object"},
    {"required", {"captions"}},
    {"properties",
     {{"captions",
       {{"type", "array"}, {"minItems", 3}, {"maxItems", 3}, {"items", {{"type", "string"}}}}}}}};

const json kCandidatesSchema = {
    {"type", "object"},
    {"required", {"anomaly_candidates", "normal_candidates"}},
    {"properties",
     {{"anomaly_candidates", {{"type", "array"}, {"minItems", 1}, {"items", {{"type", "string"}}}}},
      {"normal_candidates",
       {{"type", "array"}, {"minItems", 1}, {"items", {{"type", "string"}}}}}}}};

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r\n");
  if (begin == std::string::npos) return {};
  const auto end = s.find_last_not_of(" \t\r\n");
  return s.substr(begin, end - begin + 1);
}

std::string lowercase(const std::string& s) {
  std::string out = s;
  std::transform(out.begin(), out.end(), out.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return out;
}

int word_count(const std::string& s) {
  std::istringstream in(s);
  std::string w;
  int n = 0;
  while (in >> w) ++n;
  return n;
}

// Trims, drops non-atomic (> 20 word) entries, dedups case-insensitively
// keeping first occurrence.
std::vector<std::string> sanitize_candidates(const json& arr) {
  std::vector<std::string> out;
  std::vector<std::string> seen;
  for (const auto& item : arr) {
    if (!item.is_string()) continue;
    const std::string text = trim(item.get<std::string>());
    if (text.empty() || word_count(text) > 20) continue;
    const std::string key = lowercase(text);
    if (std::find(seen.begin(), seen.end(), key) != seen.end()) continue;
    seen.push_back(key);
    out.push_back(text);
  }
  return out;
}

}  // namespace

SemanticToolkit::SemanticToolkit(providers::ChatClient& chat, providers::EmbedClient& embed,
                                 const PromptLibrary& prompts, Models models)
    : chat_(chat), embed_(embed), prompts_(prompts), models_(std::move(models)) {}

TemplateEnsemble SemanticToolkit::build_ensemble(const std::string& class_name) const {
  if (class_name.empty()) throw ContractError("build_ensemble: empty class name");
  TemplateEnsemble ens;
  ens.class_name = class_name;
  for (const auto& t : prompts_.normal_templates()) {
    ens.normal_templates.push_back(expand_class(t, class_name));
  }
  for (const auto& t : prompts_.anomaly_templates()) {
    ens.anomaly_templates.push_back(expand_class(t, class_name));
  }
  std::vector<std::string> all = ens.normal_templates;
  all.insert(all.end(), ens.anomaly_templates.begin(), ens.anomaly_templates.end());
  const auto embs = embed_.embed_texts(all, models_.embed);
  ens.normal_embeddings.assign(embs.begin(), embs.begin() + ens.normal_templates.size());
  ens.anomaly_embeddings.assign(embs.begin() + ens.normal_templates.size(), embs.end());
  return ens;
}

CaptionSet SemanticToolkit::generate_captions(const providers::ImagePayload& image,
                                              const std::string& class_name,
                                              providers::TokenUsage* usage) const {
  if (class_name.empty()) throw ContractError("generate_captions: empty class name");
  if (image.bytes.empty()) throw InputError("generate_captions: empty image payload");

  ChatRequest req;
  req.model_id = models_.primary;
  req.response_schema = providers::ResponseSchema{"captions", kCaptionsSchema};
  req.add_system(expand_class(prompts_.prompt(PromptRole::description), class_name));
  req.messages.push_back(
      {"user",
       {MessagePart::make_text("Class: " + class_name), MessagePart::make_image(image)}});

  const auto res = providers::complete_structured(chat_, std::move(req), [](const json& j) {
    for (const auto& c : j.at("captions")) {
      if (trim(c.get<std::string>()).empty()) throw SchemaError("empty caption");
    }
  });
  if (usage) *usage += res.usage;

  CaptionSet caps;
  for (const auto& c : res.parsed->at("captions")) caps.captions.push_back(trim(c.get<std::string>()));
  caps.embeddings = embed_.embed_texts(caps.captions, models_.embed);
  caps.check();
  return caps;
}

GeneralReport SemanticToolkit::build_general_report(const CaptionSet& caps,
                                                    const TemplateEnsemble& ens,
                                                    const std::string& class_name,
                                                    providers::TokenUsage* usage) const {
  caps.check();
  GeneralReport report;
  for (const auto& emb : caps.embeddings) {
    CaptionTemplateStats s;
    double sum_a = 0.0;
    s.max_anomaly = -2.0;
    for (const auto& t : ens.anomaly_embeddings) {
      const double sim = cosine_similarity(emb, t);
      s.max_anomaly = std::max(s.max_anomaly, sim);
      sum_a += sim;
    }
    s.mean_anomaly = sum_a / static_cast<double>(ens.anomaly_embeddings.size());
    double sum_n = 0.0;
    s.max_normal = -2.0;
    for (const auto& t : ens.normal_embeddings) {
      const double sim = cosine_similarity(emb, t);
      s.max_normal = std::max(s.max_normal, sim);
      sum_n += sim;
    }
    s.mean_normal = sum_n / static_cast<double>(ens.normal_embeddings.size());
    report.per_caption.push_back(s);
  }

  // Narrative is best-effort: numbers stand on their own if the auxiliary
  // model is unavailable.
  try {
    ChatRequest req;
    req.model_id = models_.aux;
    req.add_system(expand_class(prompts_.prompt(PromptRole::gr_narrative), class_name));
    std::ostringstream table;
    table << "Class: " << class_name << "\nCaptions:\n";
    for (std::size_t j = 0; j < caps.captions.size(); ++j) {
      table << j << " (" << kCaptionPerspectives[j] << "): " << caps.captions[j] << "\n";
    }
    table << report.to_text();
    req.add_user_text(table.str());
    const auto res = chat_.complete(req);
    if (usage) *usage += res.usage;
    report.narrative = trim(res.text);
  } catch (const Error&) {
    report.narrative.clear();
  }
  return report;
}

CandidateSet SemanticToolkit::generate_candidates(const std::string& class_name,
                                                  providers::TokenUsage* usage) {
  if (class_name.empty()) throw ContractError("generate_candidates: empty class name");
  {
    std::lock_guard<std::mutex> lock(candidates_mutex_);
    auto it = candidates_by_class_.find(class_name);
    if (it != candidates_by_class_.end()) return it->second;
  }

  ChatRequest req;
  req.model_id = models_.aux;
  req.response_schema = providers::ResponseSchema{"candidates", kCandidatesSchema};
  req.add_system(expand_class(prompts_.prompt(PromptRole::candidate_generation), class_name));
  req.add_user_text("Class: " + class_name);
  const auto res = providers::complete_structured(chat_, std::move(req));
  if (usage) *usage += res.usage;

  CandidateSet cands;
  cands.class_name = class_name;
  cands.anomaly_candidates = sanitize_candidates(res.parsed->at("anomaly_candidates"));
  cands.normal_candidates = sanitize_candidates(res.parsed->at("normal_candidates"));
  if (cands.anomaly_candidates.size() < 5 || cands.normal_candidates.size() < 5) {
    throw StageError("generate_candidates: fewer than 5 usable candidates per side for class '" +
                     class_name + "'");
  }

  std::vector<std::string> all = cands.anomaly_candidates;
  all.insert(all.end(), cands.normal_candidates.begin(), cands.normal_candidates.end());
  const auto embs = embed_.embed_texts(all, models_.embed);
  cands.anomaly_embeddings.assign(embs.begin(), embs.begin() + cands.anomaly_candidates.size());
  cands.normal_embeddings.assign(embs.begin() + cands.anomaly_candidates.size(), embs.end());

  std::lock_guard<std::mutex> lock(candidates_mutex_);
  return candidates_by_class_.emplace(class_name, std::move(cands)).first->second;
}

CounterfactualReport SemanticToolkit::compose_counterfactual_report(
    const CaptionSet& caps, const std::array<double, kCaptionCount>& soft_scores,
    const std::array<std::pair<std::vector<TopMatch>, std::vector<TopMatch>>, kCaptionCount>& topk,
    const std::array<double, kCaptionCount>& margins, bool calibrated,
    const std::string& class_name, providers::TokenUsage* usage) const {
  caps.check();
  CounterfactualReport report;
  report.calibrated = calibrated;
  double sum = 0.0;
  for (int j = 0; j < kCaptionCount; ++j) {
    CaptionCounterfactual c;
    c.soft_score = soft_scores[j];
    c.margin = margins[j];
    c.topk_anomaly = topk[j].first;
    c.topk_normal = topk[j].second;
    report.per_caption.push_back(std::move(c));
    sum += margins[j];
  }
  report.mean_margin = sum / kCaptionCount;

  try {
    ChatRequest req;
    req.model_id = models_.aux;
    req.add_system(expand_class(prompts_.prompt(PromptRole::cr_narrative), class_name));
    std::ostringstream table;
    table << "Class: " << class_name << "\nCaptions:\n";
    for (std::size_t j = 0; j < caps.captions.size(); ++j) {
      table << j << " (" << kCaptionPerspectives[j] << "): " << caps.captions[j] << "\n";
    }
    table << report.to_text();
    req.add_user_text(table.str());
    const auto res = chat_.complete(req);
    if (usage) *usage += res.usage;
    report.narrative = trim(res.text);
  } catch (const Error&) {
    report.narrative.clear();
  }
  return report;
}

}  // namespace adagent::semantic
