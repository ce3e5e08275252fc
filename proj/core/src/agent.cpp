#include "adagent/agent.hpp"

#include <algorithm>
#include <sstream>

#include "adagent/digest.hpp"
#include "adagent/format.hpp"
#include "adagent/image.hpp"

namespace adagent::agent {

using nlohmann::json;
using providers::ChatRequest;
using providers::MessagePart;

namespace {

const json kPlanSchema = {
    {"type", "object"},
    {"required", {"potential_anomalies", "heuristic_prompt", "tools_to_use"}},
    {"properties",
     {{"potential_anomalies", {{"type", "array"}, {"items", {{"type", "string"}}}}},
      {"heuristic_prompt", {{"type", "string"}}},
      {"tools_to_use",
       {{"type", "array"},
        {"maxItems", 2},
        {"items", {{"type", "object"}, {"required", {"tool"}}}}}}}}};

const json kJudgmentSchema = {
    {"type", "object"},
    {"required", {"verdict", "reason", "cited_evidence"}},
    {"properties",
     {{"verdict", {{"type", "string"}, {"enum", {"normal", "anomalous", "uncertain"}}}},
      {"reason", {{"type", "string"}}},
      {"cited_evidence", {{"type", "array"}, {"items", {{"type", "string"}}}}}}}};

const json kReflectionSchema = {
    {"type", "object"},
    {"required",
     {"missing_evidence", "ambiguous_evidence", "refined_heuristic_prompt", "tools_to_use"}},
    {"properties",
     {{"missing_evidence", {{"type", "array"}, {"items", {{"type", "string"}}}}},
      {"ambiguous_evidence", {{"type", "array"}, {"items", {{"type", "string"}}}}},
      {"refined_heuristic_prompt", {{"type", "string"}}},
      {"tools_to_use",
       {{"type", "array"},
        {"maxItems", 2},
        {"items", {{"type", "object"}, {"required", {"tool"}}}}}}}}};

// Evidence identifiers must resolve within the episode: report field paths,
// plan fields, tool outputs, or the attached images.
void check_cited_evidence(const json& cited) {
  static const char* kPrefixes[] = {"gr", "cr", "mem", "plan", "note", "tool:", "image"};
  for (const auto& item : cited) {
    const std::string id = item.get<std::string>();
    bool ok = false;
    for (const char* prefix : kPrefixes) ok = ok || id.rfind(prefix, 0) == 0;
    if (!ok) {
      throw SchemaError("cited_evidence '" + id +
                        "' does not resolve; use gr./cr./mem./plan. field paths, tool:<name>, "
                        "or image");
    }
  }
}

// Tool entries parse leniently: a bad entry becomes a dispatch failure the
// loop reports to the Reflector instead of aborting the episode.
std::vector<vision::ToolInvocation> parse_tools(const json& arr,
                                                std::vector<std::string>* rejected) {
  std::vector<vision::ToolInvocation> out;
  for (const auto& entry : arr) {
    try {
      out.push_back(vision::ToolInvocation::from_json(entry));
    } catch (const Error& e) {
      if (rejected) rejected->push_back(e.what());
    }
  }
  return out;
}

std::vector<std::string> string_list(const json& arr) {
  std::vector<std::string> out;
  for (const auto& item : arr) out.push_back(item.get<std::string>());
  return out;
}

json tools_json(const std::vector<vision::ToolInvocation>& tools) {
  json arr = json::array();
  for (const auto& t : tools) arr.push_back(t.to_json());
  return arr;
}

std::string attachments_line(const std::vector<providers::ImagePayload>& enhanced,
                             const std::vector<std::string>& labels) {
  std::ostringstream out;
  out << "Attached images: the raw query image";
  if (!enhanced.empty()) {
    out << " followed by " << enhanced.size() << " enhanced observation(s)";
    if (!labels.empty()) {
      out << ":";
      for (std::size_t i = 0; i < labels.size(); ++i) out << (i ? ", " : " ") << labels[i];
    }
  }
  out << ".";
  return out.str();
}

}  // namespace

json InspectionPlan::to_json() const {
  return {{"potential_anomalies", potential_anomalies},
          {"heuristic_prompt", heuristic_prompt},
          {"tools_to_use", tools_json(tools_to_use)}};
}

std::string InspectionPlan::to_text() const {
  std::ostringstream out;
  out << "Inspection plan:\npotential anomalies:";
  if (potential_anomalies.empty()) out << " none noted";
  for (const auto& p : potential_anomalies) out << " [" << p << "]";
  out << "\nheuristic: " << heuristic_prompt << "\n";
  if (!tools_to_use.empty()) {
    out << "requested tools:";
    for (const auto& t : tools_to_use) out << " " << vision::to_string(t.tool);
    out << "\n";
  }
  return out.str();
}

json Judgment::to_json() const {
  return {{"verdict", adagent::to_string(verdict)},
          {"reason", reason},
          {"cited_evidence", cited_evidence}};
}

json Reflection::to_json() const {
  return {{"missing_evidence", missing_evidence},
          {"ambiguous_evidence", ambiguous_evidence},
          {"refined_heuristic_prompt", refined_heuristic_prompt},
          {"tools_to_use", tools_json(tools_to_use)}};
}

json EpisodeTrace::to_json() const {
  json events_json = json::array();
  for (const auto& e : events) {
    events_json.push_back({{"type", e.type}, {"iteration", e.iteration}, {"data", e.data}});
  }
  json usage_json{{"prompt_tokens", usage.prompt_tokens},
                  {"completion_tokens", usage.completion_tokens},
                  {"total_tokens", usage.total_tokens}};
  return {{"image_id", image_id},
          {"class_name", class_name},
          {"dataset", dataset},
          {"label", label},
          {"report_gr", report_gr},
          {"report_cr", report_cr},
          {"report_mem", report_mem},
          {"class_note", class_note ? json(*class_note) : json(nullptr)},
          {"events", events_json},
          {"final_verdict", adagent::to_string(final_verdict)},
          {"iterations", iterations},
          {"fallback_used", fallback_used},
          {"failed", failed},
          {"failure", failure},
          {"mean_margin", mean_margin},
          {"ranking_score", score},
          {"usage", usage_json}};
}

ClassContext build_class_context(semantic::SemanticToolkit& toolkit, const std::string& class_name,
                                 providers::TokenUsage* usage) {
  ClassContext ctx;
  ctx.class_name = class_name;
  ctx.ensemble = toolkit.build_ensemble(class_name);
  ctx.candidates = toolkit.generate_candidates(class_name, usage);
  ctx.prototypes = semantic::compute_prototypes(ctx.candidates);
  return ctx;
}

// ---------------------------------------------------------------------------

AgentPipeline::AgentPipeline(semantic::SemanticToolkit& toolkit, PipelineConfig cfg)
    : toolkit_(toolkit), cfg_(std::move(cfg)) {
  if (cfg_.termination_n < 1) throw ConfigError("termination_n must be >= 1");
  if (cfg_.max_iters < cfg_.termination_n) {
    throw ConfigError("max_iters must be >= termination_n");
  }
}

InspectionPlan AgentPipeline::plan(const providers::ImagePayload& image,
                                   const std::string& class_name,
                                   const semantic::GeneralReport* gr,
                                   const semantic::CounterfactualReport* cr,
                                   const std::optional<std::string>& heuristic,
                                   providers::TokenUsage* usage) const {
  if (gr == nullptr || cr == nullptr) {
    throw ContractError("plan: both evidence reports must be present");
  }
  ChatRequest req;
  req.model_id = cfg_.primary_model;
  req.response_schema = providers::ResponseSchema{"inspection_plan", kPlanSchema};
  req.add_system(semantic::expand_class(toolkit_.prompts().prompt(semantic::PromptRole::planner),
                                        class_name));
  std::ostringstream text;
  text << "Class: " << class_name << "\n\n" << gr->to_text() << "\n" << cr->to_text();
  if (heuristic && !heuristic->empty()) {
    text << "\nRefined heuristic from reflection: " << *heuristic << "\n";
  }
  text << "\nThe raw query image is attached.";
  req.messages.push_back(
      {"user", {MessagePart::make_text(text.str()), MessagePart::make_image(image)}});

  const auto res = providers::complete_structured(toolkit_.chat(), std::move(req));
  if (usage) *usage += res.usage;

  InspectionPlan plan;
  plan.potential_anomalies = string_list(res.parsed->at("potential_anomalies"));
  plan.heuristic_prompt = res.parsed->value("heuristic_prompt", "");
  plan.tools_to_use = parse_tools(res.parsed->at("tools_to_use"), nullptr);
  return plan;
}

Judgment AgentPipeline::reason(const providers::ImagePayload& image,
                               const std::vector<providers::ImagePayload>& enhanced,
                               const std::string& class_name, const InspectionPlan* plan,
                               const semantic::GeneralReport* gr,
                               const semantic::CounterfactualReport* cr,
                               const memory::MemoryReport* mem, const std::string* class_note,
                               providers::TokenUsage* usage) const {
  if (plan == nullptr) throw ContractError("reason: inspection plan must be present");
  if (gr == nullptr || cr == nullptr) {
    throw ContractError("reason: both evidence reports must be present");
  }
  ChatRequest req;
  req.model_id = cfg_.primary_model;
  req.response_schema = providers::ResponseSchema{"judgment", kJudgmentSchema};
  req.add_system(semantic::expand_class(toolkit_.prompts().prompt(semantic::PromptRole::reasoner),
                                        class_name));
  std::ostringstream text;
  text << "Class: " << class_name << "\n\n"
       << plan->to_text() << "\n"
       << gr->to_text() << "\n"
       << cr->to_text();
  if (mem != nullptr) text << "\n" << mem->to_text();
  if (class_note != nullptr && !class_note->empty()) {
    text << "\nClass calibration note (suspicious-looking but normal patterns): " << *class_note
         << "\n";
  }
  std::vector<std::string> labels;
  text << "\n" << attachments_line(enhanced, labels);

  std::vector<MessagePart> parts{MessagePart::make_text(text.str()),
                                 MessagePart::make_image(image)};
  for (const auto& obs : enhanced) parts.push_back(MessagePart::make_image(obs));
  req.messages.push_back({"user", std::move(parts)});

  const auto res = providers::complete_structured(
      toolkit_.chat(), std::move(req), [](const json& j) {
        if (j.at("reason").get<std::string>().empty()) throw SchemaError("reason must be nonempty");
        check_cited_evidence(j.at("cited_evidence"));
      });
  if (usage) *usage += res.usage;

  Judgment judgment;
  judgment.verdict = verdict_from_string(res.parsed->at("verdict").get<std::string>());
  judgment.reason = res.parsed->at("reason").get<std::string>();
  judgment.cited_evidence = string_list(res.parsed->at("cited_evidence"));
  return judgment;
}

Reflection AgentPipeline::reflect(const providers::ImagePayload& image,
                                  const std::vector<providers::ImagePayload>& enhanced,
                                  const std::string& class_name, const InspectionPlan& plan,
                                  const Judgment& judgment, const semantic::GeneralReport* gr,
                                  const semantic::CounterfactualReport* cr, bool confirm_normal,
                                  providers::TokenUsage* usage) const {
  if (gr == nullptr || cr == nullptr) {
    throw ContractError("reflect: both evidence reports must be present");
  }
  if (judgment.verdict == Verdict::anomalous ||
      (judgment.verdict == Verdict::normal && !confirm_normal)) {
    throw ContractError("reflect: only valid on an uncertain judgment or a normal-confirmation "
                        "pass");
  }
  ChatRequest req;
  req.model_id = cfg_.primary_model;
  req.response_schema = providers::ResponseSchema{"reflection", kReflectionSchema};
  req.add_system(semantic::expand_class(toolkit_.prompts().prompt(semantic::PromptRole::reflector),
                                        class_name));
  std::ostringstream text;
  text << "Class: " << class_name << "\n\nPrevious " << plan.to_text() << "\nPrevious judgment: "
       << adagent::to_string(judgment.verdict) << "\nreason: " << judgment.reason << "\n\n"
       << gr->to_text() << "\n"
       << cr->to_text();
  if (confirm_normal) {
    text << "\nThis is a normal-confirmation pass: the previous judgment was \"normal\". "
            "Identify what must be re-examined with fresh emphasis to confirm normality.\n";
  }
  std::vector<std::string> labels;
  text << "\n" << attachments_line(enhanced, labels);

  std::vector<MessagePart> parts{MessagePart::make_text(text.str()),
                                 MessagePart::make_image(image)};
  for (const auto& obs : enhanced) parts.push_back(MessagePart::make_image(obs));
  req.messages.push_back({"user", std::move(parts)});

  const auto res = providers::complete_structured(
      toolkit_.chat(), std::move(req), [](const json& j) {
        if (j.at("missing_evidence").empty() && j.at("ambiguous_evidence").empty()) {
          throw SchemaError("at least one of missing_evidence/ambiguous_evidence must be "
                            "nonempty");
        }
      });
  if (usage) *usage += res.usage;

  Reflection out;
  out.missing_evidence = string_list(res.parsed->at("missing_evidence"));
  out.ambiguous_evidence = string_list(res.parsed->at("ambiguous_evidence"));
  out.refined_heuristic_prompt = res.parsed->value("refined_heuristic_prompt", "");
  out.tools_to_use = parse_tools(res.parsed->at("tools_to_use"), nullptr);
  return out;
}

// ---------------------------------------------------------------------------

AgentPipeline::EpisodeOutcome AgentPipeline::run_episode(const EpisodeInput& input,
                                                         const ClassContext& ctx,
                                                         const MemoryContext* memory_ctx) const {
  EpisodeOutcome outcome;
  EpisodeTrace& trace = outcome.trace;
  trace.image_id = input.image_id;
  trace.class_name = input.class_name;

  try {
    const vision::ImageBuffer raw = vision::decode_image(input.image.bytes);

    // Evidence reports.
    outcome.captions = toolkit_.generate_captions(input.image, input.class_name, &trace.usage);
    outcome.report_gr = toolkit_.build_general_report(outcome.captions, ctx.ensemble,
                                                      input.class_name, &trace.usage);

    std::array<double, semantic::kCaptionCount> soft_scores{};
    std::array<double, semantic::kCaptionCount> margins{};
    std::array<std::pair<std::vector<semantic::TopMatch>, std::vector<semantic::TopMatch>>,
               semantic::kCaptionCount>
        topk;
    for (int j = 0; j < semantic::kCaptionCount; ++j) {
      const Embedding& cap = outcome.captions.embeddings[j];
      soft_scores[j] = semantic::soft_anomaly_score(cap, ctx.prototypes);
      if (memory_ctx != nullptr) {
        topk[j] = memory::retrieve_topk_calibrated(cap, ctx.candidates, memory_ctx->weights,
                                                   cfg_.tau_cand, cfg_.top_k);
        margins[j] =
            memory::calibrated_margin(cap, ctx.candidates, memory_ctx->weights, cfg_.tau_cand);
      } else {
        topk[j] = semantic::retrieve_topk(cap, ctx.candidates, cfg_.top_k);
        margins[j] = semantic::candidate_margin(cap, ctx.candidates);
      }
    }
    outcome.report_cr = toolkit_.compose_counterfactual_report(
        outcome.captions, soft_scores, topk, margins, memory_ctx != nullptr, input.class_name,
        &trace.usage);
    trace.report_gr = outcome.report_gr.to_json();
    trace.report_cr = outcome.report_cr.to_json();
    trace.mean_margin = outcome.report_cr.mean_margin;

    std::optional<memory::MemoryReport> mem_report;
    const std::string* note = nullptr;
    if (memory_ctx != nullptr) {
      const Embedding phi =
          toolkit_.embedder().embed_image(input.image, cfg_.image_embed_model);
      const auto retrieved = memory::retrieve_memories(phi, memory_ctx->bank, cfg_.gamma);
      mem_report = memory::compose_memory_report(retrieved, memory_ctx->bank);
      trace.report_mem = mem_report->to_json();
      if (memory_ctx->bank.note_enabled && memory_ctx->bank.class_note) {
        note = &*memory_ctx->bank.class_note;
        trace.class_note = *note;
      }
    }

    // Plan / tools / reason / reflect loop.
    std::optional<std::string> heuristic;
    std::vector<vision::ToolInvocation> pending_tools;  // carried from reflection
    int consecutive_normal = 0;
    std::optional<Verdict> final_verdict;

    for (int iter = 1; iter <= cfg_.max_iters; ++iter) {
      trace.iterations = iter;
      InspectionPlan plan_out =
          plan(input.image, input.class_name, &outcome.report_gr, &outcome.report_cr, heuristic,
               &trace.usage);
      trace.events.push_back({"plan", iter, plan_out.to_json()});

      // This turn's tool requests: reflection carry-over first, then the
      // fresh plan, capped at two attachments per reasoning turn.
      std::vector<vision::ToolInvocation> turn_tools = pending_tools;
      pending_tools.clear();
      for (const auto& t : plan_out.tools_to_use) turn_tools.push_back(t);
      if (turn_tools.size() > 2) turn_tools.resize(2);

      std::vector<providers::ImagePayload> enhanced;
      std::vector<std::string> tool_failures;
      vision::ImageBuffer current = raw;
      for (const auto& inv : turn_tools) {
        try {
          if (inv.tool == vision::Tool::super_resolution && !cfg_.sr_endpoint.empty()) {
            current = vision::super_resolve_remote(current, cfg_.sr_endpoint);
          } else {
            current = vision::apply_tool(current, inv);
          }
          providers::ImagePayload obs;
          obs.bytes = vision::encode_png(current);
          obs.media_type = "image/png";
          trace.events.push_back({"tool", iter,
                                  {{"invocation", inv.to_json()},
                                   {"output_digest", sha256_hex(obs.bytes)}}});
          enhanced.push_back(std::move(obs));
        } catch (const Error& e) {
          tool_failures.push_back(e.what());
          trace.events.push_back(
              {"tool_error", iter, {{"invocation", inv.to_json()}, {"error", e.what()}}});
        }
      }

      Judgment judgment = reason(input.image, enhanced, input.class_name, &plan_out,
                                 &outcome.report_gr, &outcome.report_cr,
                                 mem_report ? &*mem_report : nullptr, note, &trace.usage);
      trace.events.push_back({"judgment", iter, judgment.to_json()});

      if (judgment.verdict == Verdict::anomalous) {
        final_verdict = Verdict::anomalous;
        break;
      }
      if (judgment.verdict == Verdict::normal) {
        ++consecutive_normal;
        if (consecutive_normal >= cfg_.termination_n) {
          final_verdict = Verdict::normal;
          break;
        }
      } else {
        consecutive_normal = 0;
      }

      if (iter == cfg_.max_iters) break;

      Reflection reflection =
          reflect(input.image, enhanced, input.class_name, plan_out, judgment,
                  &outcome.report_gr, &outcome.report_cr,
                  /*confirm_normal=*/judgment.verdict == Verdict::normal, &trace.usage);
      if (!tool_failures.empty()) {
        for (const auto& f : tool_failures) {
          reflection.missing_evidence.push_back("tool dispatch failed: " + f);
        }
      }
      trace.events.push_back({"reflection", iter, reflection.to_json()});
      heuristic = reflection.refined_heuristic_prompt;
      pending_tools = reflection.tools_to_use;
    }

    if (!final_verdict) {
      // Iteration cap: fall back to the sign of the mean margin.
      final_verdict = trace.mean_margin > 0.0 ? Verdict::anomalous : Verdict::normal;
      trace.fallback_used = true;
      trace.events.push_back(
          {"fallback", trace.iterations, {{"mean_margin", trace.mean_margin}}});
    }
    trace.final_verdict = *final_verdict;
    trace.score = ranking_score(trace.final_verdict, trace.mean_margin);
  } catch (const std::exception& e) {
    trace.failed = true;
    trace.failure = e.what();
  }
  return outcome;
}

}  // namespace adagent::agent
