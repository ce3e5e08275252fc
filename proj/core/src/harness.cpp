#include "adagent/harness.hpp"

#include <algorithm>
#include <atomic>
#include <fstream>
#include <iostream>
#include <thread>

#include "adagent/agent.hpp"
#include "adagent/digest.hpp"
#include "adagent/format.hpp"
#include "adagent/memory_builder.hpp"

namespace adagent::eval {

namespace fs = std::filesystem;
using nlohmann::json;

ProviderBundle make_provider_bundle(const RunConfig& cfg, providers::CacheMode mode) {
  providers::RetryPolicy retry;
  retry.attempts = cfg.retry_attempts;
  retry.base_delay = std::chrono::milliseconds(cfg.retry_base_ms);

  auto transport = mode == providers::CacheMode::replay_strict
                       ? providers::make_denying_transport()
                       : providers::make_httplib_transport();
  auto chat = std::make_shared<providers::HttpChatClient>(
      transport, providers::EndpointConfig{cfg.chat_base_url, cfg.api_key_env}, retry);
  auto embed = std::make_shared<providers::HttpEmbedClient>(
      transport, providers::EndpointConfig{cfg.effective_embed_base_url(), cfg.api_key_env},
      retry);

  ProviderBundle bundle;
  if (mode == providers::CacheMode::passthrough) {
    bundle.chat = chat;
    bundle.embed = embed;
  } else {
    auto cache = std::make_shared<providers::ProviderCache>(cfg.cache_dir);
    bundle.chat = std::make_shared<providers::CachedChatClient>(chat, cache, mode);
    bundle.embed = std::make_shared<providers::CachedEmbedClient>(embed, cache, mode);
  }
  return bundle;
}

namespace {

providers::ImagePayload read_image_payload(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read image " + path.string());
  providers::ImagePayload payload;
  payload.bytes.assign((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::string ext = path.extension().string();
  std::transform(ext.begin(), ext.end(), ext.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  payload.media_type = (ext == ".jpg" || ext == ".jpeg") ? "image/jpeg" : "image/png";
  return payload;
}

void write_text_atomic(const fs::path& path, const std::string& content) {
  std::error_code ec;
  fs::create_directories(path.parent_path(), ec);
  const fs::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    out << content;
  }
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot commit " + path.string());
}

// Provenance digest over everything that shapes a memory bank: pipeline
// knobs plus the exact reference images. A mismatch forces a rebuild.
std::string bank_provenance_digest(const RunConfig& cfg, int shots,
                                   const std::vector<providers::ImagePayload>& refs) {
  json refs_digests = json::array();
  for (const auto& r : refs) refs_digests.push_back(sha256_hex(r.bytes));
  return canonical_digest(json{{"primary_model", cfg.primary_model},
                               {"aux_model", cfg.aux_model},
                               {"embed_model", cfg.embed_model},
                               {"image_embed_model", cfg.image_embed_model},
                               {"top_k", cfg.top_k},
                               {"termination_n", cfg.termination_n},
                               {"max_iters", cfg.max_iters},
                               {"gamma", cfg.gamma},
                               {"tau_cand", cfg.tau_cand},
                               {"shots", shots},
                               {"references", refs_digests}});
}

agent::PipelineConfig pipeline_config(const RunConfig& cfg) {
  agent::PipelineConfig pcfg;
  pcfg.primary_model = cfg.primary_model;
  pcfg.image_embed_model = cfg.image_embed_model;
  pcfg.top_k = cfg.top_k;
  pcfg.termination_n = cfg.termination_n;
  pcfg.max_iters = cfg.max_iters;
  pcfg.gamma = cfg.gamma;
  pcfg.tau_cand = cfg.tau_cand;
  pcfg.sr_endpoint = cfg.sr_endpoint;
  return pcfg;
}

void write_failed_trace(const fs::path& path, const std::string& image_id,
                        const std::string& class_name, const std::string& dataset, int label,
                        const std::string& failure) {
  agent::EpisodeTrace trace;
  trace.image_id = image_id;
  trace.class_name = class_name;
  trace.dataset = dataset;
  trace.label = label;
  trace.failed = true;
  trace.failure = failure;
  write_text_atomic(path, trace.to_json().dump(2) + "\n");
}

struct ClassRun {
  std::string class_name;
  std::vector<const DatasetItem*> items;
};

// Builds (or reloads) the per-class memory bank, persisting it with
// provenance so later runs skip recalibration.
std::optional<agent::MemoryContext> prepare_memory(
    const DatasetManifest& manifest, const RunConfig& cfg, const RunOptions& options,
    const std::string& class_name, agent::AgentPipeline& pipeline,
    semantic::SemanticToolkit& toolkit, const agent::ClassContext& ctx) {
  if (options.shots == 0) return std::nullopt;

  const auto shot_paths = manifest.shots(class_name, options.shots);
  std::vector<agent::EpisodeInput> refs;
  std::vector<providers::ImagePayload> payloads;
  for (const auto& p : shot_paths) {
    agent::EpisodeInput input;
    input.class_name = class_name;
    input.image_id = std::string("ref_") + p.stem().string();
    input.image = read_image_payload(p);
    payloads.push_back(input.image);
    refs.push_back(std::move(input));
  }
  const std::string provenance = bank_provenance_digest(cfg, options.shots, payloads);
  const fs::path bank_path = options.out_dir / "memory" / manifest.name / (class_name + ".json");

  if (fs::exists(bank_path)) {
    std::ifstream in(bank_path);
    json j = json::parse(in, nullptr, false);
    if (!j.is_discarded() && j.value("provenance", json::object()).value("digest", "") ==
                                 provenance) {
      auto [bank, weights] = memory::bank_from_json(j);
      agent::MemoryContext mem;
      mem.bank = std::move(bank);
      mem.weights = std::move(weights);
      return mem;
    }
  }

  memory::MemoryBuilder builder(pipeline, toolkit);
  auto result = builder.build_memory_bank(refs, ctx);
  const json bank_json = memory::bank_to_json(
      result.bank, result.weights,
      json{{"digest", provenance},
           {"references_attempted", result.references_attempted},
           {"references_usable", result.references_usable},
           {"misjudged", result.misjudged}});
  write_text_atomic(bank_path, bank_json.dump(2) + "\n");

  agent::MemoryContext mem;
  mem.bank = std::move(result.bank);
  mem.weights = std::move(result.weights);
  return mem;
}

}  // namespace

MetricsSummary run_benchmark(const DatasetManifest& manifest, const RunConfig& cfg,
                             const RunOptions& options, const ProviderBundle& bundle,
                             const semantic::PromptLibrary& prompts) {
  if (options.shots != 0 && options.shots != 1 && options.shots != 2 && options.shots != 4) {
    throw ConfigError("shots must be 0, 1, 2 or 4 (got " + std::to_string(options.shots) + ")");
  }
  semantic::SemanticToolkit toolkit(*bundle.chat, *bundle.embed, prompts,
                                    {cfg.primary_model, cfg.aux_model, cfg.embed_model});
  agent::AgentPipeline pipeline(toolkit, pipeline_config(cfg));

  std::vector<ClassRun> classes;
  for (const auto& class_name : manifest.classes()) {
    if (!options.class_filter.empty() &&
        std::find(options.class_filter.begin(), options.class_filter.end(), class_name) ==
            options.class_filter.end()) {
      continue;
    }
    ClassRun run;
    run.class_name = class_name;
    for (const auto& item : manifest.test_items) {
      if (item.class_name == class_name) run.items.push_back(&item);
    }
    classes.push_back(std::move(run));
  }
  if (classes.empty()) throw ConfigError("no classes selected");

  const fs::path traces_root = options.out_dir / "traces" / manifest.name;

  // Persist the seeded shot selection for provenance.
  if (options.shots > 0) {
    json shots_json;
    shots_json["dataset"] = manifest.name;
    shots_json["seed"] = manifest.seed;
    shots_json["shots"] = options.shots;
    json per_class = json::object();
    for (const auto& run : classes) {
      json list = json::array();
      for (const auto& p : manifest.shots(run.class_name, options.shots)) {
        list.push_back(p.string());
      }
      per_class[run.class_name] = list;
    }
    shots_json["selection"] = per_class;
    write_text_atomic(options.out_dir / "shots.json", shots_json.dump(2) + "\n");
  }

  for (const auto& run : classes) {
    agent::ClassContext ctx;
    std::optional<agent::MemoryContext> memory_ctx;
    try {
      ctx = agent::build_class_context(toolkit, run.class_name);
      write_text_atomic(options.out_dir / "candidates" / manifest.name /
                            (run.class_name + ".json"),
                        ctx.candidates.to_json().dump(2) + "\n");
      memory_ctx = prepare_memory(manifest, cfg, options, run.class_name, pipeline, toolkit, ctx);
    } catch (const std::exception& e) {
      std::cerr << "class '" << run.class_name << "' setup failed: " << e.what() << "\n";
      for (const auto* item : run.items) {
        const fs::path trace_path = traces_root / run.class_name / (item->image_id + ".json");
        if (!fs::exists(trace_path)) {
          write_failed_trace(trace_path, item->image_id, run.class_name, manifest.name,
                             item->label.value, std::string("class setup failed: ") + e.what());
        }
      }
      continue;
    }

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
      for (;;) {
        const std::size_t i = next.fetch_add(1);
        if (i >= run.items.size()) break;
        const DatasetItem& item = *run.items[i];
        const fs::path trace_path = traces_root / run.class_name / (item.image_id + ".json");
        if (fs::exists(trace_path)) {
          std::ifstream in(trace_path);
          if (!json::parse(in, nullptr, false).is_discarded()) continue;  // resume
        }
        try {
          agent::EpisodeInput input;
          input.image_id = item.image_id;
          input.class_name = item.class_name;
          input.image = read_image_payload(item.path);
          auto outcome =
              pipeline.run_episode(input, ctx, memory_ctx ? &*memory_ctx : nullptr);
          outcome.trace.dataset = manifest.name;
          outcome.trace.label = item.label.value;
          write_text_atomic(trace_path, outcome.trace.to_json().dump(2) + "\n");
        } catch (const std::exception& e) {
          write_failed_trace(trace_path, item.image_id, item.class_name, manifest.name,
                             item.label.value, e.what());
        }
      }
    };
    std::vector<std::thread> pool;
    const int n_workers = std::max(1, std::min<int>(cfg.workers,
                                                    static_cast<int>(run.items.size())));
    for (int w = 1; w < n_workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();
  }

  MetricsSummary summary = metrics_from_traces(options.out_dir / "traces");
  summary.shots = options.shots;
  emit_report(summary, options.out_dir);
  return summary;
}

std::vector<fs::path> build_memory_banks(const DatasetManifest& manifest, const RunConfig& cfg,
                                         const RunOptions& options, const ProviderBundle& bundle,
                                         const semantic::PromptLibrary& prompts) {
  if (options.shots != 1 && options.shots != 2 && options.shots != 4) {
    throw ConfigError("calibrate requires shots in {1, 2, 4}");
  }
  semantic::SemanticToolkit toolkit(*bundle.chat, *bundle.embed, prompts,
                                    {cfg.primary_model, cfg.aux_model, cfg.embed_model});
  agent::AgentPipeline pipeline(toolkit, pipeline_config(cfg));

  std::vector<fs::path> banks;
  for (const auto& class_name : manifest.classes()) {
    if (!options.class_filter.empty() &&
        std::find(options.class_filter.begin(), options.class_filter.end(), class_name) ==
            options.class_filter.end()) {
      continue;
    }
    auto ctx = agent::build_class_context(toolkit, class_name);
    prepare_memory(manifest, cfg, options, class_name, pipeline, toolkit, ctx);
    banks.push_back(options.out_dir / "memory" / manifest.name / (class_name + ".json"));
  }
  return banks;
}

MetricsSummary metrics_from_traces(const fs::path& traces_root) {
  MetricsSummary summary;
  if (!fs::exists(traces_root)) throw IoError("traces directory not found: " + traces_root.string());

  for (const auto& dataset_entry : fs::directory_iterator(traces_root)) {
    if (!dataset_entry.is_directory()) continue;
    const std::string dataset = dataset_entry.path().filename().string();
    DatasetMetrics& dm = summary.datasets[dataset];

    std::map<std::string, std::vector<ScoredRecord>> per_class_records;
    std::vector<fs::path> files;
    for (const auto& class_entry : fs::directory_iterator(dataset_entry.path())) {
      if (!class_entry.is_directory()) continue;
      for (const auto& f : fs::directory_iterator(class_entry.path())) {
        if (f.path().extension() == ".json") files.push_back(f.path());
      }
    }
    std::sort(files.begin(), files.end());

    for (const auto& file : files) {
      std::ifstream in(file);
      json j = json::parse(in, nullptr, false);
      if (j.is_discarded()) {
        std::cerr << "warning: skipping unparseable trace " << file << "\n";
        continue;
      }
      const std::string class_name = j.value("class_name", "");
      ClassMetrics& cm = dm.per_class[class_name];
      dm.prompt_tokens += j.value("usage", json::object()).value("prompt_tokens", 0L);
      dm.completion_tokens += j.value("usage", json::object()).value("completion_tokens", 0L);
      if (j.value("failed", false)) {
        ++dm.failures;
        ++cm.failures;
        continue;
      }
      if (j.value("fallback_used", false)) {
        ++dm.fallbacks;
        ++cm.fallbacks;
      }
      const int label = j.value("label", -1);
      if (label != 0 && label != 1) {
        std::cerr << "warning: trace without ground-truth label, excluded: " << file << "\n";
        continue;
      }
      ScoredRecord rec;
      rec.image_id = j.value("image_id", "");
      rec.label = BinaryLabel(label);
      rec.verdict = verdict_from_string(j.value("final_verdict", "normal"));
      rec.ranking_score = j.value("ranking_score", 0.0);
      per_class_records[class_name].push_back(rec);
    }

    std::vector<ScoredRecord> all;
    for (auto& [class_name, records] : per_class_records) {
      ClassMetrics& cm = dm.per_class[class_name];
      cm.records = static_cast<int>(records.size());
      try {
        cm.auroc = auroc(records);
      } catch (const MetricError&) {
      }
      try {
        cm.f1_max = f1_max(records);
      } catch (const MetricError&) {
      }
      all.insert(all.end(), records.begin(), records.end());
    }
    dm.records = static_cast<int>(all.size());
    try {
      dm.auroc = auroc(all);
    } catch (const MetricError&) {
    }
    try {
      dm.f1_max = f1_max(all);
    } catch (const MetricError&) {
    }
  }
  return summary;
}

namespace {

json metric_or_null(const std::optional<double>& m) { return m ? json(*m) : json(nullptr); }

std::string csv_metric(const std::optional<double>& m) {
  return m ? format_fixed(*m, 6) : std::string();
}

}  // namespace

void emit_report(const MetricsSummary& summary, const fs::path& out_dir) {
  json j;
  j["shots"] = summary.shots;
  json datasets = json::object();
  for (const auto& [name, dm] : summary.datasets) {
    json classes = json::object();
    for (const auto& [class_name, cm] : dm.per_class) {
      classes[class_name] = {{"auroc", metric_or_null(cm.auroc)},
                             {"f1_max", metric_or_null(cm.f1_max)},
                             {"records", cm.records},
                             {"failures", cm.failures},
                             {"fallbacks", cm.fallbacks}};
    }
    datasets[name] = {{"auroc", metric_or_null(dm.auroc)},
                      {"f1_max", metric_or_null(dm.f1_max)},
                      {"records", dm.records},
                      {"failures", dm.failures},
                      {"fallbacks", dm.fallbacks},
                      {"usage",
                       {{"prompt_tokens", dm.prompt_tokens},
                        {"completion_tokens", dm.completion_tokens}}},
                      {"classes", classes}};
  }
  j["datasets"] = datasets;
  write_text_atomic(out_dir / "metrics.json", j.dump(2) + "\n");

  std::string csv = "dataset,auroc,f1_max,records,failures,fallbacks\n";
  for (const auto& [name, dm] : summary.datasets) {
    csv += name + "," + csv_metric(dm.auroc) + "," + csv_metric(dm.f1_max) + "," +
           std::to_string(dm.records) + "," + std::to_string(dm.failures) + "," +
           std::to_string(dm.fallbacks) + "\n";
  }
  write_text_atomic(out_dir / "metrics.csv", csv);

  std::string per_class = "dataset,class,auroc,f1_max,records,failures,fallbacks\n";
  for (const auto& [name, dm] : summary.datasets) {
    for (const auto& [class_name, cm] : dm.per_class) {
      per_class += name + "," + class_name + "," + csv_metric(cm.auroc) + "," +
                   csv_metric(cm.f1_max) + "," + std::to_string(cm.records) + "," +
                   std::to_string(cm.failures) + "," + std::to_string(cm.fallbacks) + "\n";
    }
  }
  write_text_atomic(out_dir / "metrics_per_class.csv", per_class);
}

}  // namespace adagent::eval
