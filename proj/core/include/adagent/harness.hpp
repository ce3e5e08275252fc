#pragma once

#include <filesystem>
#include <memory>
#include <string>
#include <vector>

#include "adagent/config.hpp"
#include "adagent/dataset.hpp"
#include "adagent/metrics.hpp"
#include "adagent/prompts.hpp"
#include "adagent/provider_cache.hpp"
#include "adagent/providers.hpp"

namespace adagent::eval {

struct ProviderBundle {
  std::shared_ptr<providers::ChatClient> chat;
  std::shared_ptr<providers::EmbedClient> embed;
};

// Standard wiring: an HTTP transport (denying in replay-strict, so a cache
// miss can never reach the network) behind the on-disk record/replay cache.
ProviderBundle make_provider_bundle(const RunConfig& cfg, providers::CacheMode mode);

struct RunOptions {
  std::filesystem::path out_dir;
  int shots = 0;  // 0 | 1 | 2 | 4
  std::vector<std::string> class_filter;  // empty: all classes
};

// Full benchmark: per-class artifacts, optional memory banks, episodes over
// a worker pool, trace persistence, metric aggregation, report emission.
// Resumable: images with an existing parseable trace are skipped.
MetricsSummary run_benchmark(const DatasetManifest& manifest, const RunConfig& cfg,
                             const RunOptions& options, const ProviderBundle& bundle,
                             const semantic::PromptLibrary& prompts);

// Builds and persists memory banks only; returns the bank file paths.
std::vector<std::filesystem::path> build_memory_banks(const DatasetManifest& manifest,
                                                      const RunConfig& cfg,
                                                      const RunOptions& options,
                                                      const ProviderBundle& bundle,
                                                      const semantic::PromptLibrary& prompts);

// Recomputes the summary from persisted traces under <root>/<dataset>/<class>/.
MetricsSummary metrics_from_traces(const std::filesystem::path& traces_root);

// metrics.json + metrics.csv + metrics_per_class.csv, byte-deterministic.
void emit_report(const MetricsSummary& summary, const std::filesystem::path& out_dir);

}  // namespace adagent::eval
