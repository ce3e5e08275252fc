#include <benchmark/benchmark.h>

#include <random>

#include "adagent/digest.hpp"
#include "adagent/metrics.hpp"

using namespace adagent;

namespace {

std::vector<ScoredRecord> make_records(int n) {
  std::mt19937 rng(11);
  std::uniform_real_distribution<double> score(0.0, 2.0);
  std::vector<ScoredRecord> out(n);
  for (int i = 0; i < n; ++i) {
    out[i].image_id = "img" + std::to_string(i);
    out[i].label = BinaryLabel(static_cast<int>(rng() % 2));
    out[i].ranking_score = score(rng);
  }
  out[0].label = BinaryLabel(1);
  out[1].label = BinaryLabel(0);
  return out;
}

}  // namespace

static void BM_Auroc(benchmark::State& state) {
  const auto records = make_records(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::auroc(records));
  }
}
BENCHMARK(BM_Auroc)->Arg(100)->Arg(1000)->Arg(10000);

static void BM_F1Max(benchmark::State& state) {
  const auto records = make_records(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(eval::f1_max(records));
  }
}
BENCHMARK(BM_F1Max)->Arg(100)->Arg(1000)->Arg(10000);

static void BM_CanonicalDigest(benchmark::State& state) {
  nlohmann::json payload;
  for (int i = 0; i < static_cast<int>(state.range(0)); ++i) {
    payload["key_" + std::to_string(i)] = std::string(64, 'x');
  }
  for (auto _ : state) {
    benchmark::DoNotOptimize(canonical_digest(payload));
  }
}
BENCHMARK(BM_CanonicalDigest)->Arg(8)->Arg(64)->Arg(512);
