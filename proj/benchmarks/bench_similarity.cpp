#include <benchmark/benchmark.h>

#include <random>

#include "adagent/semantic.hpp"

using namespace adagent;

namespace {

semantic::CandidateSet make_candidates(int dim, int per_side) {
  std::mt19937 rng(42);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  semantic::CandidateSet cands;
  cands.class_name = "bench";
  for (int i = 0; i < per_side; ++i) {
    std::vector<double> a(dim), n(dim);
    for (int d = 0; d < dim; ++d) {
      a[d] = dist(rng);
      n[d] = dist(rng);
    }
    a[0] += 2.0;
    n[0] += 2.0;
    cands.anomaly_candidates.push_back("a" + std::to_string(i));
    cands.normal_candidates.push_back("n" + std::to_string(i));
    cands.anomaly_embeddings.emplace_back(a);
    cands.normal_embeddings.emplace_back(n);
  }
  return cands;
}

Embedding make_query(int dim) {
  std::mt19937 rng(7);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  std::vector<double> q(dim);
  for (auto& x : q) x = dist(rng);
  q[0] += 2.0;
  return Embedding(q);
}

}  // namespace

static void BM_CosineSimilarity(benchmark::State& state) {
  const int dim = static_cast<int>(state.range(0));
  const auto a = make_query(dim);
  auto b = make_query(dim);
  b.values[1] += 0.25;
  for (auto _ : state) {
    benchmark::DoNotOptimize(cosine_similarity(a, b));
  }
}
BENCHMARK(BM_CosineSimilarity)->Arg(32)->Arg(256)->Arg(1024)->Arg(4096);

static void BM_RetrieveTopK(benchmark::State& state) {
  const auto cands = make_candidates(256, static_cast<int>(state.range(0)));
  const auto query = make_query(256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(semantic::retrieve_topk(query, cands, 5));
  }
}
BENCHMARK(BM_RetrieveTopK)->Arg(16)->Arg(64)->Arg(256);

static void BM_CandidateMargin(benchmark::State& state) {
  const auto cands = make_candidates(256, static_cast<int>(state.range(0)));
  const auto query = make_query(256);
  for (auto _ : state) {
    benchmark::DoNotOptimize(semantic::candidate_margin(query, cands));
  }
}
BENCHMARK(BM_CandidateMargin)->Arg(16)->Arg(64)->Arg(256);
