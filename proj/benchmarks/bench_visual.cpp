#include <benchmark/benchmark.h>

#include <random>

#include "adagent/visual_tools.hpp"

using namespace adagent::vision;

namespace {

ImageBuffer noisy_image(int side) {
  std::mt19937 rng(3);
  ImageBuffer img;
  img.width = side;
  img.height = side;
  img.channels = 3;
  img.data.resize(static_cast<std::size_t>(side) * side * 3);
  for (auto& v : img.data) v = static_cast<std::uint8_t>(rng() % 256);
  return img;
}

}  // namespace

static void BM_Denoise(benchmark::State& state) {
  const auto img = noisy_image(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(denoise(img, 10.0));
  }
}
BENCHMARK(BM_Denoise)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

static void BM_Deblur(benchmark::State& state) {
  const auto img = noisy_image(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(deblur(img));
  }
}
BENCHMARK(BM_Deblur)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_Clahe(benchmark::State& state) {
  const auto img = noisy_image(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(enhance_brightness(img));
  }
}
BENCHMARK(BM_Clahe)->Arg(256)->Arg(512)->Unit(benchmark::kMillisecond);

static void BM_SuperResolve(benchmark::State& state) {
  const auto img = noisy_image(static_cast<int>(state.range(0)));
  for (auto _ : state) {
    benchmark::DoNotOptimize(super_resolve(img, 2));
  }
}
BENCHMARK(BM_SuperResolve)->Arg(128)->Arg(256)->Unit(benchmark::kMillisecond);

BENCHMARK_MAIN();
