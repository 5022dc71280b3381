#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "cellcount/imaging.hpp"
#include "cellcount/kernels.hpp"

using namespace cellcount;

namespace {

std::vector<double> random_vec(std::size_t n, unsigned seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> d;
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

void BM_Gemm(benchmark::State& state, kernels::Backend backend) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vec(n * n, 1);
  const auto b = random_vec(n * n, 2);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    kernels::gemm(backend, kernels::Transpose::none, kernels::Transpose::none, n, n, n, a, b, c, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long long>(2 * n * n * n));
}

void BM_DensityBatch(benchmark::State& state, kernels::Backend backend) {
  const auto jobs_n = static_cast<std::size_t>(state.range(0));
  std::mt19937_64 rng(3);
  std::uniform_real_distribution<double> u(0.0, 224.0);
  std::vector<std::vector<DotAnnotation>> dots(jobs_n);
  std::vector<DensityJob> jobs;
  for (auto& d : dots) {
    for (int i = 0; i < 300; ++i) d.push_back({u(rng), u(rng)});
    jobs.push_back({d, {224, 224}});
  }
  const auto kernel = gaussian_kernel(5, 1.0);
  for (auto _ : state) {
    auto maps = density_batch(backend, jobs, {14, 14}, kernel);
    benchmark::DoNotOptimize(maps.data());
  }
}

}  // namespace

BENCHMARK_CAPTURE(BM_Gemm, serial, kernels::Backend::serial)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_Gemm, parallel, kernels::Backend::parallel)->Arg(64)->Arg(256);
BENCHMARK_CAPTURE(BM_DensityBatch, serial, kernels::Backend::serial)->Arg(256);
BENCHMARK_CAPTURE(BM_DensityBatch, parallel, kernels::Backend::parallel)->Arg(256);

BENCHMARK_MAIN();
