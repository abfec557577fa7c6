// Serial reference vs OpenMP kernels over batch sizes 4K..1M.
#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "sipo/kernels.hpp"
#include "sipo/placement.hpp"

namespace {

using namespace sipo;

std::vector<double> random_angles(std::size_t n) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> d(60.0, 130.0);
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

std::vector<double> random_counts(std::size_t n) {
  const auto m = paper_model();
  std::mt19937_64 rng(2);
  std::uniform_real_distribution<double> d(m.counts_min(), m.counts_max());
  std::vector<double> v(n);
  for (auto& x : v) x = d(rng);
  return v;
}

template <auto Kernel>
void BM_forward(benchmark::State& st) {
  const auto model = paper_model();
  const auto in = random_angles(static_cast<std::size_t>(st.range(0)));
  std::vector<double> out(in.size());
  for (auto _ : st) {
    Kernel(model, in, out);
    benchmark::DoNotOptimize(out.data());
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <auto Kernel>
void BM_invert(benchmark::State& st) {
  const auto model = paper_model();
  const auto in = random_counts(static_cast<std::size_t>(st.range(0)));
  std::vector<double> out(in.size());
  for (auto _ : st) {
    benchmark::DoNotOptimize(Kernel(model, in, out));
  }
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <auto Kernel>
void BM_residual(benchmark::State& st) {
  const auto model = paper_model();
  const auto a = random_angles(static_cast<std::size_t>(st.range(0)));
  std::vector<CalibrationSample> s;
  s.reserve(a.size());
  for (double x : a) s.push_back({x, model.evaluate(x) + 0.5});
  for (auto _ : st) benchmark::DoNotOptimize(Kernel(model, s));
  st.SetItemsProcessed(st.iterations() * st.range(0));
}

template <placement::Execution E>
void BM_site_fits(benchmark::State& st) {
  const auto records = placement::synthetic_study(1, static_cast<std::size_t>(st.range(0)));
  for (auto _ : st) benchmark::DoNotOptimize(placement::fit_site_models(records, E));
  st.SetItemsProcessed(st.iterations() * static_cast<std::int64_t>(records.size()));
}

}  // namespace

BENCHMARK(BM_forward<kernels::serial::forward>)->Name("forward/serial")->RangeMultiplier(16)->Range(1 << 12, 1 << 20);
BENCHMARK(BM_forward<kernels::parallel::forward>)->Name("forward/parallel")->RangeMultiplier(16)->Range(1 << 12, 1 << 20)->UseRealTime();
BENCHMARK(BM_invert<kernels::serial::invert>)->Name("invert/serial")->RangeMultiplier(16)->Range(1 << 12, 1 << 20);
BENCHMARK(BM_invert<kernels::parallel::invert>)->Name("invert/parallel")->RangeMultiplier(16)->Range(1 << 12, 1 << 20)->UseRealTime();
BENCHMARK(BM_residual<kernels::serial::sum_squared_residual>)->Name("residual/serial")->RangeMultiplier(16)->Range(1 << 12, 1 << 20);
BENCHMARK(BM_residual<kernels::parallel::sum_squared_residual>)->Name("residual/parallel")->RangeMultiplier(16)->Range(1 << 12, 1 << 20)->UseRealTime();
BENCHMARK(BM_site_fits<placement::Execution::Serial>)->Name("site_fits/serial")->Arg(9)->Arg(1000);
BENCHMARK(BM_site_fits<placement::Execution::Parallel>)->Name("site_fits/parallel")->Arg(9)->Arg(1000)->UseRealTime();

BENCHMARK_MAIN();
