#include <benchmark/benchmark.h>

#include <random>
#include <vector>

#include "lindbladiff/eigen.hpp"
#include "lindbladiff/ivp.hpp"
#include "lindbladiff/model.hpp"
#include "lindbladiff/qfi.hpp"
#include "lindbladiff/sensitivity.hpp"
#include "lindbladiff/state.hpp"

using namespace lindbladiff;

namespace {

CMatrix random_density(std::size_t d, std::uint64_t seed) {
  std::mt19937_64 gen(seed);
  std::normal_distribution<double> normal;
  CMatrix a(d, d);
  for (auto& z : a.data()) z = {normal(gen), normal(gen)};
  CMatrix rho = matmul(a, a.adjoint());
  rho *= 1.0 / trace(rho).real();
  return hermitian_part(rho);
}

const std::vector<double> kParams = {0.8, 1.1};

void rhs(benchmark::State& state, Storage storage) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const LindbladModel model = preset_oat(n, 0.1, storage);
  const CMatrix rho = random_density(model.dimension(), 1);
  for (auto _ : state) benchmark::DoNotOptimize(lindblad_rhs(0.0, rho, model, kParams));
}

void BM_RhsSparse(benchmark::State& state) { rhs(state, Storage::sparse); }
void BM_RhsDense(benchmark::State& state) { rhs(state, Storage::dense); }

void BM_Integrate(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const LindbladModel model = preset_oat(n, 0.1);
  const DensityOperator rho0 = DensityOperator::all_zero(n);
  for (auto _ : state) benchmark::DoNotOptimize(integrate(model, kParams, rho0, {0.0, 1.0}));
}

void BM_AdjointQfi(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  const LindbladModel model = preset_oat(n, 0.1);
  const DensityOperator rho0 = DensityOperator::all_zero(n);
  const Generator g = Generator::collective_sz(n);
  for (auto _ : state)
    benchmark::DoNotOptimize(qfi_of_params(model, kParams, rho0, {0.0, 1.0}, g, SolveConfig{}, true));
}

void BM_Eigh(benchmark::State& state) {
  const CMatrix rho = random_density(static_cast<std::size_t>(state.range(0)), 2);
  for (auto _ : state) benchmark::DoNotOptimize(eigh(rho));
}

}  // namespace

BENCHMARK(BM_RhsSparse)->DenseRange(1, 4);
BENCHMARK(BM_RhsDense)->DenseRange(1, 4);
BENCHMARK(BM_Integrate)->DenseRange(1, 4)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_AdjointQfi)->DenseRange(1, 3)->Unit(benchmark::kMillisecond);
BENCHMARK(BM_Eigh)->Arg(4)->Arg(8)->Arg(16);
BENCHMARK_MAIN();
