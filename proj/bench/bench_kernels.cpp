#include <benchmark/benchmark.h>

#include "unravel/correlations.hpp"
#include "unravel/ensemble.hpp"
#include "unravel/optimize.hpp"

using namespace unravel;

namespace {

ModeSet bath(std::size_t n)
{
    return optimal_rule(2.0).apply(
        discretize_spectral_density(SpectralDensityModel::ohmic(0.25, 1.0), 10.0, n, {}));
}

void BM_kernel(benchmark::State& st)
{
    const ModeSet m = bath(200);
    const TimeGrid grid(0.01, static_cast<std::size_t>(st.range(0)));
    for (auto _ : st)
        benchmark::DoNotOptimize(build_kernel(m, grid));
}

void BM_kernel_reference(benchmark::State& st)
{
    const ModeSet m = bath(200);
    const TimeGrid grid(0.01, static_cast<std::size_t>(st.range(0)));
    for (auto _ : st)
        benchmark::DoNotOptimize(reference::build_kernel(m, grid));
}

struct Setup {
    TimeGrid grid{0.02, 100};
    ModeSet m{bath(50)};
    DephasingPropagator prop;
    std::vector<NoiseSource> sources;

    Setup()
        : prop(DephasingSystem(2, {0}, {}, bell()), {integrated_rates(build_kernel(m, grid))}),
          sources{ModeSumSampler(m, grid)}
    {
    }
    static Eigen::VectorXcd bell()
    {
        Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
        v[0] = v[3] = 1.0 / std::sqrt(2.0);
        return v;
    }
};

void BM_ensemble(benchmark::State& st)
{
    const Setup s;
    for (auto _ : st)
        benchmark::DoNotOptimize(run_dephasing_ensemble(s.prop, s.sources, {2000, 1, 32}));
    st.SetItemsProcessed(st.iterations() * 2000);
}

void BM_ensemble_reference(benchmark::State& st)
{
    const Setup s;
    for (auto _ : st)
        benchmark::DoNotOptimize(reference::run_dephasing_ensemble(s.prop, s.sources, {2000, 1, 32}));
    st.SetItemsProcessed(st.iterations() * 2000);
}

void BM_covariance_sampler(benchmark::State& st)
{
    const TimeGrid grid(0.01, 100);
    const CovarianceSampler cs(build_kernel(bath(100), grid));
    std::uint64_t seed = 0;
    for (auto _ : st)
        benchmark::DoNotOptimize(cs.sample(seed++));
}

} // namespace

BENCHMARK(BM_kernel)->Arg(200)->Arg(800);
BENCHMARK(BM_kernel_reference)->Arg(200);  // O(n^2 modes); 800 takes ~10 s per iteration
BENCHMARK(BM_ensemble);
BENCHMARK(BM_ensemble_reference);
BENCHMARK(BM_covariance_sampler);

BENCHMARK_MAIN();
