#include "unravel/ensemble.hpp"

#include <algorithm>

namespace unravel {

NoiseTrajectory draw(const NoiseSource& source, std::uint64_t seed)
{
    return std::visit([seed](const auto& s) { return s.sample(seed); }, source);
}

const TimeGrid& source_grid(const NoiseSource& source)
{
    return std::visit([](const auto& s) -> const TimeGrid& { return s.grid(); }, source);
}

namespace {

void check_sources(const DephasingPropagator& propagator, const std::vector<NoiseSource>& sources)
{
    if (sources.size() != propagator.system().coupled().size())
        throw ValidationError("need one noise source per coupled qubit");
    for (const auto& s : sources)
        if (!(source_grid(s) == propagator.grid()))
            throw ValidationError("noise source grid does not match the propagator grid");
}

std::vector<NoiseTrajectory> draw_all(const std::vector<NoiseSource>& sources, std::uint64_t seed,
                                      std::size_t index)
{
    const std::size_t m = sources.size();
    std::vector<NoiseTrajectory> noises;
    noises.reserve(m);
    for (std::size_t k = 0; k < m; ++k)
        noises.push_back(draw(sources[k], stream_seed(seed, index * m + k)));
    return noises;
}

} // namespace

AveragedDensity run_dephasing_ensemble(const DephasingPropagator& propagator,
                                       const std::vector<NoiseSource>& sources,
                                       const EnsembleOptions& options,
                                       const TrajectoryObserver& observer)
{
    check_sources(propagator, sources);
    const std::size_t n = options.n_trajectories;
    if (n == 0)
        throw ValidationError("ensemble needs at least one trajectory");
    const std::size_t n_blocks = std::clamp<std::size_t>(options.n_blocks, 1, n);
    const std::size_t dim = propagator.system().dim();
    std::vector<DensityAccumulator> partial(n_blocks, DensityAccumulator(propagator.grid(), dim));

#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t lo = b * n / n_blocks, hi = (b + 1) * n / n_blocks;
        for (std::size_t i = lo; i < hi; ++i) {
            auto tr = propagator.propagate(draw_all(sources, options.seed, i));
            partial[b].add(tr);
            if (observer) {
#pragma omp critical(unravel_observer)
                observer(i, tr);
            }
        }
    }
    DensityAccumulator total(propagator.grid(), dim);
    for (const auto& p : partial)
        total.merge(p);
    return total.result();
}

CorrelationAccumulator sample_noise_ensemble(const NoiseSource& source, std::size_t n_samples,
                                             std::uint64_t seed, std::size_t n_blocks)
{
    if (n_samples == 0)
        throw ValidationError("noise ensemble needs at least one sample");
    n_blocks = std::clamp<std::size_t>(n_blocks, 1, n_samples);
    const TimeGrid& grid = source_grid(source);
    std::vector<CorrelationAccumulator> partial(n_blocks, CorrelationAccumulator(grid));
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t b = 0; b < n_blocks; ++b) {
        const std::size_t lo = b * n_samples / n_blocks, hi = (b + 1) * n_samples / n_blocks;
        for (std::size_t i = lo; i < hi; ++i)
            partial[b].add(draw(source, stream_seed(seed, i)));
    }
    CorrelationAccumulator total(grid);
    for (const auto& p : partial)
        total.merge(p);
    return total;
}

namespace reference {

AveragedDensity run_dephasing_ensemble(const DephasingPropagator& propagator,
                                       const std::vector<NoiseSource>& sources,
                                       const EnsembleOptions& options)
{
    check_sources(propagator, sources);
    DensityAccumulator acc(propagator.grid(), propagator.system().dim());
    for (std::size_t i = 0; i < options.n_trajectories; ++i)
        acc.add(propagator.propagate(draw_all(sources, options.seed, i)));
    return acc.result();
}

} // namespace reference

} // namespace unravel
