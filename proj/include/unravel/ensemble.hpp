#pragma once

#include <cstdint>
#include <functional>
#include <variant>
#include <vector>

#include "unravel/noise.hpp"
#include "unravel/sse.hpp"

namespace unravel {

/// Any of the three samplers; one per coupled qubit in an ensemble.
using NoiseSource = std::variant<ModeSumSampler, CovarianceSampler, MarkovIncrementSampler>;

NoiseTrajectory draw(const NoiseSource& source, std::uint64_t seed);
const TimeGrid& source_grid(const NoiseSource& source);

/// Called once per trajectory with its index. Calls are serialized but their
/// order depends on scheduling.
using TrajectoryObserver = std::function<void(std::size_t, const RelativeStateTrajectory&)>;

struct EnsembleOptions {
    std::size_t n_trajectories{1000};
    std::uint64_t seed{1};
    // Work is cut into this many contiguous index blocks, each reduced on its
    // own and merged in block order. The count is fixed, so the floating-point
    // result does not depend on the number of threads.
    std::size_t n_blocks{32};
};

/// Trajectory i uses stream_seed(seed, i * M + k) for channel k.
AveragedDensity run_dephasing_ensemble(const DephasingPropagator& propagator,
                                       const std::vector<NoiseSource>& sources,
                                       const EnsembleOptions& options,
                                       const TrajectoryObserver& observer = {});

/// Second-moment statistics of a single source, parallel over seeds.
CorrelationAccumulator sample_noise_ensemble(const NoiseSource& source, std::size_t n_samples,
                                             std::uint64_t seed, std::size_t n_blocks = 32);

namespace reference {

/// Plain loop in index order; the parallel version must agree to rounding.
AveragedDensity run_dephasing_ensemble(const DephasingPropagator& propagator,
                                       const std::vector<NoiseSource>& sources,
                                       const EnsembleOptions& options);

} // namespace reference

} // namespace unravel
