#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "unravel/correlations.hpp"
#include "unravel/squeezing.hpp"

namespace unravel {

/// omega -> -(1 - eps) e^{i omega T}: smallest bound at T.
SqueezingRule optimal_rule(double T, double epsilon = kDefaultEpsilon);

/// omega -> +(1 - eps) e^{i omega T}: bound at T pushed to one.
SqueezingRule restore_rule(double T, double epsilon = kDefaultEpsilon);

/// xbar of the optimal rule re-targeted at every grid time, evaluated at that
/// time: entry k is xbar_{xi_opt(t_k)}(t_k). Uses the same trapezoid sums as
/// integrated_rates, in O(n * modes) instead of one kernel per target.
std::vector<double> optimal_envelope(const ModeSet& modes, const TimeGrid& grid,
                                     double epsilon = kDefaultEpsilon);

/// Same envelope for the delta-correlated kernel of rate gamma.
std::vector<double> optimal_envelope_markov(double gamma, const TimeGrid& grid,
                                            double epsilon = kDefaultEpsilon);

enum class SearchObjective { MinimizeXbarAt, MaximizeXbarAt };

/// xbar(T) for one per-mode squeezing vector.
using BoundEvaluator = std::function<double(const std::vector<cplx>&)>;

/// Builds the kernel of `modes` with the given squeezing on `grid` and returns
/// the single-channel bound at grid time T.
BoundEvaluator make_bound_evaluator(ModeSet modes, TimeGrid grid, double T);

/// Phases of the analytic rule for the objective, in (-pi, pi].
std::vector<double> analytic_phases(const ModeSet& modes, double T, SearchObjective objective);

struct SearchOptions {
    SearchObjective objective{SearchObjective::MinimizeXbarAt};
    double epsilon{kDefaultEpsilon};
    std::size_t budget{4000};  // evaluations beyond the starting points, split across starts
    std::size_t n_starts{4};
    std::uint64_t seed{1};
    std::size_t scan_points{32};
    std::size_t max_sweeps{20};
    double tol{1e-13};  // sweep stops when log xbar improves by less
    std::vector<double> magnitudes{0.0, 0.25, 0.5, 0.75, 0.9, 0.99};
};

struct SearchTraceRow {
    std::size_t iteration;
    double objective;
    std::vector<double> phases;
};

struct SearchResult {
    std::vector<double> phases;
    double objective{0.0};  // xbar(T) of the best rule
    std::optional<double> analytic_objective;
    std::optional<double> analytic_gap;     // |best - analytic|
    std::optional<double> max_phase_error;  // wrapped, radians
    bool beats_analytic{false};  // best is better than analytic by more than 1e-9 relative
    std::vector<SearchTraceRow> trace;
    std::vector<std::pair<double, double>> magnitude_sweep;  // (|xi|, xbar) at the best phases
    bool magnitude_monotone{true};
    bool budget_exhausted{false};
    std::size_t evaluations{0};
    std::vector<std::vector<double>> visited;  // first, middle and last accepted points

    SqueezingRule rule(double epsilon) const;
};

/// Coordinate descent over per-mode phases at |xi| = 1 - eps: a coarse scan
/// per coordinate, then Brent refinement, repeated over sweeps; several
/// random starts run in parallel and the best is kept.
SearchResult search_squeezing(const BoundEvaluator& evaluate, std::size_t n_modes,
                              const SearchOptions& options,
                              const std::optional<std::vector<double>>& analytic = std::nullopt);

/// Wrapped distance between two angles, in [0, pi].
double phase_distance(double a, double b);

/// CSV `iteration,objective,phase_1..phase_n`.
void write_trace_csv(std::ostream& out, const SearchResult& result);

std::string search_result_json(const SearchResult& result, const SearchOptions& options);

} // namespace unravel
