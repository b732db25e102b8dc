#include "unravel/optimize.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>

#include <boost/math/tools/minima.hpp>
#include <json.hpp>

#include "unravel/rng.hpp"

namespace unravel {

SqueezingRule optimal_rule(double T, double epsilon)
{
    return SqueezingRule::optimal_at(T, epsilon);
}

SqueezingRule restore_rule(double T, double epsilon)
{
    return SqueezingRule::restore_at(T, epsilon);
}

std::vector<double> optimal_envelope(const ModeSet& modes, const TimeGrid& grid, double epsilon)
{
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ValidationError("epsilon must lie in (0, 1)");
    modes.check_recurrence(grid.horizon());
    const std::size_t n = grid.size();
    const double h = 0.5 * grid.dt();
    std::vector<cplx> phi_a(n), phi_e(n);
    std::vector<cplx> a(n);
    for (const auto& m : modes.modes()) {
        const double g2 = m.g * m.g;
        // U_i = trapezoid of e^{i omega s} on [0, t_i]; C_k = trapezoid of e^{i omega t} U(t) on [0, t_k].
        cplx U{}, C{}, prev_fu{};
        cplx prev_f = 1.0;
        for (std::size_t i = 0; i < n; ++i) {
            const cplx f = std::exp(I * (m.omega * grid.time(i)));
            if (i > 0)
                U += h * (prev_f + f);
            const cplx fu = f * U;
            if (i > 0)
                C += h * (prev_fu + fu);
            a[i] += g2 * std::conj(f) * U;
            phi_e[i] += (1.0 - epsilon) * g2 * std::conj(f) * C;
            prev_f = f;
            prev_fu = fu;
        }
    }
    for (std::size_t i = 1; i < n; ++i)
        phi_a[i] = phi_a[i - 1] + h * (a[i - 1] + a[i]);
    std::vector<double> x(n);
    for (std::size_t i = 0; i < n; ++i)
        x[i] = std::exp(-2.0 * (phi_a[i] + phi_e[i]).real());
    return x;
}

std::vector<double> optimal_envelope_markov(double gamma, const TimeGrid& grid, double epsilon)
{
    std::vector<double> x(grid.size(), 1.0);
    for (std::size_t k = 1; k < grid.size(); ++k) {
        const auto r = markov_rates(gamma, grid, optimal_rule(grid.time(k), epsilon));
        x[k] = std::exp(-2.0 * r.phi[k].real());
    }
    return x;
}

BoundEvaluator make_bound_evaluator(ModeSet modes, TimeGrid grid, double T)
{
    const std::size_t k = grid.index_of(T);
    if (k == 0)
        throw ValidationError("bound target time must be > 0");
    const TimeGrid sub(grid.dt(), k);
    modes.check_recurrence(sub.horizon());
    return [modes = std::move(modes), sub, k](const std::vector<cplx>& xi) {
        const auto rates = integrated_rates(build_kernel(modes.with_squeezing(xi), sub));
        return std::exp(-2.0 * rates.phi[k].real());
    };
}

std::vector<double> analytic_phases(const ModeSet& modes, double T, SearchObjective objective)
{
    std::vector<double> out;
    for (const auto& m : modes.modes()) {
        const cplx e = std::exp(I * (m.omega * T));
        out.push_back(std::arg(objective == SearchObjective::MinimizeXbarAt ? -e : e));
    }
    return out;
}

double phase_distance(double a, double b)
{
    return std::abs(std::remainder(a - b, 2.0 * kPi));
}

SqueezingRule SearchResult::rule(double epsilon) const
{
    return SqueezingRule::per_mode_phase(phases, 1.0 - epsilon);
}

namespace {

struct StartResult {
    std::vector<double> phases;
    double log_objective;
    std::vector<SearchTraceRow> trace;
    std::vector<std::vector<double>> accepted;
    std::size_t evaluations{0};
    bool exhausted{false};
};

std::vector<cplx> to_xi(const std::vector<double>& phases, double magnitude)
{
    std::vector<cplx> xi(phases.size());
    for (std::size_t i = 0; i < phases.size(); ++i)
        xi[i] = std::polar(magnitude, phases[i]);
    return xi;
}

StartResult run_start(const BoundEvaluator& evaluate, std::size_t n_modes, const SearchOptions& o,
                      std::uint64_t seed, std::size_t budget)
{
    const double sign = o.objective == SearchObjective::MinimizeXbarAt ? 1.0 : -1.0;
    const double mag = 1.0 - o.epsilon;
    StartResult r;
    Rng rng = make_rng(seed);
    std::uniform_real_distribution<double> uni(-kPi, kPi);
    r.phases.resize(n_modes);
    for (auto& p : r.phases)
        p = uni(rng);

    // Descent runs on sign * log xbar, which is separable across modes.
    auto f = [&](const std::vector<double>& ph) { return sign * std::log(evaluate(to_xi(ph, mag))); };
    r.log_objective = f(r.phases);
    std::size_t iter = 0;
    r.trace.push_back({iter++, std::exp(sign * r.log_objective), r.phases});
    r.accepted.push_back(r.phases);

    auto spend = [&](std::size_t n) {
        if (r.evaluations + n > budget) {
            r.exhausted = true;
            return false;
        }
        r.evaluations += n;
        return true;
    };

    const std::size_t P = std::max<std::size_t>(o.scan_points, 4);
    for (std::size_t sweep = 0; sweep < o.max_sweeps && !r.exhausted; ++sweep) {
        const double before = r.log_objective;
        for (std::size_t m = 0; m < n_modes && !r.exhausted; ++m) {
            auto ph = r.phases;
            auto line = [&](double th) {
                ph[m] = th;
                return f(ph);
            };
            if (!spend(P))
                break;
            std::size_t best_j = 0;
            double best_v = std::numeric_limits<double>::infinity();
            for (std::size_t j = 0; j < P; ++j) {
                const double v = line(-kPi + 2.0 * kPi * static_cast<double>(j) / static_cast<double>(P));
                if (v < best_v) {
                    best_v = v;
                    best_j = j;
                }
            }
            const double step = 2.0 * kPi / static_cast<double>(P);
            const double centre = -kPi + step * static_cast<double>(best_j);
            double th = centre, v = best_v;
            const std::size_t left = budget - r.evaluations;
            if (left > 2) {
                std::uintmax_t max_iter = std::min<std::size_t>(left - 1, 200);
                std::size_t used = 0;
                auto counted = [&](double x) {
                    ++used;
                    return line(x);
                };
                const auto res = boost::math::tools::brent_find_minima(counted, centre - step,
                                                                       centre + step, 52, max_iter);
                r.evaluations += used;
                if (res.second < v) {
                    th = res.first;
                    v = res.second;
                }
            }
            else {
                r.exhausted = true;
            }
            if (v < r.log_objective) {
                r.phases[m] = std::remainder(th, 2.0 * kPi);
                r.log_objective = v;
                r.accepted.push_back(r.phases);
            }
            r.trace.push_back({iter++, std::exp(sign * r.log_objective), r.phases});
        }
        if (before - r.log_objective < o.tol)
            break;
    }
    return r;
}

} // namespace

SearchResult search_squeezing(const BoundEvaluator& evaluate, std::size_t n_modes,
                              const SearchOptions& options,
                              const std::optional<std::vector<double>>& analytic)
{
    if (n_modes == 0 || n_modes > 16)
        throw ValidationError("phase search supports 1..16 modes");
    if (!(options.epsilon > 0.0 && options.epsilon < 1.0))
        throw ValidationError("epsilon must lie in (0, 1)");
    if (options.n_starts == 0)
        throw ValidationError("phase search needs at least one start");
    if (analytic && analytic->size() != n_modes)
        throw ValidationError("analytic phases do not match the mode count");

    const std::size_t S = options.n_starts;
    std::vector<StartResult> starts(S);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t s = 0; s < S; ++s) {
        const std::size_t share = options.budget / S + (s < options.budget % S ? 1 : 0);
        starts[s] = run_start(evaluate, n_modes, options, stream_seed(options.seed, s), share);
    }

    SearchResult res;
    std::size_t best = 0;
    std::size_t iter = 0;
    for (std::size_t s = 0; s < S; ++s) {
        if (starts[s].log_objective < starts[best].log_objective)
            best = s;
        res.evaluations += starts[s].evaluations;
        res.budget_exhausted = res.budget_exhausted || starts[s].exhausted;
        for (auto row : starts[s].trace) {
            row.iteration = iter++;
            res.trace.push_back(std::move(row));
        }
    }
    const double sign = options.objective == SearchObjective::MinimizeXbarAt ? 1.0 : -1.0;
    const auto& b = starts[best];
    res.phases = b.phases;
    res.objective = std::exp(sign * b.log_objective);
    const auto& acc = b.accepted;
    res.visited = {acc.front(), acc[acc.size() / 2], acc.back()};

    if (analytic) {
        const double a = evaluate(to_xi(*analytic, 1.0 - options.epsilon));
        res.analytic_objective = a;
        res.analytic_gap = std::abs(res.objective - a);
        double worst = 0.0;
        for (std::size_t i = 0; i < n_modes; ++i)
            worst = std::max(worst, phase_distance(res.phases[i], (*analytic)[i]));
        res.max_phase_error = worst;
        res.beats_analytic = sign * (a - res.objective) > 1e-9 * a;
    }

    auto mags = options.magnitudes;
    mags.push_back(1.0 - options.epsilon);
    std::sort(mags.begin(), mags.end());
    mags.erase(std::unique(mags.begin(), mags.end()), mags.end());
    for (double m : mags)
        res.magnitude_sweep.emplace_back(m, evaluate(to_xi(res.phases, m)));
    for (std::size_t i = 1; i < res.magnitude_sweep.size(); ++i) {
        const double prev = res.magnitude_sweep[i - 1].second, cur = res.magnitude_sweep[i].second;
        if (sign * (cur - prev) > 1e-12 * std::max(prev, 1e-300))
            res.magnitude_monotone = false;
    }
    return res;
}

void write_trace_csv(std::ostream& out, const SearchResult& result)
{
    out.precision(17);
    out << "iteration,objective";
    for (std::size_t i = 0; i < result.phases.size(); ++i)
        out << ",phase_" << i + 1;
    out << '\n';
    for (const auto& row : result.trace) {
        out << row.iteration << ',' << row.objective;
        for (double p : row.phases)
            out << ',' << p;
        out << '\n';
    }
}

std::string search_result_json(const SearchResult& result, const SearchOptions& options)
{
    nlohmann::json j;
    j["objective_kind"] =
        options.objective == SearchObjective::MinimizeXbarAt ? "minimize_xbar" : "maximize_xbar";
    j["epsilon"] = options.epsilon;
    j["objective"] = result.objective;
    j["phases"] = result.phases;
    j["evaluations"] = result.evaluations;
    j["budget"] = options.budget;
    j["budget_exhausted"] = result.budget_exhausted;
    j["analytic_objective"] = result.analytic_objective ? nlohmann::json(*result.analytic_objective)
                                                        : nlohmann::json(nullptr);
    j["analytic_gap"] =
        result.analytic_gap ? nlohmann::json(*result.analytic_gap) : nlohmann::json(nullptr);
    j["max_phase_error"] =
        result.max_phase_error ? nlohmann::json(*result.max_phase_error) : nlohmann::json(nullptr);
    j["beats_analytic"] = result.beats_analytic;
    auto sweep = nlohmann::json::array();
    for (const auto& [m, x] : result.magnitude_sweep)
        sweep.push_back({{"magnitude", m}, {"xbar", x}});
    j["magnitude_sweep"] = sweep;
    j["magnitude_monotone"] = result.magnitude_monotone;
    return j.dump(2);
}

} // namespace unravel
