#include <doctest.h>

#include <cmath>
#include <sstream>

#include <omp.h>

#include "unravel/optimize.hpp"

using namespace unravel;

namespace {

ModeSet three()
{
    return ModeSet({{0.4, 0.7, {}}, {0.3, 1.3, {}}, {0.5, 2.1, {}}});
}

double xbar_at(const ModeSet& m, const TimeGrid& g, double T)
{
    const std::size_t k = g.index_of(T);
    return std::exp(-2.0 * integrated_rates(build_kernel(m, TimeGrid(g.dt(), k))).phi[k].real());
}

} // namespace

TEST_CASE("optimal envelope equals one optimal-rule kernel per target time")
{
    const auto m = discretize_spectral_density(SpectralDensityModel::super_ohmic(0.5, 1.0), 12.0, 60, {});
    const TimeGrid g(0.02, 150);
    const auto env = optimal_envelope(m, g);
    for (double T : {0.4, 1.0, 2.2, 3.0})
        CHECK(env[g.index_of(T)] == doctest::Approx(xbar_at(optimal_rule(T).apply(m), g, T)).epsilon(1e-12));
    CHECK(env[0] == 1.0);
    const auto mk = optimal_envelope_markov(1.0, TimeGrid(0.01, 100));
    CHECK(mk.back() == doctest::Approx(std::exp(-2.0 * (1.0 - kDefaultEpsilon / 2.0))).epsilon(1e-12));
}

TEST_CASE("epsilon monotonicity of the optimal and restore rules")
{
    const auto m = three();
    const TimeGrid g(0.01, 200);
    const double T = 2.0;
    double prev_opt = 2.0, prev_res = -1.0;
    for (double eps : {1e-1, 1e-2, 1e-3}) {
        const double xo = xbar_at(optimal_rule(T, eps).apply(m), g, T);
        const double xr = xbar_at(restore_rule(T, eps).apply(m), g, T);
        CHECK(xo <= prev_opt);
        CHECK(xr >= prev_res);
        CHECK(xo <= xr);
        prev_opt = xo;
        prev_res = xr;
    }
    CHECK(prev_res > 1.0 - 10.0 * 1e-3);
}

TEST_CASE("single mode: exhaustive scan brackets the analytic phase")
{
    const ModeSet m({{0.5, 1.0, {}}});
    const TimeGrid g(0.01, 200);
    const auto eval = make_bound_evaluator(m, g, 2.0);
    const double target = analytic_phases(m, 2.0, SearchObjective::MinimizeXbarAt)[0];
    const std::size_t P = 10000;
    double best = 1e300, best_p = 0.0;
    for (std::size_t j = 0; j < P; ++j) {
        const double p = -kPi + 2.0 * kPi * static_cast<double>(j) / P;
        const double v = eval({std::polar(1.0 - kDefaultEpsilon, p)});
        if (v < best) {
            best = v;
            best_p = p;
        }
    }
    CHECK(phase_distance(best_p, target) <= 2.0 * kPi / P);
}

TEST_CASE("search finds the optimal and restore phases")
{
    const auto m = three();
    const TimeGrid g(0.01, 200);
    const auto eval = make_bound_evaluator(m, g, 2.0);
    SearchOptions o;
    o.seed = 5;
    const auto mn = search_squeezing(eval, 3, o, analytic_phases(m, 2.0, SearchObjective::MinimizeXbarAt));
    CHECK(*mn.max_phase_error < 1e-3);
    CHECK_FALSE(mn.budget_exhausted);
    CHECK(mn.magnitude_monotone);
    o.objective = SearchObjective::MaximizeXbarAt;
    const auto mx = search_squeezing(eval, 3, o, analytic_phases(m, 2.0, SearchObjective::MaximizeXbarAt));
    CHECK(*mx.max_phase_error < 1e-3);
    CHECK(*mx.analytic_gap < 1e-6);
    CHECK(mx.objective > 1.0 - 10.0 * kDefaultEpsilon);
    CHECK(mx.visited.size() == 3);
}

TEST_CASE("objective separability: joint optimum equals mode-wise optima")
{
    const auto m = three();
    const TimeGrid g(0.01, 200);
    const auto joint = make_bound_evaluator(m, g, 2.0);
    SearchOptions o;
    o.n_starts = 2;
    const auto res = search_squeezing(joint, 3, o);
    for (std::size_t i = 0; i < 3; ++i) {
        const auto single = make_bound_evaluator(ModeSet({m[i]}), g, 2.0);
        const auto r1 = search_squeezing(single, 1, o);
        CHECK(phase_distance(r1.phases[0], res.phases[i]) < 1e-5);
    }
    // The bound is a product of single-mode bounds.
    std::vector<cplx> xi{std::polar(0.9, 0.3), std::polar(0.5, -1.0), std::polar(0.7, 2.0)};
    double prod = 1.0;
    for (std::size_t i = 0; i < 3; ++i)
        prod *= make_bound_evaluator(ModeSet({m[i]}), g, 2.0)({xi[i]});
    CHECK(joint(xi) == doctest::Approx(prod).epsilon(1e-12));
}

TEST_CASE("budget handling and determinism")
{
    const auto m = three();
    const TimeGrid g(0.01, 100);
    const auto eval = make_bound_evaluator(m, g, 1.0);
    SearchOptions o;
    o.budget = 0;
    const auto r0 = search_squeezing(eval, 3, o);
    CHECK(r0.budget_exhausted);
    CHECK(r0.evaluations == 0);
    o.budget = 4000;
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto a = search_squeezing(eval, 3, o);
    omp_set_num_threads(3);
    const auto b = search_squeezing(eval, 3, o);
    omp_set_num_threads(saved);
    CHECK(a.phases == b.phases);
    CHECK(a.objective == b.objective);
    CHECK_THROWS_AS(search_squeezing(eval, 17, o), ValidationError);
    std::ostringstream os;
    write_trace_csv(os, a);
    CHECK(os.str().rfind("iteration,objective,phase_1,phase_2,phase_3\n", 0) == 0);
}

TEST_CASE("phase distance wraps")
{
    CHECK(phase_distance(kPi - 0.01, -kPi + 0.01) == doctest::Approx(0.02));
    CHECK(phase_distance(0.0, 2.0 * kPi) == doctest::Approx(0.0));
}
