#include <doctest.h>

#include <cmath>
#include <sstream>

#include "unravel/correlations.hpp"
#include "unravel/optimize.hpp"
#include "unravel/oracle.hpp"
#include "unravel/sse.hpp"

using namespace unravel;

namespace {

ModeSet three_modes()
{
    return ModeSet({{0.6, 0.8, std::polar(0.5, 0.3)}, {0.4, 1.7, cplx{-0.3, 0.6}}, {0.5, 2.6, {}}});
}

} // namespace

TEST_CASE("time grid indexing")
{
    const TimeGrid g(0.1, 20);
    CHECK(g.size() == 21);
    CHECK(g.horizon() == doctest::Approx(2.0));
    CHECK(g.index_of(1.3) == 13);
    CHECK_THROWS_AS(g.index_of(1.25), ValidationError);
    CHECK_THROWS_AS(g.index_of(2.5), ValidationError);
    CHECK_THROWS_AS(TimeGrid(-0.1, 3), ValidationError);
}

TEST_CASE("squeezing values stay inside the unit disk")
{
    CHECK(std::abs(clamp_squeezing(cplx{1.0, 0.0}) - (1.0 - kDefaultEpsilon)) < 1e-15);
    CHECK(clamp_squeezing(cplx{0.3, 0.1}) == cplx{0.3, 0.1});
    CHECK_THROWS_AS(clamp_squeezing(cplx{1.5, 0.0}), ValidationError);
    const auto r = optimal_rule(2.0);
    CHECK(std::abs(r.value(1.3) + (1.0 - kDefaultEpsilon) * std::exp(I * 2.6)) < 1e-15);
    CHECK(std::abs(restore_rule(2.0).value(1.3) - (1.0 - kDefaultEpsilon) * std::exp(I * 2.6)) < 1e-15);
    CHECK_THROWS_AS(SqueezingRule::per_mode_phase({0.1}, 0.5).as_function(), ValidationError);
}

TEST_CASE("zero squeezing gives a vanishing eta")
{
    const auto m = SqueezingRule::zero().apply(three_modes());
    const auto k = build_kernel(m, TimeGrid(0.1, 30));
    CHECK(k.eta.cwiseAbs().maxCoeff() == 0.0);
    const auto r = integrated_rates(k);
    for (const auto& e : r.E)
        CHECK(e == cplx{});
}

TEST_CASE("production kernel matches the direct mode sum")
{
    const TimeGrid g(0.05, 60);
    const auto a = build_kernel(three_modes(), g);
    const auto b = reference::build_kernel(three_modes(), g);
    CHECK((a.alpha - b.alpha).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((a.eta - b.eta).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("kernel symmetries: alpha hermitian and stationary, eta symmetric in t + s")
{
    const TimeGrid g(0.1, 25);
    const auto m = three_modes();
    const auto k = build_kernel(m, g);
    const auto n = static_cast<Eigen::Index>(g.size());
    CHECK((k.alpha - k.alpha.adjoint()).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((k.eta - k.eta.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    for (Eigen::Index i = 0; i + 1 < n; ++i)
        for (Eigen::Index j = 0; j + 1 < n; ++j) {
            CHECK(std::abs(k.alpha(i + 1, j + 1) - k.alpha(i, j)) < 1e-13);
            if (j > 0)
                CHECK(std::abs(k.eta(i + 1, j - 1) - k.eta(i, j)) < 1e-13);
        }
    for (Eigen::Index i = 0; i < n; ++i)
        CHECK(k.alpha(i, i).real() == doctest::Approx(m.total_weight()).epsilon(1e-13));
}

TEST_CASE("from_matrices validates shape and hermiticity")
{
    const TimeGrid g(0.1, 2);
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(3, 3), e = Eigen::MatrixXcd::Zero(3, 3);
    CHECK_NOTHROW(CorrelationKernel::from_matrices(g, a, e));
    a(0, 1) = 0.5;
    CHECK_THROWS_AS(CorrelationKernel::from_matrices(g, a, e), ValidationError);
    CHECK_THROWS_AS(CorrelationKernel::from_matrices(g, Eigen::MatrixXcd::Identity(2, 2), e), ValidationError);
}

TEST_CASE("integrated rates converge to the analytic mode sums")
{
    const auto m = three_modes();
    const TimeGrid g(1e-3, 2000);
    const auto r = integrated_rates(build_kernel(m, g));
    for (std::size_t k : {500u, 1200u, 2000u}) {
        const double t = g.time(k);
        CHECK(std::abs(r.A[k] - analytic_rate_A(m, t)) < 1e-6);
        CHECK(std::abs(r.E[k] - analytic_rate_E(m, t)) < 1e-6);
    }
}

TEST_CASE("zero-squeezing bound exponent is a quarter of the decoherence exponent")
{
    const auto m = SqueezingRule::zero().apply(three_modes());
    const TimeGrid g(2e-3, 1500);
    const auto r = integrated_rates(build_kernel(m, g));
    for (std::size_t k : {300u, 900u, 1500u})
        CHECK(4.0 * r.phi[k].real() == doctest::Approx(decoherence_exponent(m, g.time(k))).epsilon(1e-5));
    const auto gi = r.gamma_integral();
    CHECK(gi.back() == doctest::Approx(4.0 * r.phi.back().real()));
}

TEST_CASE("Ohmic discretization: weights integrate the density, recurrence is enforced")
{
    const auto model = SpectralDensityModel::ohmic(0.25, 1.0);
    const auto m = discretize_spectral_density(model, 30.0, 3000, {});
    // int_0^inf A w e^{-w} dw = A
    CHECK(m.total_weight() == doctest::Approx(0.25).epsilon(1e-4));
    REQUIRE(m.comb_spacing());
    CHECK_NOTHROW(m.check_recurrence(100.0));
    CHECK_THROWS_AS(m.check_recurrence(2.0 * kPi / *m.comb_spacing() + 1.0), ValidationError);
    CHECK_THROWS_AS(SpectralDensityModel::ohmic(-1.0, 1.0).validate(), ValidationError);
    CHECK_THROWS_AS(SpectralDensityModel::custom_table({1.0, 0.5}, {1.0, 1.0}).validate(), ValidationError);
}

TEST_CASE("Markov rates: constant A, analytic phi for every supported rule")
{
    const double gamma = 0.7;
    const TimeGrid g(0.01, 200);
    const double eps = kDefaultEpsilon;
    const auto z = markov_rates(gamma, g, SqueezingRule::zero());
    for (std::size_t k = 0; k < g.size(); ++k) {
        CHECK(z.A[k].real() == doctest::Approx(gamma / 2.0));
        CHECK(z.phi[k].real() == doctest::Approx(gamma * g.time(k) / 2.0));
    }
    // Optimal at T: xbar(T) = exp(-2 gamma T (1 - eps / 2)); restore at T: exp(-gamma T eps).
    const double T = g.horizon();
    const auto o = markov_rates(gamma, g, optimal_rule(T, eps));
    CHECK(std::exp(-2.0 * o.phi.back().real()) == doctest::Approx(std::exp(-2.0 * gamma * T * (1.0 - eps / 2.0))).epsilon(1e-12));
    const auto r = markov_rates(gamma, g, restore_rule(T, eps));
    CHECK(std::exp(-2.0 * r.phi.back().real()) == doctest::Approx(std::exp(-gamma * T * eps)).epsilon(1e-12));
    CHECK_THROWS_AS(markov_rates(gamma, g, SqueezingRule::per_mode_phase({0.0}, 0.5)), ValidationError);
}

TEST_CASE("grid average of the propagator does not move with eta beyond the trapezoid corners")
{
    const ModeSet base = discretize_spectral_density(SpectralDensityModel::ohmic(0.3, 1.0), 10.0, 80, {});
    const TimeGrid g(0.02, 100);
    const auto k0 = build_kernel(base, g);
    const auto ref = grid_average(k0, integrated_rates(k0), g.n_steps());
    CHECK(ref.population == doctest::Approx(1.0).epsilon(1e-12));
    const double tol = g.dt() * g.dt() * base.total_weight();
    for (const auto& rule : {optimal_rule(2.0), restore_rule(2.0), optimal_rule(0.7),
                             SqueezingRule::per_mode_phase(std::vector<double>(80, 1.1), 0.8)}) {
        const auto k = build_kernel(rule.apply(base), g);
        const auto ga = grid_average(k, integrated_rates(k), g.n_steps());
        CHECK(std::abs(std::log(ga.coherence / ref.coherence)) <= tol);
        CHECK(ga.population == doctest::Approx(1.0).epsilon(tol));
    }
}

TEST_CASE("kernel and rate CSV layouts")
{
    const TimeGrid g(0.5, 3);
    const auto k = build_kernel(ModeSet({{0.5, 1.0, {}}}), g);
    std::ostringstream ks, rs;
    write_kernel_csv(ks, k);
    write_rates_csv(rs, integrated_rates(k));
    std::istringstream in(ks.str());
    std::string line;
    std::getline(in, line);
    CHECK(line == "t,s,re_alpha,im_alpha,re_eta,im_eta");
    std::size_t rows = 0;
    while (std::getline(in, line))
        ++rows;
    CHECK(rows == (g.n_steps() + 1) * (g.n_steps() + 2) / 2);
    CHECK(rs.str().rfind("t,re_A,im_A,re_E,im_E,gamma,gamma_integral\n", 0) == 0);
}
