#include <doctest.h>

#include <cmath>

#include "unravel/entanglement.hpp"
#include "unravel/optimize.hpp"

using namespace unravel;

namespace {

Eigen::VectorXcd bell()
{
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
    v[0] = v[3] = 1.0 / std::sqrt(2.0);
    return v;
}

} // namespace

TEST_CASE("pure-state concurrence")
{
    CHECK(concurrence2(bell()) == doctest::Approx(1.0));
    Eigen::VectorXcd prod(4);
    prod << 0.6, 0.8, 0.0, 0.0;
    CHECK(concurrence2(prod) == 0.0);
    CHECK(concurrence2(3.0 * bell()) == doctest::Approx(9.0));
    CHECK_THROWS_AS(concurrence2(Eigen::VectorXcd::Zero(2)), ValidationError);
}

TEST_CASE("Wootters concurrence: pure states and Werner family")
{
    Rng rng = make_rng(4);
    std::normal_distribution<double> nd;
    for (int t = 0; t < 20; ++t) {
        Eigen::VectorXcd v(4);
        for (int i = 0; i < 4; ++i)
            v[i] = cplx{nd(rng), nd(rng)};
        v.normalize();
        CHECK(wootters_concurrence(v * v.adjoint()) == doctest::Approx(concurrence2(v)).epsilon(1e-7));
    }
    const Eigen::MatrixXcd b = bell() * bell().adjoint();
    for (double p : {0.1, 0.3, 0.5, 0.8, 1.0}) {
        const Eigen::MatrixXcd w = p * b + (1.0 - p) / 4.0 * Eigen::MatrixXcd::Identity(4, 4);
        CHECK(wootters_concurrence(w) == doctest::Approx(std::max(0.0, (3.0 * p - 1.0) / 2.0)).epsilon(1e-9));
    }
    Eigen::MatrixXcd bad = b;
    bad(0, 1) = 0.3;
    CHECK_THROWS_AS(wootters_concurrence(bad), ValidationError);
    CHECK_THROWS_AS(wootters_concurrence(2.0 * b), ValidationError);
}

TEST_CASE("measure admission accepts concurrence and rejects non-invariant measures")
{
    const auto c = admit_measure(concurrence_measure(), 2, 50, 3);
    CHECK(c.admitted);
    CHECK(c.sl_deviation < 1e-10);
    const SLInvariantMeasure pop{[](const Eigen::VectorXcd& p) { return std::norm(p[0]); }, "population"};
    CHECK_FALSE(admit_measure(pop, 2, 20, 3).admitted);
    const SLInvariantMeasure quartic{[](const Eigen::VectorXcd& p) { return std::pow(concurrence2(p), 2); }, "c2"};
    const auto q = admit_measure(quartic, 2, 20, 3);
    CHECK(q.homogeneity_deviation > 1e-3);
    CHECK_FALSE(q.admitted);
    const auto s = random_sl2(17);
    CHECK(std::abs(s.determinant() - 1.0) < 1e-12);
}

TEST_CASE("dephased Bell state has concurrence equal to the coherence factor")
{
    const Eigen::MatrixXcd b = bell() * bell().adjoint();
    for (double f : {1.0, 0.7, 0.2, 0.0})
        CHECK(wootters_concurrence(dephase_density(b, 2, {0}, {f})) == doctest::Approx(f).epsilon(1e-9));
    CHECK(wootters_concurrence(dephase_density(b, 2, {0, 1}, {0.5, 0.6})) == doctest::Approx(0.3).epsilon(1e-9));
    CHECK_THROWS_AS(dephase_density(b, 2, {0}, {}), ValidationError);
}

TEST_CASE("bound: product over channels and comparison flags")
{
    const TimeGrid g(0.01, 200);
    const auto m = discretize_spectral_density(SpectralDensityModel::ohmic(0.2, 1.0), 8.0, 40, {});
    const auto r1 = integrated_rates(build_kernel(m, g));
    const auto r2 = integrated_rates(build_kernel(optimal_rule(1.0).apply(m), g));
    const auto one = mean_entanglement_bound({r1});
    const auto two = mean_entanglement_bound({r1, r2});
    const auto other = mean_entanglement_bound({r2});
    for (std::size_t k = 0; k < g.size(); ++k) {
        CHECK(two.xbar[k] == doctest::Approx(one.xbar[k] * other.xbar[k]).epsilon(1e-14));
        CHECK(one.xbar[k] <= 1.0 + 1e-15);
    }
    // The zero-squeezing bound sits above the exact concurrence exp(-Gamma).
    std::vector<double> exact;
    for (std::size_t k = 0; k < g.size(); ++k)
        exact.push_back(std::exp(-4.0 * r1.phi[k].real()));
    CHECK_FALSE(bound_vs_exact(one, exact).any_violation);
    std::vector<double> above(exact.size(), 1.01);
    CHECK(bound_vs_exact(one, above).any_violation);
    CHECK_THROWS_AS(mean_entanglement_bound(std::vector<RateTable>{}), ValidationError);
    const auto r3 = integrated_rates(build_kernel(m, TimeGrid(0.02, 100)));
    CHECK_THROWS_AS(mean_entanglement_bound({r1, r3}), ValidationError);
}
