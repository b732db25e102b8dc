#include <doctest.h>

#include <cmath>

#include <json.hpp>

#include "unravel/oracle.hpp"
#include "unravel/quadrature.hpp"

using namespace unravel;

namespace {

Eigen::VectorXcd plus()
{
    Eigen::VectorXcd v(2);
    v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    return v;
}

Eigen::MatrixXcd sz()
{
    Eigen::MatrixXcd m = Eigen::MatrixXcd::Zero(2, 2);
    m(0, 0) = 1.0;
    m(1, 1) = -1.0;
    return m;
}

} // namespace

TEST_CASE("Bargmann coefficients")
{
    const cplx z{0.7, -0.3};
    const auto c = bargmann_coefficients(z, {}, 12);
    double fact = 1.0;
    for (std::size_t n = 0; n <= 12; ++n) {
        if (n > 0)
            fact *= static_cast<double>(n);
        CHECK(std::abs(c[n] - std::pow(z, static_cast<double>(n)) / std::sqrt(fact)) < 1e-13);
    }
    // Squeezed vacuum: only even levels, c_2 = -xi / sqrt(2).
    const cplx xi{0.3, 0.4};
    const auto s = bargmann_coefficients({}, xi, 6);
    CHECK(std::abs(s[1]) == 0.0);
    CHECK(std::abs(s[2] + xi / std::sqrt(2.0)) < 1e-15);
    CHECK_THROWS_AS(bargmann_coefficients(cplx{1e3, 0.0}, {}, 400), NumericalError);
}

TEST_CASE("Gauss-Hermite rule integrates polynomials exactly")
{
    const auto r = gauss_hermite(20);
    double s0 = 0.0, s2 = 0.0, s4 = 0.0, s1 = 0.0, s10 = 0.0;
    for (std::size_t i = 0; i < r.nodes.size(); ++i) {
        const double x = r.nodes[i], w = r.weights[i];
        s0 += w;
        s1 += w * x;
        s2 += w * x * x;
        s4 += w * std::pow(x, 4);
        s10 += w * std::pow(x, 10);
    }
    CHECK(s0 == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(std::abs(s1) < 1e-13);
    CHECK(s2 == doctest::Approx(1.0).epsilon(1e-13));
    CHECK(s4 == doctest::Approx(3.0).epsilon(1e-13));
    CHECK(s10 == doctest::Approx(945.0).epsilon(1e-12));
}

TEST_CASE("squeezed Gaussian rule reproduces the measure moments")
{
    const cplx xi = std::polar(0.6, 0.9);
    const auto nodes = squeezed_gaussian_rule(xi, 12);
    double w = 0.0, zz = 0.0;
    cplx z2{};
    for (const auto& n : nodes) {
        w += n.weight;
        zz += n.weight * std::norm(n.z);
        z2 += n.weight * n.z * n.z;
    }
    CHECK(w == doctest::Approx(1.0));
    CHECK(zz == doctest::Approx(1.0));
    CHECK(std::abs(z2 - xi) < 1e-13);
}

TEST_CASE("composite evolution: norm, exact dephasing coherence, leakage flag")
{
    const ModeSet m({{0.5, 1.0, {}}});
    const FockBath bath{m, 20};
    const TimeGrid g(0.25, 8);
    const auto tr = evolve_composite(Eigen::MatrixXcd::Zero(2, 2), sz(), bath, g, vacuum_product(plus(), bath));
    CHECK(tr.max_norm_drift < 1e-9);
    CHECK_FALSE(tr.leakage_flagged);
    for (std::size_t k = 0; k < g.size(); ++k) {
        const auto rho = partial_trace_bath(tr.at(k), bath);
        CHECK(std::abs(rho(0, 1) - 0.5 * std::exp(-decoherence_exponent(m, g.time(k)))) < 1e-8);
        CHECK(rho(0, 0).real() == doctest::Approx(0.5).epsilon(1e-9));
    }
    const FockBath tiny{ModeSet({{2.0, 0.5, {}}}), 2};
    const auto bad = evolve_composite(Eigen::MatrixXcd::Zero(2, 2), sz(), tiny, g, vacuum_product(plus(), tiny));
    CHECK(bad.leakage_flagged);
    CHECK_THROWS_AS((FockBath{ModeSet(std::vector<Mode>(5, Mode{0.1, 1.0, {}})), 4}.validate()), ValidationError);
}

TEST_CASE("quadrature resolves the identity and the partial trace for two modes")
{
    const ModeSet m({{0.4, 1.0, {}}, {0.3, 1.7, {}}});
    const FockBath bath{m, 12};
    const TimeGrid g(0.5, 2);
    Eigen::MatrixXcd h = Eigen::MatrixXcd::Zero(2, 2);
    h(0, 1) = h(1, 0) = 0.3;
    const auto tr = evolve_composite(h, sz(), bath, g, vacuum_product(plus(), bath));
    for (const std::vector<cplx>& xi : {std::vector<cplx>{{}, {}}, std::vector<cplx>{{0.2, 0.3}, {-0.4, 0.0}}}) {
        const auto q = quadrature_average(tr.at(2), bath, xi, 24);
        CHECK(q.partial_trace_residual < 1e-8);
        CHECK(std::abs(q.identity_residual) < 1e-8);
        CHECK(q.n_nodes == 24u * 24u * 24u * 24u);
    }
}

TEST_CASE("relative states: projection uses conjugated arguments")
{
    const ModeSet m({{0.5, 1.0, {}}});
    const FockBath bath{m, 15};
    const TimeGrid g(0.5, 2);
    const auto tr = evolve_composite(Eigen::MatrixXcd::Zero(2, 2), sz(), bath, g, vacuum_product(plus(), bath));
    const cplx z{0.3, 0.8}, xi{0.1, -0.2};
    const auto a = project_relative_state(tr.at(2), bath, {z}, {xi});
    const auto b = relative_state_at(tr.at(2), bath, {std::conj(z)}, {std::conj(xi)});
    CHECK((a - b).norm() < 1e-15);
}

TEST_CASE("SSE residual is small for dephasing and for a non-commuting Hamiltonian")
{
    const ModeSet m({{0.5, 1.0, {}}});
    const FockBath bath{m, 20};
    const TimeGrid g(2e-3, 200);
    const std::vector<std::vector<cplx>> nodes{{cplx{0.2, 0.1}}, {cplx{-0.5, 0.9}}};
    Eigen::MatrixXcd hz = 0.4 * sz();
    const auto tr = evolve_composite(hz, sz(), bath, g, vacuum_product(plus(), bath));
    const auto rep = verify_sse_residual(tr, hz, sz(), nodes, {std::polar(0.5, 1.0)});
    CHECK(rep.closed_form_checked);
    CHECK(rep.max() < 1e-6);
    Eigen::MatrixXcd hx = hz;
    hx(0, 1) = hx(1, 0) = 0.3;
    const auto tr2 = evolve_composite(hx, sz(), bath, g, vacuum_product(plus(), bath));
    const auto rep2 = verify_sse_residual(tr2, hx, sz(), nodes, {cplx{0.3, 0.0}});
    CHECK_FALSE(rep2.closed_form_checked);
    CHECK(rep2.mode_resolved < 1e-6);
    // A wrong Hamiltonian in the check must show up.
    const auto wrong = verify_sse_residual(tr2, hz, sz(), nodes, {cplx{0.3, 0.0}});
    CHECK(wrong.mode_resolved > 1e-3);
}

TEST_CASE("analytic rates and report JSON")
{
    const ModeSet m({{0.5, 1.0, {}}});
    CHECK(decoherence_exponent(m, 0.0) == 0.0);
    CHECK(decoherence_exponent(m, 2.0 * kPi) == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(decoherence_exponent(m, kPi) == doctest::Approx(4.0 * 0.25 * 2.0));
    OracleReport r;
    r.scenario = "x";
    r.xi_values_tested = {cplx{0.5, 0.0}};
    const auto j = nlohmann::json::parse(r.to_json());
    CHECK(j.contains("identity_residual"));
    CHECK(j.contains("partial_trace_residual"));
    CHECK(j.contains("sse_residual"));
    CHECK(j["xi_values_tested"].size() == 1);
}
