#include <doctest.h>

#include <cmath>
#include <sstream>

#include <omp.h>

#include "unravel/ensemble.hpp"
#include "unravel/optimize.hpp"
#include "unravel/sse.hpp"

using namespace unravel;

namespace {

Eigen::VectorXcd plus()
{
    Eigen::VectorXcd v(2);
    v << 1.0 / std::sqrt(2.0), 1.0 / std::sqrt(2.0);
    return v;
}

Eigen::VectorXcd bell()
{
    Eigen::VectorXcd v = Eigen::VectorXcd::Zero(4);
    v[0] = v[3] = 1.0 / std::sqrt(2.0);
    return v;
}

ModeSet small_bath()
{
    return discretize_spectral_density(SpectralDensityModel::ohmic(0.3, 1.0), 6.0, 30, {});
}

} // namespace

TEST_CASE("system validation")
{
    Eigen::Matrix2cd bad;
    bad << 0.0, 1.0, 0.0, 0.0;
    Eigen::Matrix2cd flip;
    flip << 0.0, 1.0, 1.0, 0.0;
    CHECK_NOTHROW(DephasingSystem(1, {0}, {}, plus()));
    CHECK_THROWS_AS(DephasingSystem(1, {0}, {bad}, plus()), ValidationError);
    // sigma_x on a dephased qubit breaks the pure-dephasing structure
    CHECK_THROWS_AS(DephasingSystem(1, {0}, {flip}, plus()), ValidationError);
    CHECK_NOTHROW(DephasingSystem(2, {0}, {Eigen::Matrix2cd::Zero(), flip}, bell()));
    CHECK_THROWS_AS(DephasingSystem(2, {0, 0}, {}, bell()), ValidationError);
    CHECK_THROWS_AS(DephasingSystem(2, {2}, {}, bell()), ValidationError);
    CHECK_THROWS_AS(DephasingSystem(1, {0}, {}, 2.0 * plus()), ValidationError);
    CHECK_THROWS_AS(DephasingSystem(2, {0}, {}, plus()), ValidationError);
    CHECK_THROWS_AS(DephasingSystem(13, {0}, {}, Eigen::VectorXcd::Zero(1 << 13)), ValidationError);
}

TEST_CASE("propagator matches the closed-form product for one qubit")
{
    const TimeGrid g(0.05, 40);
    const auto m = optimal_rule(2.0).apply(small_bath());
    const auto k = build_kernel(m, g);
    const auto rates = integrated_rates(k);
    Eigen::Matrix2cd h;
    h << 0.3, 0.0, 0.0, -0.3;
    const DephasingPropagator prop(DephasingSystem(1, {0}, {h}, plus()), {rates});
    const auto noise = ModeSumSampler(m, g).sample(17);
    const auto tr = prop.propagate({noise});
    const auto inc = noise.increments();
    cplx Z{};
    for (std::size_t j = 0; j < g.n_steps(); ++j)
        Z += inc[j];
    const double T = g.horizon();
    const cplx psi0 = std::exp(Z - rates.phi.back() - I * 0.3 * T) / std::sqrt(2.0);
    const cplx psi1 = std::exp(-Z - rates.phi.back() + I * 0.3 * T) / std::sqrt(2.0);
    CHECK(std::abs(tr.state(g.n_steps())[0] - psi0) < 1e-12);
    CHECK(std::abs(tr.state(g.n_steps())[1] - psi1) < 1e-12);
    CHECK(tr.norms_sq[0] == doctest::Approx(1.0));
    CHECK(povm_density(tr, 7) == doctest::Approx(tr.state(7).squaredNorm()));
}

TEST_CASE("parallel ensemble equals the serial reference and ignores thread count")
{
    const TimeGrid g(0.05, 30);
    const auto m = optimal_rule(1.5).apply(small_bath());
    const auto rates = integrated_rates(build_kernel(m, g));
    Eigen::Matrix2cd hx;
    hx << 0.0, 0.4, 0.4, 0.0;
    const DephasingPropagator prop(DephasingSystem(2, {0}, {Eigen::Matrix2cd::Zero(), hx}, bell()), {rates});
    const std::vector<NoiseSource> src{ModeSumSampler(m, g)};
    const EnsembleOptions o{500, 4, 16};
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto a = run_dephasing_ensemble(prop, src, o);
    omp_set_num_threads(3);
    const auto b = run_dephasing_ensemble(prop, src, o);
    omp_set_num_threads(saved);
    const auto r = reference::run_dephasing_ensemble(prop, src, o);
    for (std::size_t k = 0; k < g.size(); ++k) {
        CHECK(a.rho[k] == b.rho[k]);
        CHECK((a.rho[k] - r.rho[k]).cwiseAbs().maxCoeff() < 1e-13);
    }
}

TEST_CASE("ensemble mean of the coherence matches the grid closed form")
{
    const TimeGrid g(0.05, 40);
    const auto m = restore_rule(2.0).apply(small_bath());
    const auto k = build_kernel(m, g);
    const auto rates = integrated_rates(k);
    const DephasingPropagator prop(DephasingSystem(1, {0}, {}, plus()), {rates});
    const auto avg = run_dephasing_ensemble(prop, {ModeSumSampler(m, g)}, {20000, 8, 32});
    for (std::size_t j : {10u, 25u, 40u}) {
        const auto ga = grid_average(k, rates, j);
        const cplx c = avg.rho[j](0, 1);
        CHECK(std::abs(c.real() - 0.5 * ga.coherence) < 5.0 * avg.se[j](0, 1).real() + 1e-14);
        CHECK(std::abs(avg.mean_norm_sq[j] - 1.0) < 5.0 * avg.se_norm_sq[j] + 1e-14);
    }
}

TEST_CASE("density accumulator merge and trace bookkeeping")
{
    const TimeGrid g(0.1, 5);
    DensityAccumulator a(g, 2), b(g, 2), all(g, 2);
    Rng rng = make_rng(1);
    std::normal_distribution<double> nd;
    for (int i = 0; i < 50; ++i) {
        Eigen::MatrixXcd s(2, 6);
        for (Eigen::Index j = 0; j < s.size(); ++j)
            s(j) = cplx{nd(rng), nd(rng)};
        all.add_states(s);
        (i % 3 ? a : b).add_states(s);
    }
    a.merge(b);
    const auto x = a.result(), y = all.result();
    CHECK(x.n_samples == 50);
    for (std::size_t k = 0; k < g.size(); ++k) {
        CHECK((x.rho[k] - y.rho[k]).cwiseAbs().maxCoeff() < 1e-13);
        CHECK(x.mean_norm_sq[k] == doctest::Approx(y.rho[k].trace().real()));
        CHECK((x.rho[k] - x.rho[k].adjoint()).cwiseAbs().maxCoeff() < 1e-14);
    }
}

TEST_CASE("output writers")
{
    const TimeGrid g(0.1, 3);
    const auto m = small_bath();
    const auto rates = integrated_rates(build_kernel(m, g));
    const DephasingPropagator prop(DephasingSystem(2, {0}, {}, bell()), {rates});
    const auto tr = prop.propagate({ModeSumSampler(m, g).sample(2)});
    std::ostringstream dump, norms, dens;
    write_state_dump(dump, tr);
    CHECK(dump.str().size() == 4 * g.size() * 16);
    write_norms_csv(norms, tr);
    CHECK(norms.str().rfind("t,norm_sq\n", 0) == 0);
    write_density_csv(dens, average_density_matrix({tr, tr}));
    std::istringstream in(dens.str());
    std::string line;
    std::size_t rows = 0;
    std::getline(in, line);
    CHECK(line == "t,i,j,re_rho,im_rho");
    while (std::getline(in, line))
        ++rows;
    CHECK(rows == g.size() * 10);
}
