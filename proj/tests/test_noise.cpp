#include <doctest.h>

#include <cmath>

#include <omp.h>

#include "unravel/ensemble.hpp"
#include "unravel/noise.hpp"
#include "unravel/optimize.hpp"

using namespace unravel;

TEST_CASE("squeezed amplitude moments")
{
    const cplx xi = std::polar(0.8, 1.1);
    Rng rng = make_rng(42);
    const int n = 200000;
    cplx m1{}, m2{};
    double mm = 0.0, mm_sq = 0.0;
    for (int i = 0; i < n; ++i) {
        const cplx z = sample_squeezed_amplitude(xi, rng);
        m1 += z;
        m2 += z * z;
        mm += std::norm(z);
        mm_sq += std::norm(z) * std::norm(z);
    }
    m1 /= n;
    m2 /= n;
    mm /= n;
    const double se = std::sqrt((mm_sq / n - mm * mm) / n);
    CHECK(std::abs(mm - 1.0) < 5.0 * se);
    CHECK(std::abs(m2 - xi) < 0.02);
    CHECK(std::abs(m1) < 0.01);
}

TEST_CASE("samplers are deterministic in the seed")
{
    const ModeSet m({{0.5, 1.0, cplx{0.3, 0.2}}, {0.2, 2.0, {}}});
    const TimeGrid g(0.1, 20);
    const ModeSumSampler ms(m, g);
    const auto a = ms.sample(9), b = ms.sample(9), c = ms.sample(10);
    CHECK(a.z_star == b.z_star);
    CHECK(a.z_star != c.z_star);
    // Table-driven sampler and the direct evaluation agree.
    const auto d = sample_noise_modesum(m, g, 9);
    for (std::size_t k = 0; k < g.size(); ++k)
        CHECK(std::abs(a.z_star[k] - d.z_star[k]) < 1e-13);
    const CovarianceSampler cs(build_kernel(m, g));
    CHECK(cs.sample(3).z_star == cs.sample(3).z_star);
}

TEST_CASE("indefinite covariance is refused")
{
    const TimeGrid g(0.1, 4);
    const auto n = static_cast<Eigen::Index>(g.size());
    Eigen::MatrixXcd a = Eigen::MatrixXcd::Identity(n, n);
    Eigen::MatrixXcd e = 2.0 * Eigen::MatrixXcd::Identity(n, n);
    const auto k = CorrelationKernel::from_matrices(g, a, e);
    CHECK_THROWS_AS(CovarianceSampler{k}, IndefiniteCovariance);
    CHECK_THROWS_AS(CovarianceSampler{k}, NumericalError);
}

TEST_CASE("augmented covariance is positive semidefinite for a physical kernel")
{
    const auto m = optimal_rule(1.0).apply(
        discretize_spectral_density(SpectralDensityModel::ohmic(0.3, 1.0), 8.0, 40, {}));
    const auto k = build_kernel(m, TimeGrid(0.05, 20));
    const Eigen::MatrixXd c = CovarianceSampler::augmented_covariance(k);
    CHECK((c - c.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
    CHECK(es.eigenvalues().minCoeff() > -1e-10 * es.eigenvalues().maxCoeff());
    CovarianceSampler cs(k);
    CHECK(cs.min_eigenvalue() > -1e-10 * es.eigenvalues().maxCoeff());
}

TEST_CASE("covariance sampler reproduces the kernel it was built from")
{
    const ModeSet m({{0.6, 0.8, std::polar(0.5, 0.3)}, {0.4, 1.7, cplx{-0.3, 0.6}}});
    const TimeGrid g(0.25, 6);
    const auto k = build_kernel(m, g);
    const auto st = sample_noise_ensemble(CovarianceSampler(k), 40000, 5).stats(k);
    CHECK(st.max_alpha_z() < 4.5);
    CHECK(st.max_eta_z() < 4.5);
    CHECK(st.max_mean_z() < 4.5);
}

TEST_CASE("noise ensembles do not depend on the thread count")
{
    const ModeSet m({{0.5, 1.0, cplx{0.3, 0.2}}, {0.2, 2.0, {}}});
    const TimeGrid g(0.1, 10);
    const NoiseSource src = ModeSumSampler(m, g);
    const int saved = omp_get_max_threads();
    omp_set_num_threads(1);
    const auto one = sample_noise_ensemble(src, 3000, 11, 16).stats(build_kernel(m, g));
    omp_set_num_threads(3);
    const auto three = sample_noise_ensemble(src, 3000, 11, 16).stats(build_kernel(m, g));
    omp_set_num_threads(saved);
    CHECK(one.est_alpha == three.est_alpha);
    CHECK(one.est_eta == three.est_eta);
}

TEST_CASE("accumulator merge equals a single pass")
{
    const ModeSet m({{0.5, 1.0, cplx{0.3, 0.2}}});
    const TimeGrid g(0.2, 5);
    const ModeSumSampler s(m, g);
    CorrelationAccumulator all(g), a(g), b(g);
    for (std::uint64_t i = 0; i < 100; ++i) {
        const auto t = s.sample(i);
        all.add(t);
        (i < 37 ? a : b).add(t);
    }
    a.merge(b);
    const auto k = build_kernel(m, g);
    CHECK((all.stats(k).est_alpha - a.stats(k).est_alpha).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(a.count() == 100);
}

TEST_CASE("Markov increments have white second moments")
{
    const double gamma = 0.8;
    const TimeGrid g(0.05, 40);
    const double T = 1.2;
    const MarkovIncrementSampler zs(gamma, g, SqueezingRule::zero());
    const MarkovIncrementSampler os(gamma, g, optimal_rule(T));
    const int n = 40000;
    double var = 0.0;
    cplx pair_zero{}, pair_opt{};
    const std::size_t j = g.index_of(0.4), partner = g.index_of(T - 0.4) - 1;
    for (int i = 0; i < n; ++i) {
        const auto dz = zs.sample(static_cast<std::uint64_t>(i)).increments();
        var += std::norm(dz[3]);
        pair_zero += dz[j] * dz[partner];
        const auto dq = os.sample(static_cast<std::uint64_t>(i)).increments();
        pair_opt += dq[j] * dq[partner];
    }
    var /= n;
    CHECK(var == doctest::Approx(gamma * g.dt()).epsilon(0.03));
    CHECK(std::abs(pair_zero / double(n)) < 0.03 * gamma * g.dt());
    // Cells mirrored about T/2 carry the delta eta: |E[dZ dZ']| = (1 - eps) gamma dt.
    CHECK(std::abs(pair_opt / double(n)) == doctest::Approx((1.0 - kDefaultEpsilon) * gamma * g.dt()).epsilon(0.05));
}
