#include "unravel/entanglement.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

#include <json.hpp>

#include "unravel/rng.hpp"

namespace unravel {

namespace {

Eigen::Matrix4cd sigma_yy()
{
    Eigen::Matrix4cd m = Eigen::Matrix4cd::Zero();
    // sigma_y x sigma_y = antidiagonal (-1, 1, 1, -1)
    m(0, 3) = -1.0;
    m(1, 2) = 1.0;
    m(2, 1) = 1.0;
    m(3, 0) = -1.0;
    return m;
}

Eigen::VectorXcd random_state(std::size_t dim, Rng& rng)
{
    std::normal_distribution<double> nd;
    Eigen::VectorXcd v(static_cast<Eigen::Index>(dim));
    for (Eigen::Index i = 0; i < v.size(); ++i)
        v[i] = cplx{nd(rng), nd(rng)};
    return v / v.norm();
}

Eigen::Matrix2cd random_sl2(Rng& rng)
{
    std::normal_distribution<double> nd;
    for (;;) {
        Eigen::Matrix2cd a;
        for (int i = 0; i < 4; ++i)
            a(i) = cplx{nd(rng), nd(rng)} / std::sqrt(2.0);
        const cplx det = a.determinant();
        // Well-conditioned draws only; rounding in near-singular factors would
        // swamp the invariance being tested.
        if (std::abs(det) < 0.25)
            continue;
        return a / std::sqrt(det);
    }
}

Eigen::VectorXcd apply_local(const Eigen::VectorXcd& psi, const std::vector<Eigen::Matrix2cd>& ops)
{
    const std::size_t n = ops.size();
    Eigen::VectorXcd out = psi;
    const std::size_t d = std::size_t{1} << n;
    for (std::size_t q = 0; q < n; ++q) {
        const std::size_t stride = std::size_t{1} << (n - 1 - q);
        for (std::size_t base = 0; base < d; base += 2 * stride)
            for (std::size_t off = 0; off < stride; ++off) {
                const auto i0 = static_cast<Eigen::Index>(base + off);
                const auto i1 = static_cast<Eigen::Index>(base + off + stride);
                const cplx a = out[i0], b = out[i1];
                out[i0] = ops[q](0, 0) * a + ops[q](0, 1) * b;
                out[i1] = ops[q](1, 0) * a + ops[q](1, 1) * b;
            }
    }
    return out;
}

} // namespace

double concurrence2(const Eigen::VectorXcd& psi)
{
    if (psi.size() != 4)
        throw ValidationError("two-qubit concurrence needs a 4-dimensional state");
    return 2.0 * std::abs(psi[0] * psi[3] - psi[1] * psi[2]);
}

double wootters_concurrence(const Eigen::MatrixXcd& rho, double tol)
{
    if (rho.rows() != 4 || rho.cols() != 4)
        throw ValidationError("Wootters concurrence needs a 4x4 density matrix");
    if ((rho - rho.adjoint()).cwiseAbs().maxCoeff() > tol)
        throw ValidationError("density matrix is not hermitian");
    if (std::abs(rho.trace().real() - 1.0) > tol)
        throw ValidationError("density matrix trace deviates from one");
    const Eigen::Matrix4cd h = 0.5 * (rho + rho.adjoint());
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es(h);
    const Eigen::Vector4d ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    const Eigen::Matrix4cd s = es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().adjoint();
    const Eigen::Matrix4cd yy = sigma_yy();
    const Eigen::Matrix4cd tilde = yy * h.conjugate() * yy;
    const Eigen::Matrix4cd m = s * tilde * s;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix4cd> es2(0.5 * (m + m.adjoint()), Eigen::EigenvaluesOnly);
    Eigen::Vector4d lam = es2.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    std::sort(lam.data(), lam.data() + 4, std::greater<>());
    return std::max(0.0, lam[0] - lam[1] - lam[2] - lam[3]);
}

SLInvariantMeasure concurrence_measure()
{
    return {[](const Eigen::VectorXcd& psi) { return concurrence2(psi); }, "concurrence"};
}

Eigen::Matrix2cd random_sl2(std::uint64_t seed)
{
    Rng rng = make_rng(seed);
    return random_sl2(rng);
}

MeasureAdmission admit_measure(const SLInvariantMeasure& measure, std::size_t n_qubits,
                               std::size_t n_trials, std::uint64_t seed, double tol)
{
    if (!measure.evaluator)
        throw ValidationError("measure has no evaluator");
    Rng rng = make_rng(seed);
    std::normal_distribution<double> nd;
    MeasureAdmission res;
    const std::size_t dim = std::size_t{1} << n_qubits;
    for (std::size_t t = 0; t < n_trials; ++t) {
        const Eigen::VectorXcd psi = random_state(dim, rng);
        const double mu = measure(psi);
        const cplx u{nd(rng), nd(rng)};
        const double scale = std::max(mu, 1e-300);
        res.homogeneity_deviation =
            std::max(res.homogeneity_deviation, std::abs(measure(u * psi) - std::norm(u) * mu) /
                                                    (std::norm(u) * scale));
        std::vector<Eigen::Matrix2cd> ops(n_qubits);
        for (auto& op : ops)
            op = random_sl2(rng);
        res.sl_deviation =
            std::max(res.sl_deviation, std::abs(measure(apply_local(psi, ops)) - mu) / scale);
    }
    res.admitted = res.homogeneity_deviation < tol && res.sl_deviation < tol;
    return res;
}

double scaling_ratio(const RelativeStateTrajectory& trajectory, const SLInvariantMeasure& measure,
                     std::size_t t_index)
{
    const Eigen::VectorXcd p0 = trajectory.state(0);
    const double m0 = measure(p0) / p0.squaredNorm();
    if (!(m0 > 0.0))
        throw ValidationError("scaling ratio undefined: initial state has zero entanglement");
    const Eigen::VectorXcd pt = trajectory.state(t_index);
    return measure(pt) / pt.squaredNorm() / m0;
}

EntanglementReport mean_entanglement_bound(const std::vector<RateTable>& rates,
                                           std::string descriptor)
{
    if (rates.empty())
        throw ValidationError("bound needs at least one channel");
    EntanglementReport rep;
    rep.grid = rates.front().grid;
    rep.xi_rule_descriptor = std::move(descriptor);
    rep.n_channels = rates.size();
    const std::size_t n = rep.grid.size();
    rep.gamma_integral.assign(n, 0.0);
    for (const auto& r : rates) {
        if (!(r.grid == rep.grid))
            throw ValidationError("all channels must share one time grid");
        auto gi = r.gamma_integral();
        for (std::size_t k = 0; k < n; ++k)
            rep.gamma_integral[k] += gi[k];
        rep.channel_gamma_integral.push_back(std::move(gi));
    }
    rep.xbar.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
        // Product of per-channel factors, not exp of the sum, so M identical
        // channels reproduce the single-channel value to the power M.
        double x = 1.0;
        for (const auto& gi : rep.channel_gamma_integral)
            x *= std::exp(-0.5 * gi[k]);
        rep.xbar[k] = x;
    }
    return rep;
}

EntanglementReport mean_entanglement_bound(const std::vector<CorrelationKernel>& kernels,
                                           std::string descriptor)
{
    std::vector<RateTable> rates;
    for (const auto& k : kernels)
        rates.push_back(integrated_rates(k));
    return mean_entanglement_bound(rates, std::move(descriptor));
}

BoundComparison bound_vs_exact(const EntanglementReport& report, const std::vector<double>& exact,
                               double tol)
{
    if (exact.size() != report.xbar.size())
        throw ValidationError("exact reference does not match the report grid");
    BoundComparison c;
    for (std::size_t k = 0; k < exact.size(); ++k) {
        const double gap = report.xbar[k] - exact[k];
        c.t.push_back(report.grid.time(k));
        c.xbar.push_back(report.xbar[k]);
        c.exact.push_back(exact[k]);
        c.gap.push_back(gap);
        c.violation.push_back(gap < -tol);
        c.any_violation = c.any_violation || gap < -tol;
        c.max_abs_gap = std::max(c.max_abs_gap, std::abs(gap));
    }
    return c;
}

Eigen::MatrixXcd dephase_density(const Eigen::MatrixXcd& rho0, std::size_t n_qubits,
                                 const std::vector<std::size_t>& coupled,
                                 const std::vector<cplx>& factors)
{
    const auto d = static_cast<Eigen::Index>(std::size_t{1} << n_qubits);
    if (rho0.rows() != d || rho0.cols() != d)
        throw ValidationError("density matrix does not match the qubit count");
    if (coupled.size() != factors.size())
        throw ValidationError("need one coherence factor per coupled qubit");
    Eigen::MatrixXcd rho = rho0;
    for (Eigen::Index i = 0; i < d; ++i)
        for (Eigen::Index j = 0; j < d; ++j)
            for (std::size_t k = 0; k < coupled.size(); ++k) {
                const std::size_t bit = n_qubits - 1 - coupled[k];
                const auto bi = (static_cast<std::size_t>(i) >> bit) & 1u;
                const auto bj = (static_cast<std::size_t>(j) >> bit) & 1u;
                if (bi != bj)
                    rho(i, j) *= bi == 0 ? factors[k] : std::conj(factors[k]);
            }
    return rho;
}

void write_report_csv(std::ostream& out, const EntanglementReport& report)
{
    out.precision(17);
    out << "t,xbar,exact,gap,gamma_integral\n";
    for (std::size_t k = 0; k < report.xbar.size(); ++k) {
        out << report.grid.time(k) << ',' << report.xbar[k] << ',';
        if (report.exact_reference)
            out << (*report.exact_reference)[k] << ',' << report.xbar[k] - (*report.exact_reference)[k];
        else
            out << ',';
        out << ',' << report.gamma_integral[k] << '\n';
    }
}

std::string report_header_json(const EntanglementReport& report, const std::string& scenario)
{
    nlohmann::json j;
    j["scenario"] = scenario;
    j["xi_rule"] = report.xi_rule_descriptor;
    j["n_channels"] = report.n_channels;
    return j.dump(2);
}

} // namespace unravel
