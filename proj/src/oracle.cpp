#include "unravel/oracle.hpp"

#include <cmath>

#include <Eigen/Sparse>
#include <boost/numeric/odeint.hpp>
#include <json.hpp>

namespace unravel {

std::size_t FockBath::dim() const
{
    std::size_t d = 1;
    for (std::size_t i = 0; i < modes.size(); ++i)
        d *= levels();
    return d;
}

void FockBath::validate() const
{
    if (modes.size() == 0 || modes.size() > kMaxEvolutionModes)
        throw ValidationError("Fock bath needs 1.." + std::to_string(kMaxEvolutionModes) + " modes");
    if (n_max < 2)
        throw ValidationError("Fock cutoff n_max must be >= 2");
}

CompositeState vacuum_product(const Eigen::VectorXcd& psi_system, const FockBath& bath)
{
    bath.validate();
    const auto bd = static_cast<Eigen::Index>(bath.dim());
    CompositeState s{Eigen::VectorXcd::Zero(psi_system.size() * bd),
                     static_cast<std::size_t>(psi_system.size()), 0.0};
    for (Eigen::Index i = 0; i < psi_system.size(); ++i)
        s.amplitudes[i * bd] = psi_system[i];
    return s;
}

namespace {

std::size_t mode_stride(const FockBath& bath, std::size_t mode)
{
    std::size_t s = 1;
    for (std::size_t j = mode + 1; j < bath.modes.size(); ++j)
        s *= bath.levels();
    return s;
}

using SpMat = Eigen::SparseMatrix<cplx>;

SpMat creation_operator(const FockBath& bath, std::size_t mode)
{
    const std::size_t d = bath.dim(), stride = mode_stride(bath, mode), lv = bath.levels();
    std::vector<Eigen::Triplet<cplx>> trip;
    for (std::size_t b = 0; b < d; ++b) {
        const std::size_t n = (b / stride) % lv;
        if (n + 1 < lv)
            trip.emplace_back(static_cast<int>(b + stride), static_cast<int>(b),
                              std::sqrt(static_cast<double>(n + 1)));
    }
    SpMat m(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(d));
    m.setFromTriplets(trip.begin(), trip.end());
    return m;
}

using Map = Eigen::Map<Eigen::MatrixXcd>;
using ConstMap = Eigen::Map<const Eigen::MatrixXcd>;

ConstMap bath_view(const CompositeState& s, const FockBath& bath)
{
    return ConstMap(s.amplitudes.data(), static_cast<Eigen::Index>(bath.dim()),
                    static_cast<Eigen::Index>(s.system_dim));
}

void check_state(const CompositeState& s, const FockBath& bath)
{
    if (s.system_dim == 0 || static_cast<std::size_t>(s.amplitudes.size()) != s.system_dim * bath.dim())
        throw ValidationError("composite state size does not match system x bath dimension");
}

// Contract the bath index, last mode first, with one coefficient vector per mode.
Eigen::VectorXcd contract(const CompositeState& s, const FockBath& bath,
                          const std::vector<Eigen::VectorXcd>& coeffs)
{
    const auto lv = static_cast<Eigen::Index>(bath.levels());
    Eigen::VectorXcd cur = s.amplitudes;
    for (std::size_t k = bath.modes.size(); k-- > 0;) {
        Eigen::Map<const Eigen::MatrixXcd> m(cur.data(), lv, cur.size() / lv);
        Eigen::VectorXcd next = m.transpose() * coeffs[k];
        cur = std::move(next);
    }
    return cur;
}

Eigen::VectorXcd coefficient_vector(cplx w, cplx zeta, std::size_t n_max)
{
    const auto c = bargmann_coefficients(w, zeta, n_max);
    return Eigen::Map<const Eigen::VectorXcd>(c.data(), static_cast<Eigen::Index>(c.size()));
}

inline double sinc(double x)
{
    return std::abs(x) < 1e-8 ? 1.0 - x * x / 6.0 : std::sin(x) / x;
}

// int_0^t e^{i omega s} ds
inline cplx phase_integral(double omega, double t)
{
    return std::exp(I * (0.5 * omega * t)) * (t * sinc(0.5 * omega * t));
}

} // namespace

CompositeTrajectory evolve_composite(const Eigen::MatrixXcd& H_S, const Eigen::MatrixXcd& L,
                                     const FockBath& bath, const TimeGrid& grid,
                                     const CompositeState& initial, const EvolveOptions& options)
{
    bath.validate();
    check_state(initial, bath);
    const auto sd = static_cast<Eigen::Index>(initial.system_dim);
    if (H_S.rows() != sd || H_S.cols() != sd || L.rows() != sd || L.cols() != sd)
        throw ValidationError("system operators do not match the system dimension");
    if ((H_S - H_S.adjoint()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, H_S.cwiseAbs().maxCoeff()))
        throw ValidationError("system Hamiltonian is not hermitian");

    const std::size_t m = bath.modes.size();
    std::vector<SpMat> create(m), annihilate(m);
    for (std::size_t k = 0; k < m; ++k) {
        create[k] = creation_operator(bath, k);
        annihilate[k] = create[k].adjoint();
    }
    const Eigen::MatrixXcd Ht = H_S.transpose();
    const Eigen::MatrixXcd Lt = L.transpose();
    const Eigen::MatrixXcd Ldt = L.adjoint().transpose();
    const auto bd = static_cast<Eigen::Index>(bath.dim());

    using State = std::vector<cplx>;
    auto rhs = [&](const State& x, State& dxdt, double t) {
        Eigen::Map<const Eigen::MatrixXcd> X(x.data(), bd, sd);
        Map D(dxdt.data(), bd, sd);
        D.noalias() = X * Ht;
        for (std::size_t k = 0; k < m; ++k) {
            const auto& md = bath.modes[k];
            if (md.g == 0.0)
                continue;
            const cplx ph = std::exp(I * (md.omega * t));
            Eigen::MatrixXcd up = create[k] * X;
            Eigen::MatrixXcd down = annihilate[k] * X;
            D.noalias() += (md.g * ph) * (up * Lt);
            D.noalias() += (md.g * std::conj(ph)) * (down * Ldt);
        }
        D *= -I;
    };

    namespace ode = boost::numeric::odeint;
    State x(initial.amplitudes.data(), initial.amplitudes.data() + initial.amplitudes.size());
    std::vector<double> times(grid.size());
    for (std::size_t k = 0; k < times.size(); ++k)
        times[k] = initial.time + grid.time(k);

    CompositeTrajectory out;
    out.grid = grid;
    out.bath = bath;
    out.system_dim = initial.system_dim;
    out.states.reserve(grid.size());
    const double norm0 = initial.amplitudes.squaredNorm();
    auto observe = [&](const State& s, double) {
        Eigen::VectorXcd v = Eigen::Map<const Eigen::VectorXcd>(s.data(), static_cast<Eigen::Index>(s.size()));
        out.max_norm_drift = std::max(out.max_norm_drift, std::abs(v.squaredNorm() - norm0));
        out.leakage = std::max(out.leakage, mode_leakage({v, initial.system_dim, 0.0}, bath));
        out.states.push_back(std::move(v));
    };
    auto stepper = ode::make_controlled(options.atol, options.rtol, ode::runge_kutta_dopri5<State>());
    ode::integrate_times(stepper, rhs, x, times.begin(), times.end(), grid.dt(), observe);
    if (out.states.size() != grid.size())
        throw NumericalError("composite integrator did not reach every grid time");
    out.leakage_flagged = out.leakage >= options.leakage_threshold;
    return out;
}

double mode_leakage(const CompositeState& state, const FockBath& bath)
{
    check_state(state, bath);
    const std::size_t lv = bath.levels(), d = bath.dim();
    double worst = 0.0;
    for (std::size_t k = 0; k < bath.modes.size(); ++k) {
        const std::size_t stride = mode_stride(bath, k);
        double top = 0.0;
        for (std::size_t s = 0; s < state.system_dim; ++s)
            for (std::size_t b = 0; b < d; ++b)
                if ((b / stride) % lv + 2 >= lv)
                    top += std::norm(state.amplitudes[static_cast<Eigen::Index>(s * d + b)]);
        worst = std::max(worst, top);
    }
    return worst;
}

Eigen::MatrixXcd partial_trace_bath(const CompositeState& state, const FockBath& bath)
{
    check_state(state, bath);
    const auto X = bath_view(state, bath);
    return (X.transpose() * X.conjugate()).eval();
}

Eigen::VectorXcd relative_state_at(const CompositeState& state, const FockBath& bath,
                                   const std::vector<cplx>& w, const std::vector<cplx>& zeta)
{
    check_state(state, bath);
    if (w.size() != bath.modes.size() || zeta.size() != bath.modes.size())
        throw ValidationError("need one projection argument per mode");
    std::vector<Eigen::VectorXcd> coeffs;
    for (std::size_t k = 0; k < w.size(); ++k) {
        if (!(std::abs(zeta[k]) < 1.0))
            throw ValidationError("projection needs |xi| < 1");
        coeffs.push_back(coefficient_vector(w[k], zeta[k], bath.n_max));
    }
    return contract(state, bath, coeffs);
}

Eigen::VectorXcd project_relative_state(const CompositeState& state, const FockBath& bath,
                                        const std::vector<cplx>& z, const std::vector<cplx>& xi)
{
    std::vector<cplx> w(z.size()), zeta(xi.size());
    for (std::size_t k = 0; k < z.size(); ++k)
        w[k] = std::conj(z[k]);
    for (std::size_t k = 0; k < xi.size(); ++k)
        zeta[k] = std::conj(xi[k]);
    return relative_state_at(state, bath, w, zeta);
}

QuadratureResult quadrature_average(const CompositeState& state, const FockBath& bath,
                                    const std::vector<cplx>& xi, std::size_t nodes_per_axis)
{
    check_state(state, bath);
    const std::size_t m = bath.modes.size();
    if (m > kMaxQuadratureModes)
        throw ValidationError("quadrature checks support at most " +
                              std::to_string(kMaxQuadratureModes) + " modes");
    if (xi.size() != m)
        throw ValidationError("need one squeezing value per mode");

    std::vector<std::vector<ComplexNode>> rules;
    std::vector<std::vector<Eigen::VectorXcd>> coeffs(m);
    for (std::size_t k = 0; k < m; ++k) {
        rules.push_back(squeezed_gaussian_rule(xi[k], nodes_per_axis));
        for (const auto& nd : rules.back())
            coeffs[k].push_back(coefficient_vector(std::conj(nd.z), std::conj(xi[k]), bath.n_max));
    }
    const std::size_t per_mode = rules.front().size();
    std::size_t total = 1;
    for (std::size_t k = 0; k < m; ++k)
        total *= per_mode;

    const auto sd = static_cast<Eigen::Index>(state.system_dim);
    constexpr std::size_t n_blocks = 16;
    std::vector<Eigen::MatrixXcd> rho_part(n_blocks, Eigen::MatrixXcd::Zero(sd, sd));
    std::vector<double> id_part(n_blocks, 0.0);
#pragma omp parallel for schedule(dynamic, 1)
    for (std::size_t b = 0; b < n_blocks; ++b) {
        std::vector<Eigen::VectorXcd> pick(m);
        for (std::size_t idx = b * total / n_blocks; idx < (b + 1) * total / n_blocks; ++idx) {
            double w = 1.0;
            std::size_t rem = idx;
            for (std::size_t k = m; k-- > 0;) {
                const std::size_t j = rem % per_mode;
                rem /= per_mode;
                w *= rules[k][j].weight;
                pick[k] = coeffs[k][j];
            }
            const Eigen::VectorXcd psi = contract(state, bath, pick);
            rho_part[b].noalias() += w * psi * psi.adjoint();
            id_part[b] += w * psi.squaredNorm();
        }
    }
    QuadratureResult res;
    res.rho = Eigen::MatrixXcd::Zero(sd, sd);
    double id = 0.0;
    for (std::size_t b = 0; b < n_blocks; ++b) {
        res.rho += rho_part[b];
        id += id_part[b];
    }
    res.identity_residual = id - 1.0;
    res.partial_trace_residual = (res.rho - partial_trace_bath(state, bath)).cwiseAbs().maxCoeff();
    res.n_nodes = total;
    return res;
}

SseResidualReport verify_sse_residual(const CompositeTrajectory& trajectory,
                                      const Eigen::MatrixXcd& H_S, const Eigen::MatrixXcd& L,
                                      const std::vector<std::vector<cplx>>& z_nodes,
                                      const std::vector<cplx>& xi)
{
    const auto& bath = trajectory.bath;
    const std::size_t m = bath.modes.size();
    const std::size_t n = trajectory.grid.size();
    if (n < 5)
        throw ValidationError("residual check needs at least 5 grid points");
    if (xi.size() != m)
        throw ValidationError("need one squeezing value per mode");
    const auto sd = static_cast<Eigen::Index>(trajectory.system_dim);
    const double h = trajectory.grid.dt();

    const Eigen::MatrixXcd Id = Eigen::MatrixXcd::Identity(sd, sd);
    const bool closure = (L * L - Id).cwiseAbs().maxCoeff() < 1e-12 &&
                         (L.adjoint() * L - Id).cwiseAbs().maxCoeff() < 1e-12 &&
                         (H_S * L - L * H_S).cwiseAbs().maxCoeff() < 1e-12;
    const ModeSet squeezed = bath.modes.with_squeezing(xi);

    std::vector<cplx> zeta(m);
    for (std::size_t k = 0; k < m; ++k)
        zeta[k] = std::conj(xi[k]);

    // Contour derivative: exact for polynomials of degree < n_contour.
    constexpr int n_contour = 32;
    constexpr double radius = 0.05;

    SseResidualReport rep;
    rep.closed_form_checked = closure;
    for (const auto& z : z_nodes) {
        if (z.size() != m)
            throw ValidationError("residual node needs one amplitude per mode");
        std::vector<cplx> w(m);
        for (std::size_t k = 0; k < m; ++k)
            w[k] = std::conj(z[k]);

        std::vector<Eigen::VectorXcd> psi(n);
        for (std::size_t t = 0; t < n; ++t)
            psi[t] = relative_state_at(trajectory.at(t), bath, w, zeta);

        for (std::size_t t = 2; t + 2 < n; ++t) {
            const double time = trajectory.grid.time(t);
            const auto state = trajectory.at(t);
            const Eigen::VectorXcd dpsi =
                (-psi[t + 2] + 8.0 * psi[t + 1] - 8.0 * psi[t - 1] + psi[t - 2]) / (12.0 * h);

            Eigen::VectorXcd rhs = -I * (H_S * psi[t]);
            for (std::size_t k = 0; k < m; ++k) {
                Eigen::VectorXcd dw = Eigen::VectorXcd::Zero(sd);
                for (int q = 0; q < n_contour; ++q) {
                    const cplx e = std::exp(I * (2.0 * kPi * q / n_contour));
                    auto ws = w;
                    ws[k] += radius * e;
                    dw += relative_state_at(state, bath, ws, zeta) / e;
                }
                dw /= radius * n_contour;
                const auto& md = bath.modes[k];
                const cplx ph = std::exp(I * (md.omega * time));
                rhs += -I * md.g * ph * (L * (w[k] * psi[t] - zeta[k] * dw));
                rhs += -I * md.g * std::conj(ph) * (L.adjoint() * dw);
            }
            const double scale = std::max(1.0, psi[t].cwiseAbs().maxCoeff());
            rep.mode_resolved = std::max(rep.mode_resolved, (dpsi - rhs).cwiseAbs().maxCoeff() / scale);

            if (closure) {
                cplx zs{};
                for (std::size_t k = 0; k < m; ++k)
                    zs += -I * bath.modes[k].g * std::exp(I * (bath.modes[k].omega * time)) * w[k];
                const cplx ae = analytic_rate_A(squeezed, time) + analytic_rate_E(squeezed, time);
                const Eigen::VectorXcd rhs2 = -I * (H_S * psi[t]) + zs * (L * psi[t]) - ae * psi[t];
                rep.closed_form = std::max(rep.closed_form, (dpsi - rhs2).cwiseAbs().maxCoeff() / scale);
            }
            ++rep.n_points;
        }
    }
    return rep;
}

double decoherence_exponent(const ModeSet& modes, double t)
{
    double g = 0.0;
    for (const auto& md : modes.modes()) {
        const double s = sinc(0.5 * md.omega * t);
        g += 2.0 * md.g * md.g * t * t * s * s;
    }
    return g;
}

cplx analytic_rate_A(const ModeSet& modes, double t)
{
    cplx a{};
    for (const auto& md : modes.modes())
        a += md.g * md.g * std::exp(-I * (md.omega * t)) * phase_integral(md.omega, t);
    return a;
}

cplx analytic_rate_E(const ModeSet& modes, double t)
{
    cplx e{};
    for (const auto& md : modes.modes())
        e -= std::conj(md.xi) * md.g * md.g * std::exp(I * (md.omega * t)) * phase_integral(md.omega, t);
    return e;
}

std::string OracleReport::to_json() const
{
    nlohmann::json j;
    j["scenario"] = scenario;
    j["n_max"] = n_max;
    j["leakage"] = leakage;
    j["leakage_flagged"] = leakage_flagged;
    j["identity_residual"] = identity_residual;
    j["partial_trace_residual"] = partial_trace_residual;
    j["sse_residual"] = sse_residual;
    auto arr = nlohmann::json::array();
    for (const auto& x : xi_values_tested)
        arr.push_back({x.real(), x.imag()});
    j["xi_values_tested"] = arr;
    return j.dump(2);
}

} // namespace unravel
