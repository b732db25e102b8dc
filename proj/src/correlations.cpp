#include "unravel/correlations.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>

namespace unravel {

TimeGrid::TimeGrid(double dt, std::size_t n_steps) : dt_(dt), n_steps_(n_steps)
{
    if (!(dt > 0.0) || !std::isfinite(dt))
        throw ValidationError("time grid needs dt > 0");
    if (n_steps == 0)
        throw ValidationError("time grid needs at least one step");
}

std::size_t TimeGrid::index_of(double t, double tol) const
{
    const double k = std::round(t / dt_);
    if (k < 0.0 || k > static_cast<double>(n_steps_) || std::abs(t / dt_ - k) > tol)
        throw ValidationError("time " + std::to_string(t) + " is not a point of the grid");
    return static_cast<std::size_t>(k);
}

ModeSet::ModeSet(std::vector<Mode> modes, std::optional<double> comb_spacing)
    : modes_(std::move(modes)), comb_spacing_(comb_spacing)
{
    for (const auto& m : modes_) {
        if (!(m.g >= 0.0) || !std::isfinite(m.g))
            throw ValidationError("mode coupling must be finite and >= 0");
        if (!std::isfinite(m.omega))
            throw ValidationError("mode frequency must be finite");
        if (!(std::abs(m.xi) < 1.0))
            throw ValidationError("mode squeezing must satisfy |xi| < 1");
    }
    if (comb_spacing_ && !(*comb_spacing_ > 0.0))
        throw ValidationError("comb spacing must be positive");
}

ModeSet ModeSet::with_squeezing(const std::vector<cplx>& xi) const
{
    if (xi.size() != modes_.size())
        throw ValidationError("squeezing vector size does not match the mode set");
    auto modes = modes_;
    for (std::size_t i = 0; i < modes.size(); ++i)
        modes[i].xi = xi[i];
    return ModeSet(std::move(modes), comb_spacing_);
}

double ModeSet::total_weight() const noexcept
{
    double s = 0.0;
    for (const auto& m : modes_)
        s += m.g * m.g;
    return s;
}

void ModeSet::check_recurrence(double horizon) const
{
    if (!comb_spacing_)
        return;
    const double recurrence = 2.0 * kPi / *comb_spacing_;
    if (!(recurrence > horizon))
        throw ValidationError("grid horizon " + std::to_string(horizon) +
                              " reaches the comb recurrence time " + std::to_string(recurrence) +
                              "; increase n_modes or reduce omega_max");
}

// ---------------------------------------------------------------------------

SpectralDensityModel SpectralDensityModel::markov(double gamma)
{
    SpectralDensityModel m;
    m.kind = Kind::Markov;
    m.rate = gamma;
    m.validate();
    return m;
}

SpectralDensityModel SpectralDensityModel::ohmic(double strength, double cutoff)
{
    SpectralDensityModel m;
    m.kind = Kind::Ohmic;
    m.strength = strength;
    m.cutoff = cutoff;
    m.validate();
    return m;
}

SpectralDensityModel SpectralDensityModel::super_ohmic(double strength, double cutoff)
{
    SpectralDensityModel m = ohmic(strength, cutoff);
    m.kind = Kind::SuperOhmic;
    return m;
}

SpectralDensityModel SpectralDensityModel::custom_table(std::vector<double> omega,
                                                        std::vector<double> j)
{
    SpectralDensityModel m;
    m.kind = Kind::CustomTable;
    m.table_omega = std::move(omega);
    m.table_j = std::move(j);
    m.validate();
    return m;
}

void SpectralDensityModel::validate() const
{
    switch (kind) {
    case Kind::Markov:
        if (!(rate > 0.0))
            throw ValidationError("Markov rate must be > 0");
        break;
    case Kind::Ohmic:
    case Kind::SuperOhmic:
        if (!(strength >= 0.0))
            throw ValidationError("spectral strength must be >= 0");
        if (!(cutoff > 0.0))
            throw ValidationError("cutoff frequency must be > 0");
        break;
    case Kind::CustomTable:
        if (table_omega.size() != table_j.size() || table_omega.size() < 2)
            throw ValidationError("spectral table needs >= 2 matching (omega, J) pairs");
        for (std::size_t i = 0; i < table_j.size(); ++i) {
            if (!(table_j[i] >= 0.0))
                throw ValidationError("spectral table entries must be >= 0");
            if (i > 0 && !(table_omega[i] > table_omega[i - 1]))
                throw ValidationError("spectral table frequencies must increase strictly");
        }
        break;
    }
}

double SpectralDensityModel::density(double omega) const
{
    switch (kind) {
    case Kind::Markov:
        return rate / (2.0 * kPi);
    case Kind::Ohmic:
        return omega > 0.0 ? strength * omega * std::exp(-omega / cutoff) : 0.0;
    case Kind::SuperOhmic:
        return omega > 0.0 ? strength * omega * omega * omega * std::exp(-omega / cutoff) : 0.0;
    case Kind::CustomTable: {
        if (omega < table_omega.front() || omega > table_omega.back())
            return 0.0;
        auto it = std::upper_bound(table_omega.begin(), table_omega.end(), omega);
        if (it == table_omega.end())
            return table_j.back();
        const auto hi = static_cast<std::size_t>(it - table_omega.begin());
        const auto lo = hi - 1;
        const double w = (omega - table_omega[lo]) / (table_omega[hi] - table_omega[lo]);
        return (1.0 - w) * table_j[lo] + w * table_j[hi];
    }
    }
    return 0.0;
}

// ---------------------------------------------------------------------------

CorrelationKernel CorrelationKernel::from_matrices(const TimeGrid& grid, Eigen::MatrixXcd alpha,
                                                   Eigen::MatrixXcd eta, double tol)
{
    const auto n = static_cast<Eigen::Index>(grid.size());
    if (alpha.rows() != n || alpha.cols() != n || eta.rows() != n || eta.cols() != n)
        throw ValidationError("kernel matrices must be (n_steps+1) square");
    const double scale = std::max({1.0, alpha.cwiseAbs().maxCoeff(), eta.cwiseAbs().maxCoeff()});
    if ((alpha - alpha.adjoint()).cwiseAbs().maxCoeff() > tol * scale)
        throw ValidationError("alpha must be hermitian");
    if ((eta - eta.transpose()).cwiseAbs().maxCoeff() > tol * scale)
        throw ValidationError("eta must be symmetric");
    return CorrelationKernel{grid, std::move(alpha), std::move(eta)};
}

namespace {

CorrelationKernel expand(const TimeGrid& grid, const std::vector<cplx>& lag,
                         const std::vector<cplx>& sum)
{
    const auto n = static_cast<Eigen::Index>(grid.size());
    CorrelationKernel k{grid, Eigen::MatrixXcd(n, n), Eigen::MatrixXcd(n, n)};
#pragma omp parallel for schedule(static)
    for (Eigen::Index j = 0; j < n; ++j) {
        for (Eigen::Index i = 0; i < n; ++i) {
            k.alpha(i, j) = i >= j ? lag[static_cast<std::size_t>(i - j)]
                                   : std::conj(lag[static_cast<std::size_t>(j - i)]);
            k.eta(i, j) = sum[static_cast<std::size_t>(i + j)];
        }
    }
    return k;
}

} // namespace

CorrelationKernel CorrelationKernel::from_functions(const TimeGrid& grid,
                                                    const std::function<cplx(double)>& alpha_of_lag,
                                                    const std::function<cplx(double)>& eta_of_sum)
{
    const std::size_t n = grid.size();
    std::vector<cplx> lag(n), sum(2 * n - 1);
    for (std::size_t k = 0; k < n; ++k)
        lag[k] = alpha_of_lag(grid.time(k));
    if (std::abs(lag[0].imag()) > 1e-12 * std::max(1.0, std::abs(lag[0])))
        throw ValidationError("alpha(0) must be real");
    lag[0] = lag[0].real();
    for (std::size_t m = 0; m < sum.size(); ++m)
        sum[m] = eta_of_sum(grid.time(m));
    return expand(grid, lag, sum);
}

ModeSet discretize_spectral_density(const SpectralDensityModel& model, double omega_max,
                                    std::size_t n_modes,
                                    const std::function<cplx(double)>& squeezing_rule)
{
    model.validate();
    if (!(omega_max > 0.0))
        throw ValidationError("omega_max must be > 0");
    if (n_modes == 0)
        throw ValidationError("n_modes must be >= 1");
    const double d_omega = omega_max / static_cast<double>(n_modes);
    std::vector<Mode> modes(n_modes);
    for (std::size_t k = 0; k < n_modes; ++k) {
        Mode& m = modes[k];
        m.omega = (static_cast<double>(k) + 0.5) * d_omega;
        m.g = std::sqrt(model.density(m.omega) * d_omega);
        m.xi = squeezing_rule ? squeezing_rule(m.omega) : cplx{};
        if (!(std::abs(m.xi) < 1.0))
            throw ValidationError("squeezing rule produced |xi| >= 1 at omega = " +
                                  std::to_string(m.omega));
    }
    return ModeSet(std::move(modes), d_omega);
}

CorrelationKernel build_kernel(const ModeSet& modes, const TimeGrid& grid)
{
    modes.check_recurrence(grid.horizon());
    const std::size_t n = grid.size();
    std::vector<cplx> lag(n), sum(2 * n - 1);
    const auto& ms = modes.modes();
#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < 2 * n - 1; ++k) {
        const double t = grid.time(k);
        cplx a{}, e{};
        for (const auto& m : ms) {
            const double g2 = m.g * m.g;
            const cplx ph = std::exp(I * (m.omega * t));
            if (k < n)
                a += g2 * std::conj(ph);
            e -= std::conj(m.xi) * g2 * ph;
        }
        if (k < n)
            lag[k] = a;
        sum[k] = e;
    }
    return expand(grid, lag, sum);
}

namespace reference {

CorrelationKernel build_kernel(const ModeSet& modes, const TimeGrid& grid)
{
    modes.check_recurrence(grid.horizon());
    const auto n = static_cast<Eigen::Index>(grid.size());
    CorrelationKernel k{grid, Eigen::MatrixXcd::Zero(n, n), Eigen::MatrixXcd::Zero(n, n)};
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double t = grid.time(static_cast<std::size_t>(i));
            const double s = grid.time(static_cast<std::size_t>(j));
            for (const auto& m : modes.modes()) {
                const double g2 = m.g * m.g;
                k.alpha(i, j) += g2 * std::exp(-I * (m.omega * (t - s)));
                k.eta(i, j) -= std::conj(m.xi) * g2 * std::exp(I * (m.omega * (t + s)));
            }
        }
    }
    return k;
}

} // namespace reference

// ---------------------------------------------------------------------------

RateTable integrated_rates(const CorrelationKernel& kernel)
{
    const std::size_t n = kernel.grid.size();
    const double dt = kernel.grid.dt();
    RateTable r{kernel.grid, std::vector<cplx>(n), std::vector<cplx>(n), std::vector<double>(n),
                std::vector<cplx>(n)};
    for (std::size_t i = 0; i < n; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        cplx a{}, e{};
        if (i > 0) {
            a = 0.5 * (kernel.alpha(ii, 0) + kernel.alpha(ii, ii));
            e = 0.5 * (kernel.eta(ii, 0) + kernel.eta(ii, ii));
            for (Eigen::Index j = 1; j < ii; ++j) {
                a += kernel.alpha(ii, j);
                e += kernel.eta(ii, j);
            }
            a *= dt;
            e *= dt;
        }
        r.A[i] = a;
        r.E[i] = e;
        r.gamma[i] = 4.0 * (a + e).real();
        if (i > 0)
            r.phi[i] = r.phi[i - 1] + 0.5 * dt * (r.A[i - 1] + r.E[i - 1] + a + e);
    }
    return r;
}

std::vector<double> RateTable::gamma_integral() const
{
    std::vector<double> g(phi.size());
    for (std::size_t k = 0; k < g.size(); ++k)
        g[k] = 4.0 * phi[k].real();
    return g;
}

RateTable markov_rates(double gamma, const TimeGrid& grid, const SqueezingRule& rule)
{
    if (!(gamma > 0.0))
        throw ValidationError("Markov rate must be > 0");
    const std::size_t n = grid.size();
    RateTable r{grid, std::vector<cplx>(n, cplx{0.5 * gamma, 0.0}), std::vector<cplx>(n),
                std::vector<double>(n), std::vector<cplx>(n)};

    // eta = -conj(c) gamma delta(t + s - T) for xi(omega) = c exp(i omega T).
    cplx c{};
    switch (rule.kind()) {
    case SqueezingRule::Kind::Zero:
        break;
    case SqueezingRule::Kind::OptimalAt:
        c = -rule.magnitude();
        break;
    case SqueezingRule::Kind::RestoreAt:
        c = rule.magnitude();
        break;
    default:
        throw ValidationError("Markov kernels support only zero, optimal and restore rules");
    }
    const cplx step = -std::conj(c) * gamma;
    const double lo = 0.5 * rule.target_time(), hi = rule.target_time();
    const double tol = 1e-12 * std::max(1.0, hi);
    for (std::size_t i = 0; i < n; ++i) {
        const double t = grid.time(i);
        double w = 0.0;
        if (t > lo + tol && t < hi - tol)
            w = 1.0;
        else if (std::abs(t - lo) <= tol || std::abs(t - hi) <= tol)
            w = hi > 0.0 ? 0.5 : 0.0;
        r.E[i] = step * w;
        r.gamma[i] = 4.0 * (r.A[i] + r.E[i]).real();
        const double covered = std::clamp(t, lo, hi) - lo;
        r.phi[i] = 0.5 * gamma * t + step * covered;
    }
    return r;
}

void write_kernel_csv(std::ostream& out, const CorrelationKernel& kernel)
{
    out.precision(17);
    out << "t,s,re_alpha,im_alpha,re_eta,im_eta\n";
    const auto n = static_cast<Eigen::Index>(kernel.grid.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const cplx a = kernel.alpha(i, j), e = kernel.eta(i, j);
            out << kernel.grid.time(static_cast<std::size_t>(i)) << ','
                << kernel.grid.time(static_cast<std::size_t>(j)) << ',' << a.real() << ','
                << a.imag() << ',' << e.real() << ',' << e.imag() << '\n';
        }
    }
}

void write_rates_csv(std::ostream& out, const RateTable& rates)
{
    out.precision(17);
    out << "t,re_A,im_A,re_E,im_E,gamma,gamma_integral\n";
    const auto gi = rates.gamma_integral();
    for (std::size_t k = 0; k < rates.A.size(); ++k)
        out << rates.grid.time(k) << ',' << rates.A[k].real() << ',' << rates.A[k].imag() << ','
            << rates.E[k].real() << ',' << rates.E[k].imag() << ',' << rates.gamma[k] << ','
            << gi[k] << '\n';
}

} // namespace unravel
