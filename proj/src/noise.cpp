#include "unravel/noise.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

namespace unravel {

std::vector<cplx> NoiseTrajectory::increments() const
{
    if (cell_integrals)
        return *cell_integrals;
    std::vector<cplx> inc(grid.n_steps());
    const double h = 0.5 * grid.dt();
    for (std::size_t k = 0; k < inc.size(); ++k)
        inc[k] = h * (z_star[k] + z_star[k + 1]);
    return inc;
}

cplx sample_squeezed_amplitude(cplx xi, Rng& rng)
{
    const double r = std::abs(xi);
    if (!(r < 1.0))
        throw ValidationError("squeezed amplitude needs |xi| < 1");
    std::normal_distribution<double> normal(0.0, 1.0);
    const double x = normal(rng) * std::sqrt(0.5 * (1.0 + r));
    const double y = normal(rng) * std::sqrt(0.5 * (1.0 - r));
    // Principal axes of p_xi are rotated by arg(xi) / 2.
    return std::exp(I * (0.5 * std::arg(xi))) * cplx{x, y};
}

std::vector<cplx> sample_mode_amplitudes(const ModeSet& modes, Rng& rng)
{
    std::vector<cplx> z(modes.size());
    for (std::size_t i = 0; i < z.size(); ++i)
        z[i] = sample_squeezed_amplitude(modes[i].xi, rng);
    return z;
}

std::vector<cplx> sample_mode_amplitudes(const ModeSet& modes, std::uint64_t seed)
{
    Rng rng = make_rng(seed);
    return sample_mode_amplitudes(modes, rng);
}

NoiseTrajectory sample_noise_modesum(const ModeSet& modes, const TimeGrid& grid,
                                     std::uint64_t seed)
{
    auto z = sample_mode_amplitudes(modes, seed);
    NoiseTrajectory tr{grid, std::vector<cplx>(grid.size()), seed, z, std::nullopt};
    for (std::size_t k = 0; k < grid.size(); ++k) {
        const double t = grid.time(k);
        cplx acc{};
        for (std::size_t l = 0; l < modes.size(); ++l)
            acc += (-I * modes[l].g * std::exp(I * (modes[l].omega * t))) * std::conj(z[l]);
        tr.z_star[k] = acc;
    }
    return tr;
}

// ---------------------------------------------------------------------------

ModeSumSampler::ModeSumSampler(ModeSet modes, TimeGrid grid)
    : modes_(std::move(modes)), grid_(grid), table_(grid.size() * modes_.size())
{
    const std::size_t m = modes_.size();
#pragma omp parallel for schedule(static)
    for (std::size_t k = 0; k < grid_.size(); ++k) {
        const double t = grid_.time(k);
        for (std::size_t l = 0; l < m; ++l)
            table_[k * m + l] = -I * modes_[l].g * std::exp(I * (modes_[l].omega * t));
    }
}

NoiseTrajectory ModeSumSampler::sample(std::uint64_t seed) const
{
    auto z = sample_mode_amplitudes(modes_, seed);
    std::vector<cplx> zc(z.size());
    std::transform(z.begin(), z.end(), zc.begin(), [](cplx v) { return std::conj(v); });
    NoiseTrajectory tr{grid_, std::vector<cplx>(grid_.size()), seed, std::move(z), std::nullopt};
    const std::size_t m = modes_.size();
    for (std::size_t k = 0; k < grid_.size(); ++k) {
        const cplx* row = table_.data() + k * m;
        cplx acc{};
        for (std::size_t l = 0; l < m; ++l)
            acc += row[l] * zc[l];
        tr.z_star[k] = acc;
    }
    return tr;
}

// ---------------------------------------------------------------------------

namespace {

std::string indefinite_message(double eigenvalue, double largest)
{
    std::ostringstream os;
    os << "augmented noise covariance is indefinite: most negative eigenvalue " << eigenvalue
       << " (largest " << largest << "); the alpha/eta pair is not a valid Gaussian process";
    return os.str();
}

} // namespace

IndefiniteCovariance::IndefiniteCovariance(double eigenvalue, double largest)
    : NumericalError(indefinite_message(eigenvalue, largest)), eigenvalue_(eigenvalue)
{
}

Eigen::MatrixXd CovarianceSampler::augmented_covariance(const CorrelationKernel& kernel)
{
    const auto n = static_cast<Eigen::Index>(kernel.grid.size());
    // <z_t z_s> = conj(eta(t, s)).
    const Eigen::MatrixXcd C = kernel.eta.conjugate();
    const Eigen::MatrixXcd& a = kernel.alpha;
    Eigen::MatrixXd S(2 * n, 2 * n);
    S.topLeftCorner(n, n) = 0.5 * (a.real() + C.real());
    S.bottomRightCorner(n, n) = 0.5 * (a.real() - C.real());
    S.topRightCorner(n, n) = 0.5 * (C.imag() - a.imag());
    S.bottomLeftCorner(n, n) = S.topRightCorner(n, n).transpose();
    return S;
}

CovarianceSampler::CovarianceSampler(const CorrelationKernel& kernel, double tol)
    : grid_(kernel.grid)
{
    const Eigen::MatrixXd S = augmented_covariance(kernel);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S);
    if (es.info() != Eigen::Success)
        throw NumericalError("eigen-decomposition of the noise covariance failed");
    Eigen::VectorXd lambda = es.eigenvalues();
    const double largest = lambda.maxCoeff();
    min_eigenvalue_ = lambda.minCoeff();
    if (min_eigenvalue_ < -tol * std::max(largest, 0.0) || (largest <= 0.0 && min_eigenvalue_ < 0.0))
        throw IndefiniteCovariance(min_eigenvalue_, largest);
    lambda = lambda.cwiseMax(0.0).cwiseSqrt();
    factor_ = es.eigenvectors() * lambda.asDiagonal();
}

NoiseTrajectory CovarianceSampler::sample(std::uint64_t seed) const
{
    Rng rng = make_rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd eps(factor_.cols());
    for (Eigen::Index i = 0; i < eps.size(); ++i)
        eps[i] = normal(rng);
    const Eigen::VectorXd x = factor_ * eps;
    const auto n = static_cast<Eigen::Index>(grid_.size());
    NoiseTrajectory tr{grid_, std::vector<cplx>(grid_.size()), seed, std::nullopt, std::nullopt};
    for (Eigen::Index k = 0; k < n; ++k)
        tr.z_star[static_cast<std::size_t>(k)] = cplx{x[k], -x[n + k]};
    return tr;
}

NoiseTrajectory sample_noise_covariance(const CorrelationKernel& kernel, std::uint64_t seed)
{
    return CovarianceSampler(kernel).sample(seed);
}

// ---------------------------------------------------------------------------

MarkovIncrementSampler::MarkovIncrementSampler(double gamma, TimeGrid grid,
                                               const SqueezingRule& rule)
    : gamma_(gamma), grid_(grid)
{
    if (!(gamma > 0.0))
        throw ValidationError("Markov rate must be > 0");
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
        throw ValidationError("Markov sampling supports only zero, optimal and restore rules");
    }
    if (c != cplx{}) {
        kappa_ = -std::conj(c);
        paired_cells_ = grid.index_of(rule.target_time());
    }
}

NoiseTrajectory MarkovIncrementSampler::sample(std::uint64_t seed) const
{
    Rng rng = make_rng(seed);
    const std::size_t n = grid_.n_steps();
    const double s = std::sqrt(gamma_ * grid_.dt());
    std::vector<cplx> inc(n);
    const std::size_t m = paired_cells_;  // cells j < m pair with m - 1 - j
    const double k_abs = std::abs(kappa_);
    const cplx k_phase = k_abs > 0.0 ? kappa_ / k_abs : cplx{1.0, 0.0};
    for (std::size_t j = 0; j < n; ++j) {
        if (j >= m) {
            inc[j] = s * sample_squeezed_amplitude({}, rng);
            continue;
        }
        const std::size_t partner = m - 1 - j;
        if (partner < j)
            continue;
        if (partner == j) {
            inc[j] = s * sample_squeezed_amplitude(kappa_, rng);
            continue;
        }
        const cplx w = sample_squeezed_amplitude({}, rng);
        const cplx r1 = sample_squeezed_amplitude({}, rng);
        const cplx r2 = sample_squeezed_amplitude({}, rng);
        inc[j] = s * (std::sqrt(k_abs) * w + std::sqrt(1.0 - k_abs) * r1);
        inc[partner] = s * k_phase * (std::sqrt(k_abs) * std::conj(w) + std::sqrt(1.0 - k_abs) * r2);
    }
    NoiseTrajectory tr{grid_, std::vector<cplx>(grid_.size()), seed, std::nullopt, inc};
    for (std::size_t j = 0; j < n; ++j)
        tr.z_star[j] = inc[j] / grid_.dt();
    tr.z_star[n] = tr.z_star[n - 1];
    return tr;
}

// ---------------------------------------------------------------------------

CorrelationAccumulator::CorrelationAccumulator(TimeGrid grid) : grid_(grid)
{
    const auto n = static_cast<Eigen::Index>(grid.size());
    sum_alpha_ = Eigen::MatrixXcd::Zero(n, n);
    sum_eta_ = Eigen::MatrixXcd::Zero(n, n);
    sq_alpha_ = Eigen::MatrixXcd::Zero(n, n);
    sq_eta_ = Eigen::MatrixXcd::Zero(n, n);
    sum_mean_ = Eigen::VectorXcd::Zero(n);
    sq_mean_ = Eigen::VectorXcd::Zero(n);
}

namespace {

inline cplx squares(cplx p)
{
    return {p.real() * p.real(), p.imag() * p.imag()};
}

} // namespace

void CorrelationAccumulator::add(const NoiseTrajectory& trajectory)
{
    if (!(trajectory.grid == grid_))
        throw ValidationError("noise trajectory grid does not match the accumulator");
    const auto n = static_cast<Eigen::Index>(grid_.size());
    const auto& zs = trajectory.z_star;
    for (Eigen::Index j = 0; j < n; ++j) {
        const cplx zsj = zs[static_cast<std::size_t>(j)];
        sum_mean_[j] += zsj;
        sq_mean_[j] += squares(zsj);
        for (Eigen::Index i = 0; i < n; ++i) {
            const cplx zsi = zs[static_cast<std::size_t>(i)];
            const cplx pa = std::conj(zsi) * zsj;  // z_i z*_j
            const cplx pe = zsi * zsj;
            sum_alpha_(i, j) += pa;
            sq_alpha_(i, j) += squares(pa);
            sum_eta_(i, j) += pe;
            sq_eta_(i, j) += squares(pe);
        }
    }
    ++n_;
}

void CorrelationAccumulator::merge(const CorrelationAccumulator& other)
{
    if (!(other.grid_ == grid_))
        throw ValidationError("cannot merge accumulators on different grids");
    n_ += other.n_;
    sum_alpha_ += other.sum_alpha_;
    sum_eta_ += other.sum_eta_;
    sq_alpha_ += other.sq_alpha_;
    sq_eta_ += other.sq_eta_;
    sum_mean_ += other.sum_mean_;
    sq_mean_ += other.sq_mean_;
}

namespace {

cplx standard_error(cplx sum, cplx sq, double n)
{
    const cplx mean = sum / n;
    const double var_re = std::max(0.0, sq.real() / n - mean.real() * mean.real());
    const double var_im = std::max(0.0, sq.imag() / n - mean.imag() * mean.imag());
    const double scale = n / ((n - 1.0) * n);
    return {std::sqrt(var_re * scale), std::sqrt(var_im * scale)};
}

template <class M>
double max_z(const M& est, const M& ref, const M& se)
{
    double worst = 0.0;
    for (Eigen::Index i = 0; i < est.size(); ++i) {
        const cplx d = est(i) - ref(i);
        const cplx s = se(i);
        for (int c = 0; c < 2; ++c) {
            const double dv = std::abs(c == 0 ? d.real() : d.imag());
            const double sv = c == 0 ? s.real() : s.imag();
            if (dv == 0.0)
                continue;
            worst = std::max(worst, sv > 0.0 ? dv / sv : std::numeric_limits<double>::infinity());
        }
    }
    return worst;
}

} // namespace

NoiseEnsembleStats CorrelationAccumulator::stats(const CorrelationKernel& reference) const
{
    if (!(reference.grid == grid_))
        throw ValidationError("reference kernel grid does not match the ensemble");
    if (n_ < 2)
        throw ValidationError("correlation estimates need at least two trajectories");
    const double n = static_cast<double>(n_);
    NoiseEnsembleStats st;
    st.n_samples = n_;
    st.est_alpha = sum_alpha_ / n;
    st.est_eta = sum_eta_ / n;
    st.est_mean = sum_mean_ / n;
    st.se_alpha.resize(sum_alpha_.rows(), sum_alpha_.cols());
    st.se_eta.resize(sum_eta_.rows(), sum_eta_.cols());
    st.se_mean.resize(sum_mean_.size());
    for (Eigen::Index i = 0; i < sum_alpha_.size(); ++i) {
        st.se_alpha(i) = standard_error(sum_alpha_(i), sq_alpha_(i), n);
        st.se_eta(i) = standard_error(sum_eta_(i), sq_eta_(i), n);
    }
    for (Eigen::Index i = 0; i < sum_mean_.size(); ++i)
        st.se_mean(i) = standard_error(sum_mean_(i), sq_mean_(i), n);
    st.reference_alpha = reference.alpha;
    st.reference_eta = reference.eta;
    st.max_alpha_dev = (st.est_alpha - reference.alpha).cwiseAbs().maxCoeff();
    st.max_eta_dev = (st.est_eta - reference.eta).cwiseAbs().maxCoeff();
    return st;
}

double NoiseEnsembleStats::max_alpha_z() const
{
    return max_z(est_alpha, reference_alpha, se_alpha);
}

double NoiseEnsembleStats::max_eta_z() const
{
    return max_z(est_eta, reference_eta, se_eta);
}

double NoiseEnsembleStats::max_mean_z() const
{
    const Eigen::VectorXcd zero = Eigen::VectorXcd::Zero(est_mean.size());
    return max_z(est_mean, zero, se_mean);
}

NoiseEnsembleStats estimate_correlations(const std::vector<NoiseTrajectory>& trajectories,
                                         const CorrelationKernel& reference)
{
    if (trajectories.size() < 2)
        throw ValidationError("correlation estimates need at least two trajectories");
    CorrelationAccumulator acc(trajectories.front().grid);
    for (const auto& tr : trajectories)
        acc.add(tr);
    return acc.stats(reference);
}

void write_trajectory_csv(std::ostream& out, const NoiseTrajectory& trajectory)
{
    out.precision(17);
    out << "t,re_z_star,im_z_star\n";
    for (std::size_t k = 0; k < trajectory.z_star.size(); ++k)
        out << trajectory.grid.time(k) << ',' << trajectory.z_star[k].real() << ','
            << trajectory.z_star[k].imag() << '\n';
}

void write_stats_csv(std::ostream& out, const NoiseEnsembleStats& stats, const TimeGrid& grid)
{
    out.precision(17);
    out << "t,s,re_est_alpha,im_est_alpha,re_est_eta,im_est_eta,re_alpha,im_alpha,re_eta,im_eta\n";
    const auto n = static_cast<Eigen::Index>(grid.size());
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            const cplx ea = stats.est_alpha(i, j), ee = stats.est_eta(i, j);
            const cplx ra = stats.reference_alpha(i, j), re = stats.reference_eta(i, j);
            out << grid.time(static_cast<std::size_t>(i)) << ','
                << grid.time(static_cast<std::size_t>(j)) << ',' << ea.real() << ',' << ea.imag()
                << ',' << ee.real() << ',' << ee.imag() << ',' << ra.real() << ',' << ra.imag()
                << ',' << re.real() << ',' << re.imag() << '\n';
        }
    }
}

std::string stats_summary_json(const NoiseEnsembleStats& stats)
{
    nlohmann::json j;
    j["n_samples"] = stats.n_samples;
    j["max_alpha_dev"] = stats.max_alpha_dev;
    j["max_eta_dev"] = stats.max_eta_dev;
    return j.dump(2);
}

} // namespace unravel
