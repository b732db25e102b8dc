#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unravel/correlations.hpp"
#include "unravel/rng.hpp"

namespace unravel {

/// One realization of z*_t on the grid.
struct NoiseTrajectory {
    TimeGrid grid;
    std::vector<cplx> z_star;  // n_steps + 1 values
    std::uint64_t seed{0};
    std::optional<std::vector<cplx>> mode_amplitudes;  // z_lambda, mode-sum sampling only
    /// int_{t_k}^{t_{k+1}} z*_s ds supplied directly by white-noise (Markov)
    /// sampling; z_star then holds the cell averages as a proxy.
    std::optional<std::vector<cplx>> cell_integrals;

    /// Cell integrals: the supplied ones, or the trapezoid rule on z_star.
    std::vector<cplx> increments() const;
};

/// One draw from p_xi(z): E[z z*] = 1, E[z^2] = xi, E[z] = 0.
cplx sample_squeezed_amplitude(cplx xi, Rng& rng);

std::vector<cplx> sample_mode_amplitudes(const ModeSet& modes, Rng& rng);
std::vector<cplx> sample_mode_amplitudes(const ModeSet& modes, std::uint64_t seed);

/// z*_k = -i sum_lambda g e^{i omega t_k} conj(z_lambda), evaluated directly.
NoiseTrajectory sample_noise_modesum(const ModeSet& modes, const TimeGrid& grid,
                                     std::uint64_t seed);

/// Mode-sum sampling with a precomputed phase table; used by ensembles.
class ModeSumSampler {
public:
    ModeSumSampler(ModeSet modes, TimeGrid grid);

    NoiseTrajectory sample(std::uint64_t seed) const;
    const TimeGrid& grid() const noexcept { return grid_; }
    const ModeSet& modes() const noexcept { return modes_; }

private:
    ModeSet modes_;
    TimeGrid grid_;
    std::vector<cplx> table_;  // row-major (time, mode): -i g e^{i omega t}
};

class IndefiniteCovariance : public NumericalError {
public:
    IndefiniteCovariance(double eigenvalue, double largest);
    double eigenvalue() const noexcept { return eigenvalue_; }

private:
    double eigenvalue_;
};

/// Draws grid values of z_t from the real 2(n+1)-dimensional covariance of
/// (Re z, Im z) implied by alpha and eta. Eigenvalues below
/// -tol * lambda_max are rejected; those in [-tol * lambda_max, 0] are
/// clamped to zero.
class CovarianceSampler {
public:
    explicit CovarianceSampler(const CorrelationKernel& kernel, double tol = 1e-10);

    NoiseTrajectory sample(std::uint64_t seed) const;
    const TimeGrid& grid() const noexcept { return grid_; }
    double min_eigenvalue() const noexcept { return min_eigenvalue_; }

    /// Real covariance of (Re z_0..n, Im z_0..n).
    static Eigen::MatrixXd augmented_covariance(const CorrelationKernel& kernel);

private:
    TimeGrid grid_;
    Eigen::MatrixXd factor_;
    double min_eigenvalue_{0.0};
};

NoiseTrajectory sample_noise_covariance(const CorrelationKernel& kernel, std::uint64_t seed);

/// White-noise cell integrals for the delta-correlated (Markov) kernel:
/// E[conj(dZ_j) dZ_k] = gamma dt delta_jk and E[dZ_j dZ_k] given by the
/// delta eta of the zero, optimal or restore rule. T must lie on the grid.
class MarkovIncrementSampler {
public:
    MarkovIncrementSampler(double gamma, TimeGrid grid, const SqueezingRule& rule);

    NoiseTrajectory sample(std::uint64_t seed) const;
    const TimeGrid& grid() const noexcept { return grid_; }

private:
    double gamma_;
    TimeGrid grid_;
    cplx kappa_{};  // E[dZ_j dZ_partner] / (gamma dt)
    std::size_t paired_cells_{0};
};

struct NoiseEnsembleStats {
    std::size_t n_samples{0};
    Eigen::MatrixXcd est_alpha;  // mean z_i conj(z_j)
    Eigen::MatrixXcd est_eta;    // mean conj(z_i) conj(z_j)
    Eigen::VectorXcd est_mean;   // mean z*_i
    // Standard errors: real part holds SE of the real component, imaginary part of the imaginary.
    Eigen::MatrixXcd se_alpha;
    Eigen::MatrixXcd se_eta;
    Eigen::VectorXcd se_mean;
    double max_alpha_dev{0.0};
    double max_eta_dev{0.0};

    /// Largest |estimate - reference| / SE over real and imaginary components.
    double max_alpha_z() const;
    double max_eta_z() const;
    double max_mean_z() const;

    Eigen::MatrixXcd reference_alpha;
    Eigen::MatrixXcd reference_eta;
};

/// Running sums for second moments; merging is plain addition.
class CorrelationAccumulator {
public:
    explicit CorrelationAccumulator(TimeGrid grid);

    void add(const NoiseTrajectory& trajectory);
    void merge(const CorrelationAccumulator& other);
    std::size_t count() const noexcept { return n_; }

    NoiseEnsembleStats stats(const CorrelationKernel& reference) const;

private:
    TimeGrid grid_;
    std::size_t n_{0};
    Eigen::MatrixXcd sum_alpha_, sum_eta_;
    Eigen::MatrixXcd sq_alpha_, sq_eta_;  // sums of (Re p)^2 + i (Im p)^2
    Eigen::VectorXcd sum_mean_, sq_mean_;
};

NoiseEnsembleStats estimate_correlations(const std::vector<NoiseTrajectory>& trajectories,
                                         const CorrelationKernel& reference);

/// CSV `t,re_z_star,im_z_star`.
void write_trajectory_csv(std::ostream& out, const NoiseTrajectory& trajectory);

/// Kernel-shaped CSV with estimated and reference columns.
void write_stats_csv(std::ostream& out, const NoiseEnsembleStats& stats, const TimeGrid& grid);

/// `{n_samples, max_alpha_dev, max_eta_dev}`.
std::string stats_summary_json(const NoiseEnsembleStats& stats);

} // namespace unravel
