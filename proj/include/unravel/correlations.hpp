#pragma once

#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "unravel/squeezing.hpp"
#include "unravel/types.hpp"

namespace unravel {

/// Zero-temperature spectral density J(omega). Power-law models use
/// J = strength * omega^p * exp(-omega / cutoff) with p = 1 (Ohmic) or
/// p = 3 (super-Ohmic). Markov is flat, J = rate / (2 pi).
struct SpectralDensityModel {
    enum class Kind { Markov, Ohmic, SuperOhmic, CustomTable };

    Kind kind{Kind::Ohmic};
    double rate{0.0};      // Markov gamma
    double strength{0.0};  // power-law prefactor
    double cutoff{1.0};    // omega_d
    std::vector<double> table_omega;  // CustomTable, strictly increasing
    std::vector<double> table_j;

    static SpectralDensityModel markov(double gamma);
    static SpectralDensityModel ohmic(double strength, double cutoff);
    static SpectralDensityModel super_ohmic(double strength, double cutoff);
    static SpectralDensityModel custom_table(std::vector<double> omega, std::vector<double> j);

    void validate() const;

    /// Piecewise-linear in the table case, zero outside the table range.
    double density(double omega) const;
};

/// Hermitian kernel alpha(t_i, s_j) and non-hermitian kernel eta(t_i, s_j)
/// on a time grid. Both matrices are (n+1) x (n+1); alpha is stored on the
/// full square (its upper triangle is the hermitian extension).
struct CorrelationKernel {
    TimeGrid grid;
    Eigen::MatrixXcd alpha;
    Eigen::MatrixXcd eta;

    /// Build from explicit matrices; checks shapes, hermiticity of alpha and
    /// symmetry of eta to `tol` relative to the largest entry.
    static CorrelationKernel from_matrices(const TimeGrid& grid, Eigen::MatrixXcd alpha,
                                           Eigen::MatrixXcd eta, double tol = 1e-10);

    /// Build from a stationary alpha(tau) and an eta that depends on t + s.
    static CorrelationKernel from_functions(const TimeGrid& grid,
                                           const std::function<cplx(double)>& alpha_of_lag,
                                           const std::function<cplx(double)>& eta_of_sum);
};

/// Integrated rates A(t) = int_0^t alpha(t,s) ds, E(t) = int_0^t eta(t,s) ds,
/// the dephasing rate gamma(t) = 4 Re[A(t) + E(t)] and the cumulative
/// phi(t) = int_0^t (A + E) ds that the propagator and the bound consume.
struct RateTable {
    TimeGrid grid;
    std::vector<cplx> A;
    std::vector<cplx> E;
    std::vector<double> gamma;
    std::vector<cplx> phi;

    /// int_0^t gamma ds = 4 Re phi(t).
    std::vector<double> gamma_integral() const;
};

ModeSet discretize_spectral_density(const SpectralDensityModel& model, double omega_max,
                                    std::size_t n_modes,
                                    const std::function<cplx(double)>& squeezing_rule);

/// Production kernel: lag and sum arrays filled in parallel, then expanded.
CorrelationKernel build_kernel(const ModeSet& modes, const TimeGrid& grid);

RateTable integrated_rates(const CorrelationKernel& kernel);

/// Delta-correlated kernel alpha = gamma delta(t - s); never materialized.
/// A(t) = gamma / 2 (also at t = 0, the limit from above). E(t) is supported
/// for the Zero, OptimalAt and RestoreAt rules, whose eta is a delta on the
/// line t + s = T, so E is a step on [T/2, T] (half value on its edges); phi
/// is integrated analytically rather than by trapezoid.
RateTable markov_rates(double gamma, const TimeGrid& grid, const SqueezingRule& rule);

/// CSV `t,s,re_alpha,im_alpha,re_eta,im_eta`, lower triangle s <= t, row-major.
void write_kernel_csv(std::ostream& out, const CorrelationKernel& kernel);

/// CSV `t,re_A,im_A,re_E,im_E,gamma,gamma_integral`.
void write_rates_csv(std::ostream& out, const RateTable& rates);

namespace reference {

/// Direct per-entry mode sums; O(n^2 * modes). Kept for testing.
CorrelationKernel build_kernel(const ModeSet& modes, const TimeGrid& grid);

} // namespace reference

} // namespace unravel
