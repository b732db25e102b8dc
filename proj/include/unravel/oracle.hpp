#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unravel/quadrature.hpp"
#include "unravel/types.hpp"

namespace unravel {

inline constexpr std::size_t kMaxEvolutionModes = 4;
inline constexpr std::size_t kMaxQuadratureModes = 2;

/// Truncated Fock space, occupations 0..n_max per mode.
struct FockBath {
    ModeSet modes;
    std::size_t n_max{20};

    std::size_t levels() const noexcept { return n_max + 1; }
    std::size_t dim() const;
    void validate() const;
};

/// System x bath amplitudes. Flat index s * bath_dim + b, where b runs over
/// mode occupations with mode 0 most significant.
struct CompositeState {
    Eigen::VectorXcd amplitudes;
    std::size_t system_dim{0};
    double time{0.0};
};

CompositeState vacuum_product(const Eigen::VectorXcd& psi_system, const FockBath& bath);

struct EvolveOptions {
    double rtol{1e-10};
    double atol{1e-12};
    double leakage_threshold{1e-6};
};

struct CompositeTrajectory {
    TimeGrid grid;
    FockBath bath;
    std::size_t system_dim{0};
    std::vector<Eigen::VectorXcd> states;  // one per grid time
    double max_norm_drift{0.0};
    double leakage{0.0};  // max over times and modes of the top-two-level population
    bool leakage_flagged{false};

    CompositeState at(std::size_t k) const { return {states.at(k), system_dim, grid.time(k)}; }
};

/// i dPsi/dt = [H_S + sum g (L b^dag e^{i omega t} + L^dag b e^{-i omega t})] Psi
/// with adaptive Dormand-Prince stepping, stopping exactly on grid times.
CompositeTrajectory evolve_composite(const Eigen::MatrixXcd& H_S, const Eigen::MatrixXcd& L,
                                     const FockBath& bath, const TimeGrid& grid,
                                     const CompositeState& initial,
                                     const EvolveOptions& options = {});

/// Largest population in the top two Fock levels of any mode.
double mode_leakage(const CompositeState& state, const FockBath& bath);

Eigen::MatrixXcd partial_trace_bath(const CompositeState& state, const FockBath& bath);

/// <<z, xi|Psi> per mode: contraction with c_n(conj z, conj xi).
Eigen::VectorXcd project_relative_state(const CompositeState& state, const FockBath& bath,
                                        const std::vector<cplx>& z, const std::vector<cplx>& xi);

/// Same contraction as a function of w = conj(z) and zeta = conj(xi), the
/// arguments the relative state is analytic in.
Eigen::VectorXcd relative_state_at(const CompositeState& state, const FockBath& bath,
                                   const std::vector<cplx>& w, const std::vector<cplx>& zeta);

struct QuadratureResult {
    Eigen::MatrixXcd rho;
    double partial_trace_residual{0.0};  // max-entry |rho - tr_B|
    double identity_residual{0.0};       // sum w ||psi||^2 - 1
    std::size_t n_nodes{0};
};

QuadratureResult quadrature_average(const CompositeState& state, const FockBath& bath,
                                    const std::vector<cplx>& xi, std::size_t nodes_per_axis);

struct SseResidualReport {
    double mode_resolved{0.0};  // both sides of the mode-space equation
    double closed_form{0.0};    // dephasing closure with analytic A + E; 0 if not applicable
    bool closed_form_checked{false};
    std::size_t n_points{0};

    double max() const { return std::max(mode_resolved, closed_form); }
};

/// Assembles the linear SSE at every interior grid time and every node:
///   d psi/dt = -i H_S psi - i sum g e^{i omega t} L (w psi - zeta d psi/dw)
///              - i sum g e^{-i omega t} L^dag d psi/dw,
/// with 4th-order central time differences and contour (Cauchy) derivatives
/// in w. When L^2 = L^dag L = 1 and [H_S, L] = 0 it also checks
///   d psi/dt = -i H_S psi + L z*_t psi - (A(t) + E(t)) psi.
/// Residuals are max-norm, scaled by max(1, ||psi||_inf).
SseResidualReport verify_sse_residual(const CompositeTrajectory& trajectory,
                                      const Eigen::MatrixXcd& H_S, const Eigen::MatrixXcd& L,
                                      const std::vector<std::vector<cplx>>& z_nodes,
                                      const std::vector<cplx>& xi);

/// Exact decoherence exponent of sigma_z coupling: Gamma(t) = 4 sum g^2 (1 - cos omega t) / omega^2.
double decoherence_exponent(const ModeSet& modes, double t);

/// Analytic one-channel A(t) and E(t) for a discrete mode set.
cplx analytic_rate_A(const ModeSet& modes, double t);
cplx analytic_rate_E(const ModeSet& modes, double t);

struct OracleReport {
    std::string scenario;
    std::size_t n_max{0};
    double leakage{0.0};
    double identity_residual{0.0};
    double partial_trace_residual{0.0};
    double sse_residual{0.0};
    std::vector<cplx> xi_values_tested;
    bool leakage_flagged{false};

    std::string to_json() const;
};

} // namespace unravel
