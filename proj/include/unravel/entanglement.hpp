#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "unravel/correlations.hpp"
#include "unravel/sse.hpp"

namespace unravel {

/// |psi^T (sigma_y x sigma_y) psi| for an unnormalized two-qubit vector.
double concurrence2(const Eigen::VectorXcd& psi);

/// Mixed-state concurrence from the spectrum of rho (sy x sy) rho* (sy x sy).
/// Rejects non-hermitian input and |tr rho - 1| > tol.
double wootters_concurrence(const Eigen::MatrixXcd& rho, double tol = 1e-8);

/// Pluggable pure-state measure: degree-two homogeneous and invariant under
/// local determinant-one maps. Admission is checked by `admit_measure`.
struct SLInvariantMeasure {
    std::function<double(const Eigen::VectorXcd&)> evaluator;
    std::string name;

    double operator()(const Eigen::VectorXcd& psi) const { return evaluator(psi); }
};

SLInvariantMeasure concurrence_measure();

struct MeasureAdmission {
    double homogeneity_deviation{0.0};  // max relative |mu(u psi) - |u|^2 mu(psi)|
    double sl_deviation{0.0};           // max relative |mu(A1 x .. x AN psi) - mu(psi)|
    bool admitted{false};
};

/// Random states, random complex scalars and random local SL(2, C) factors.
MeasureAdmission admit_measure(const SLInvariantMeasure& measure, std::size_t n_qubits,
                               std::size_t n_trials, std::uint64_t seed, double tol = 1e-10);

/// Random element of SL(2, C).
Eigen::Matrix2cd random_sl2(std::uint64_t seed);

/// mu(psi_t / ||psi_t||) / mu(psi_0 / ||psi_0||).
double scaling_ratio(const RelativeStateTrajectory& trajectory, const SLInvariantMeasure& measure,
                     std::size_t t_index);

struct EntanglementReport {
    TimeGrid grid;
    std::vector<double> xbar;
    std::string xi_rule_descriptor;
    std::vector<double> gamma_integral;                 // summed over channels
    std::vector<std::vector<double>> channel_gamma_integral;
    std::optional<std::vector<double>> exact_reference;
    std::size_t n_channels{0};
};

/// xbar(t) = prod_k exp(-1/2 int_0^t gamma_k) = prod_k exp(-2 Re phi_k(t)).
EntanglementReport mean_entanglement_bound(const std::vector<RateTable>& rates,
                                           std::string descriptor = {});
EntanglementReport mean_entanglement_bound(const std::vector<CorrelationKernel>& kernels,
                                           std::string descriptor = {});

struct BoundComparison {
    std::vector<double> t, xbar, exact, gap;
    std::vector<bool> violation;  // gap < -tol
    bool any_violation{false};
    double max_abs_gap{0.0};
};

BoundComparison bound_vs_exact(const EntanglementReport& report, const std::vector<double>& exact,
                               double tol = 1e-9);

/// Multiplies every coherence between basis states that differ on coupled
/// qubit k by factor[k]; the exact reduced state of local pure dephasing.
Eigen::MatrixXcd dephase_density(const Eigen::MatrixXcd& rho0, std::size_t n_qubits,
                                 const std::vector<std::size_t>& coupled,
                                 const std::vector<cplx>& factors);

/// CSV `t,xbar,exact,gap,gamma_integral`; exact and gap are empty without a reference.
void write_report_csv(std::ostream& out, const EntanglementReport& report);

/// `{scenario, xi_rule, n_channels}`.
std::string report_header_json(const EntanglementReport& report, const std::string& scenario);

} // namespace unravel
