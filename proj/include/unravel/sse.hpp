#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <vector>

#include <Eigen/Dense>

#include "unravel/correlations.hpp"
#include "unravel/noise.hpp"

namespace unravel {

inline constexpr std::size_t kDefaultMaxQubits = 12;

/// N qubits, M of them dephased by sigma_z through their own bath. Basis
/// index bit (N - 1 - q) holds qubit q, so qubit 0 is the most significant
/// factor of the Kronecker product.
class DephasingSystem {
public:
    DephasingSystem(std::size_t n_qubits, std::vector<std::size_t> coupled,
                    std::vector<Eigen::Matrix2cd> local_hamiltonians, Eigen::VectorXcd initial_state,
                    std::size_t max_qubits = kDefaultMaxQubits);

    std::size_t n_qubits() const noexcept { return n_qubits_; }
    std::size_t dim() const noexcept { return std::size_t{1} << n_qubits_; }
    const std::vector<std::size_t>& coupled() const noexcept { return coupled_; }
    const std::vector<Eigen::Matrix2cd>& local_hamiltonians() const noexcept { return hams_; }
    const Eigen::VectorXcd& initial_state() const noexcept { return initial_; }

    /// Full H_S as a dense matrix (sum of local terms).
    Eigen::MatrixXcd hamiltonian() const;

    /// +1 / -1 eigenvalue of sigma_z on `qubit` for basis state `index`.
    int z_sign(std::size_t index, std::size_t qubit) const noexcept
    {
        return ((index >> (n_qubits_ - 1 - qubit)) & 1u) ? -1 : 1;
    }

private:
    std::size_t n_qubits_;
    std::vector<std::size_t> coupled_;
    std::vector<Eigen::Matrix2cd> hams_;
    Eigen::VectorXcd initial_;
};

struct RelativeStateTrajectory {
    TimeGrid grid;
    Eigen::MatrixXcd states;  // column k is psi(t_k), unnormalized
    std::vector<double> norms_sq;
    std::vector<NoiseTrajectory> noise;  // one per coupled qubit

    Eigen::VectorXcd state(std::size_t k) const { return states.col(static_cast<Eigen::Index>(k)); }
};

/// Closed-form stepping of
///   d psi/dt = [-i H_S + sum_k sigma_z^(k) z*_{k,t} - sum_k (A_k + E_k)] psi,
/// psi(t_{j+1}) = exp(-i H_S dt) exp(sum_k sigma_z^(k) dZ_k - sum_k dPhi_k) psi(t_j),
/// with trapezoid cell integrals dZ of the noise and dPhi from the rate tables.
class DephasingPropagator {
public:
    DephasingPropagator(DephasingSystem system, std::vector<RateTable> rates);

    const DephasingSystem& system() const noexcept { return system_; }
    const TimeGrid& grid() const noexcept { return grid_; }
    const std::vector<RateTable>& rates() const noexcept { return rates_; }

    RelativeStateTrajectory propagate(std::vector<NoiseTrajectory> noises) const;

    /// States for an arbitrary initial vector (linear in `psi0`), columns per time.
    Eigen::MatrixXcd propagate_states(const std::vector<NoiseTrajectory>& noises,
                                      const Eigen::VectorXcd& psi0) const;

private:
    void apply_unitary_step(Eigen::VectorXcd& psi) const;

    DephasingSystem system_;
    std::vector<RateTable> rates_;
    TimeGrid grid_;
    std::vector<Eigen::Matrix2cd> step_unitaries_;  // exp(-i h_q dt)
    std::vector<bool> is_identity_;
};

RelativeStateTrajectory propagate_dephasing(const DephasingSystem& system,
                                            const std::vector<NoiseTrajectory>& noises,
                                            const std::vector<CorrelationKernel>& kernels);

/// Closed-form Gaussian average of the grid propagator for one channel:
/// with Z the trapezoid integral of z* up to t_k,
///   coherence  = E[psi_0 conj(psi_1)] / (psi_0 conj(psi_1))(0) = exp(-2 Re phi - 2 Var Im Z),
///   population = E[|psi_0|^2] / |psi_0(0)|^2 = exp(2 Var Re Z - 2 Re phi).
/// Both must be independent of eta, and population must be one.
struct GridAverage {
    double coherence{1.0};
    double population{1.0};
};

GridAverage grid_average(const CorrelationKernel& kernel, const RateTable& rates, std::size_t k);

/// P_xi(z, t) / p_xi(z) = ||psi(t)||^2.
double povm_density(const RelativeStateTrajectory& trajectory, std::size_t t_index);

struct AveragedDensity {
    TimeGrid grid;
    std::size_t n_samples{0};
    std::vector<Eigen::MatrixXcd> rho;
    std::vector<Eigen::MatrixXcd> se;  // SE of real part in .real(), of imaginary part in .imag()
    std::vector<double> trace_deviation;  // |tr rho - 1|
    std::vector<double> mean_norm_sq;
    std::vector<double> se_norm_sq;
};

/// Sums of |psi><psi| and of squared components per grid time.
class DensityAccumulator {
public:
    DensityAccumulator(TimeGrid grid, std::size_t dim);

    void add(const RelativeStateTrajectory& trajectory);
    void add_states(const Eigen::MatrixXcd& states);
    void merge(const DensityAccumulator& other);
    std::size_t count() const noexcept { return n_; }

    AveragedDensity result() const;

private:
    TimeGrid grid_;
    std::size_t dim_;
    std::size_t n_{0};
    std::vector<Eigen::MatrixXcd> sum_, sq_;
    std::vector<double> norm_sum_, norm_sq_;
};

/// Mean of |psi><psi| over unnormalized trajectories (no reweighting).
AveragedDensity average_density_matrix(const std::vector<RelativeStateTrajectory>& trajectories);

/// CSV `t,norm_sq`.
void write_norms_csv(std::ostream& out, const RelativeStateTrajectory& trajectory);

/// Little-endian f64 pairs (re, im), state index fastest, grid times in order.
void write_state_dump(std::ostream& out, const RelativeStateTrajectory& trajectory);

/// CSV `t,i,j,re_rho,im_rho` over the upper triangle i <= j.
void write_density_csv(std::ostream& out, const AveragedDensity& density);

} // namespace unravel
