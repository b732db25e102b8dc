#include "unravel/sse.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <ostream>
#include <set>

namespace unravel {

namespace {

bool is_hermitian(const Eigen::Matrix2cd& h)
{
    const double scale = std::max(1.0, h.cwiseAbs().maxCoeff());
    return (h - h.adjoint()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

Eigen::Matrix2cd unitary_step(const Eigen::Matrix2cd& h, double dt)
{
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2cd> es(h);
    Eigen::Vector2cd phases;
    for (int i = 0; i < 2; ++i)
        phases[i] = std::exp(-I * (es.eigenvalues()[i] * dt));
    return es.eigenvectors() * phases.asDiagonal() * es.eigenvectors().adjoint();
}

} // namespace

DephasingSystem::DephasingSystem(std::size_t n_qubits, std::vector<std::size_t> coupled,
                                 std::vector<Eigen::Matrix2cd> local_hamiltonians,
                                 Eigen::VectorXcd initial_state, std::size_t max_qubits)
    : n_qubits_(n_qubits), coupled_(std::move(coupled)), hams_(std::move(local_hamiltonians)),
      initial_(std::move(initial_state))
{
    if (n_qubits_ == 0 || n_qubits_ > max_qubits)
        throw ValidationError("number of qubits must lie in [1, " + std::to_string(max_qubits) + "]");
    std::set<std::size_t> seen;
    for (auto q : coupled_) {
        if (q >= n_qubits_)
            throw ValidationError("coupled qubit index out of range");
        if (!seen.insert(q).second)
            throw ValidationError("coupled qubit listed twice; each coupled qubit has one bath");
    }
    if (hams_.empty())
        hams_.assign(n_qubits_, Eigen::Matrix2cd::Zero());
    if (hams_.size() != n_qubits_)
        throw ValidationError("need one local Hamiltonian per qubit");
    for (std::size_t q = 0; q < n_qubits_; ++q) {
        if (!is_hermitian(hams_[q]))
            throw ValidationError("local Hamiltonian of qubit " + std::to_string(q) +
                                  " is not hermitian");
        if (seen.count(q)) {
            const double scale = std::max(1.0, hams_[q].cwiseAbs().maxCoeff());
            if (std::abs(hams_[q](0, 1)) > 1e-12 * scale)
                throw ValidationError("local Hamiltonian of coupled qubit " + std::to_string(q) +
                                      " does not commute with sigma_z");
        }
    }
    if (static_cast<std::size_t>(initial_.size()) != dim())
        throw ValidationError("initial state dimension must be 2^n_qubits");
    if (std::abs(initial_.squaredNorm() - 1.0) > 1e-8)
        throw ValidationError("initial state must be normalized");
}

Eigen::MatrixXcd DephasingSystem::hamiltonian() const
{
    const auto d = static_cast<Eigen::Index>(dim());
    Eigen::MatrixXcd H = Eigen::MatrixXcd::Zero(d, d);
    for (std::size_t q = 0; q < n_qubits_; ++q) {
        const std::size_t bit = n_qubits_ - 1 - q;
        for (Eigen::Index x = 0; x < d; ++x) {
            const auto ux = static_cast<std::size_t>(x);
            const int bx = static_cast<int>((ux >> bit) & 1u);
            for (int by = 0; by < 2; ++by) {
                const std::size_t y = (ux & ~(std::size_t{1} << bit)) | (std::size_t(by) << bit);
                H(static_cast<Eigen::Index>(y), x) += hams_[q](by, bx);
            }
        }
    }
    return H;
}

// ---------------------------------------------------------------------------

DephasingPropagator::DephasingPropagator(DephasingSystem system, std::vector<RateTable> rates)
    : system_(std::move(system)), rates_(std::move(rates))
{
    if (rates_.size() != system_.coupled().size())
        throw ValidationError("need one rate table per coupled qubit");
    if (rates_.empty())
        throw ValidationError("propagator needs at least one rate table to fix the grid; "
                              "use a zero-coupling channel for isolated systems");
    grid_ = rates_.front().grid;
    for (const auto& r : rates_)
        if (!(r.grid == grid_))
            throw ValidationError("all channels must share one time grid");
    for (const auto& h : system_.local_hamiltonians()) {
        step_unitaries_.push_back(unitary_step(h, grid_.dt()));
        is_identity_.push_back(h.cwiseAbs().maxCoeff() == 0.0);
    }
}

void DephasingPropagator::apply_unitary_step(Eigen::VectorXcd& psi) const
{
    const std::size_t n = system_.n_qubits();
    const std::size_t d = system_.dim();
    for (std::size_t q = 0; q < n; ++q) {
        if (is_identity_[q])
            continue;
        const auto& u = step_unitaries_[q];
        const std::size_t stride = std::size_t{1} << (n - 1 - q);
        for (std::size_t base = 0; base < d; base += 2 * stride) {
            for (std::size_t off = 0; off < stride; ++off) {
                const auto i0 = static_cast<Eigen::Index>(base + off);
                const auto i1 = static_cast<Eigen::Index>(base + off + stride);
                const cplx a = psi[i0], b = psi[i1];
                psi[i0] = u(0, 0) * a + u(0, 1) * b;
                psi[i1] = u(1, 0) * a + u(1, 1) * b;
            }
        }
    }
}

Eigen::MatrixXcd DephasingPropagator::propagate_states(const std::vector<NoiseTrajectory>& noises,
                                                       const Eigen::VectorXcd& psi0) const
{
    const std::size_t m = system_.coupled().size();
    if (noises.size() != m)
        throw ValidationError("need one noise trajectory per coupled qubit");
    for (const auto& nz : noises)
        if (!(nz.grid == grid_))
            throw ValidationError("noise grid does not match the propagator grid");
    const std::size_t d = system_.dim();
    if (static_cast<std::size_t>(psi0.size()) != d)
        throw ValidationError("initial vector has the wrong dimension");

    std::vector<std::vector<cplx>> inc(m);
    for (std::size_t k = 0; k < m; ++k)
        inc[k] = noises[k].increments();
    std::vector<std::uint8_t> flipped(d * m);
    for (std::size_t x = 0; x < d; ++x)
        for (std::size_t k = 0; k < m; ++k)
            flipped[x * m + k] = system_.z_sign(x, system_.coupled()[k]) < 0;

    const std::size_t n = grid_.size();
    Eigen::MatrixXcd states(static_cast<Eigen::Index>(d), static_cast<Eigen::Index>(n));
    Eigen::VectorXcd psi = psi0;
    states.col(0) = psi;
    std::vector<cplx> up(m), down(m);
    for (std::size_t j = 0; j + 1 < n; ++j) {
        cplx dphi{};
        for (std::size_t k = 0; k < m; ++k) {
            up[k] = std::exp(inc[k][j]);
            down[k] = 1.0 / up[k];
            dphi += rates_[k].phi[j + 1] - rates_[k].phi[j];
        }
        const cplx common = std::exp(-dphi);
        for (std::size_t x = 0; x < d; ++x) {
            cplx f = common;
            for (std::size_t k = 0; k < m; ++k)
                f *= flipped[x * m + k] ? down[k] : up[k];
            psi[static_cast<Eigen::Index>(x)] *= f;
        }
        apply_unitary_step(psi);
        states.col(static_cast<Eigen::Index>(j + 1)) = psi;
    }
    return states;
}

RelativeStateTrajectory DephasingPropagator::propagate(std::vector<NoiseTrajectory> noises) const
{
    RelativeStateTrajectory tr;
    tr.grid = grid_;
    tr.states = propagate_states(noises, system_.initial_state());
    tr.norms_sq.resize(grid_.size());
    for (std::size_t k = 0; k < grid_.size(); ++k)
        tr.norms_sq[k] = tr.states.col(static_cast<Eigen::Index>(k)).squaredNorm();
    tr.noise = std::move(noises);
    return tr;
}

RelativeStateTrajectory propagate_dephasing(const DephasingSystem& system,
                                            const std::vector<NoiseTrajectory>& noises,
                                            const std::vector<CorrelationKernel>& kernels)
{
    std::vector<RateTable> rates;
    rates.reserve(kernels.size());
    for (const auto& k : kernels)
        rates.push_back(integrated_rates(k));
    return DephasingPropagator(system, std::move(rates)).propagate(noises);
}

GridAverage grid_average(const CorrelationKernel& kernel, const RateTable& rates, std::size_t k)
{
    if (!(kernel.grid == rates.grid))
        throw ValidationError("kernel and rate grids differ");
    if (k >= kernel.grid.size())
        throw ValidationError("grid index out of range");
    const double dt = kernel.grid.dt();
    cplx zz_conj{}, zz{};  // E[Z conj(Z)], E[Z^2]
    for (std::size_t i = 0; i <= k; ++i) {
        const double wi = (i == 0 || i == k) ? 0.5 * dt : dt;
        for (std::size_t j = 0; j <= k; ++j) {
            const double wj = (j == 0 || j == k) ? 0.5 * dt : dt;
            const auto ii = static_cast<Eigen::Index>(i), jj = static_cast<Eigen::Index>(j);
            zz_conj += wi * wj * kernel.alpha(jj, ii);
            zz += wi * wj * kernel.eta(ii, jj);
        }
    }
    if (k == 0)
        return {};
    const double var_re = 0.5 * (zz_conj.real() + zz.real());
    const double var_im = 0.5 * (zz_conj.real() - zz.real());
    const double rphi = rates.phi[k].real();
    return {std::exp(-2.0 * rphi - 2.0 * var_im), std::exp(2.0 * var_re - 2.0 * rphi)};
}

double povm_density(const RelativeStateTrajectory& trajectory, std::size_t t_index)
{
    return trajectory.norms_sq.at(t_index);
}

// ---------------------------------------------------------------------------

DensityAccumulator::DensityAccumulator(TimeGrid grid, std::size_t dim)
    : grid_(grid), dim_(dim),
      sum_(grid.size(), Eigen::MatrixXcd::Zero(static_cast<Eigen::Index>(dim),
                                                static_cast<Eigen::Index>(dim))),
      sq_(sum_), norm_sum_(grid.size(), 0.0), norm_sq_(grid.size(), 0.0)
{
}

void DensityAccumulator::add_states(const Eigen::MatrixXcd& states)
{
    if (static_cast<std::size_t>(states.cols()) != grid_.size() ||
        static_cast<std::size_t>(states.rows()) != dim_)
        throw ValidationError("state block does not match the accumulator shape");
    const auto d = static_cast<Eigen::Index>(dim_);
    for (std::size_t k = 0; k < grid_.size(); ++k) {
        const auto psi = states.col(static_cast<Eigen::Index>(k));
        auto& s = sum_[k];
        auto& q = sq_[k];
        double nrm = 0.0;
        for (Eigen::Index j = 0; j < d; ++j) {
            const cplx cj = std::conj(psi[j]);
            nrm += std::norm(psi[j]);
            for (Eigen::Index i = 0; i < d; ++i) {
                const cplx p = psi[i] * cj;
                s(i, j) += p;
                q(i, j) += cplx{p.real() * p.real(), p.imag() * p.imag()};
            }
        }
        norm_sum_[k] += nrm;
        norm_sq_[k] += nrm * nrm;
    }
    ++n_;
}

void DensityAccumulator::add(const RelativeStateTrajectory& trajectory)
{
    if (!(trajectory.grid == grid_))
        throw ValidationError("trajectory grid does not match the accumulator");
    add_states(trajectory.states);
}

void DensityAccumulator::merge(const DensityAccumulator& other)
{
    if (!(other.grid_ == grid_) || other.dim_ != dim_)
        throw ValidationError("cannot merge density accumulators of different shape");
    for (std::size_t k = 0; k < sum_.size(); ++k) {
        sum_[k] += other.sum_[k];
        sq_[k] += other.sq_[k];
        norm_sum_[k] += other.norm_sum_[k];
        norm_sq_[k] += other.norm_sq_[k];
    }
    n_ += other.n_;
}

AveragedDensity DensityAccumulator::result() const
{
    if (n_ == 0)
        throw ValidationError("no trajectories accumulated");
    const double n = static_cast<double>(n_);
    const double se_scale = n_ > 1 ? 1.0 / (n - 1.0) : 0.0;
    AveragedDensity out;
    out.grid = grid_;
    out.n_samples = n_;
    for (std::size_t k = 0; k < sum_.size(); ++k) {
        Eigen::MatrixXcd rho = sum_[k] / n;
        Eigen::MatrixXcd se(rho.rows(), rho.cols());
        for (Eigen::Index i = 0; i < rho.size(); ++i) {
            const double vr = std::max(0.0, sq_[k](i).real() / n - rho(i).real() * rho(i).real());
            const double vi = std::max(0.0, sq_[k](i).imag() / n - rho(i).imag() * rho(i).imag());
            se(i) = cplx{std::sqrt(vr * se_scale), std::sqrt(vi * se_scale)};
        }
        const double mean = norm_sum_[k] / n;
        const double var = std::max(0.0, norm_sq_[k] / n - mean * mean);
        out.trace_deviation.push_back(std::abs(rho.trace().real() - 1.0));
        out.mean_norm_sq.push_back(mean);
        out.se_norm_sq.push_back(std::sqrt(var * se_scale));
        out.rho.push_back(std::move(rho));
        out.se.push_back(std::move(se));
    }
    return out;
}

AveragedDensity average_density_matrix(const std::vector<RelativeStateTrajectory>& trajectories)
{
    if (trajectories.empty())
        throw ValidationError("need at least one trajectory to average");
    const auto& first = trajectories.front();
    const std::size_t dim = static_cast<std::size_t>(first.states.rows());
    const std::size_t n = trajectories.size();
    constexpr std::size_t block = 64;
    const std::size_t n_blocks = (n + block - 1) / block;
    std::vector<DensityAccumulator> partial(n_blocks, DensityAccumulator(first.grid, dim));
#pragma omp parallel for schedule(dynamic)
    for (std::size_t b = 0; b < n_blocks; ++b)
        for (std::size_t i = b * block; i < std::min(n, (b + 1) * block); ++i)
            partial[b].add(trajectories[i]);
    DensityAccumulator total(first.grid, dim);
    for (const auto& p : partial)
        total.merge(p);
    return total.result();
}

// ---------------------------------------------------------------------------

void write_norms_csv(std::ostream& out, const RelativeStateTrajectory& trajectory)
{
    out.precision(17);
    out << "t,norm_sq\n";
    for (std::size_t k = 0; k < trajectory.norms_sq.size(); ++k)
        out << trajectory.grid.time(k) << ',' << trajectory.norms_sq[k] << '\n';
}

void write_state_dump(std::ostream& out, const RelativeStateTrajectory& trajectory)
{
    static_assert(std::endian::native == std::endian::little,
                  "state dump layout is little-endian; add a byte swap for this platform");
    for (Eigen::Index k = 0; k < trajectory.states.cols(); ++k) {
        for (Eigen::Index i = 0; i < trajectory.states.rows(); ++i) {
            const double v[2] = {trajectory.states(i, k).real(), trajectory.states(i, k).imag()};
            out.write(reinterpret_cast<const char*>(v), sizeof v);
        }
    }
}

void write_density_csv(std::ostream& out, const AveragedDensity& density)
{
    out.precision(17);
    out << "t,i,j,re_rho,im_rho\n";
    for (std::size_t k = 0; k < density.rho.size(); ++k) {
        const auto& r = density.rho[k];
        for (Eigen::Index i = 0; i < r.rows(); ++i)
            for (Eigen::Index j = i; j < r.cols(); ++j)
                out << density.grid.time(k) << ',' << i << ',' << j << ',' << r(i, j).real() << ','
                    << r(i, j).imag() << '\n';
    }
}

} // namespace unravel
