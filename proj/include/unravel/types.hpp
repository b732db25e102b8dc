#pragma once

#include <complex>
#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace unravel {

using cplx = std::complex<double>;

inline constexpr cplx I{0.0, 1.0};
inline constexpr double kPi = 3.14159265358979323846;

/// Invalid input: bad parameters, inconsistent shapes, broken invariants.
class ValidationError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// A computation that cannot produce a trustworthy result (indefinite
/// covariance, Fock truncation leakage, recurrence overflow, ...).
class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Uniform grid t_k = k * dt, k = 0..n_steps.
class TimeGrid {
public:
    TimeGrid() = default;
    TimeGrid(double dt, std::size_t n_steps);

    double dt() const noexcept { return dt_; }
    std::size_t n_steps() const noexcept { return n_steps_; }
    std::size_t size() const noexcept { return n_steps_ + 1; }
    double time(std::size_t k) const noexcept { return static_cast<double>(k) * dt_; }
    double horizon() const noexcept { return time(n_steps_); }

    /// Index of the grid point nearest to t; throws if t lies off the grid
    /// by more than `tol * dt` or outside [0, T].
    std::size_t index_of(double t, double tol = 1e-9) const;

    friend bool operator==(const TimeGrid&, const TimeGrid&) = default;

private:
    double dt_{1.0};
    std::size_t n_steps_{1};
};

/// One bath mode: coupling g >= 0, angular frequency omega, squeezing xi, |xi| < 1.
struct Mode {
    double g{0.0};
    double omega{0.0};
    cplx xi{0.0, 0.0};
};

/// Discrete bath. When built from a midpoint frequency comb the comb spacing
/// is recorded so kernels can refuse grids beyond the recurrence time.
class ModeSet {
public:
    ModeSet() = default;
    explicit ModeSet(std::vector<Mode> modes, std::optional<double> comb_spacing = std::nullopt);

    const std::vector<Mode>& modes() const noexcept { return modes_; }
    std::size_t size() const noexcept { return modes_.size(); }
    const Mode& operator[](std::size_t i) const { return modes_.at(i); }
    std::optional<double> comb_spacing() const noexcept { return comb_spacing_; }

    /// Copy with a new squeezing parameter per mode.
    ModeSet with_squeezing(const std::vector<cplx>& xi) const;

    /// Sum of g^2, i.e. alpha(t, t).
    double total_weight() const noexcept;

    /// Throws ValidationError unless t < 2 pi / spacing (no-op for explicit mode lists).
    void check_recurrence(double horizon) const;

private:
    std::vector<Mode> modes_;
    std::optional<double> comb_spacing_;
};

} // namespace unravel
