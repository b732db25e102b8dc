#pragma once

#include <functional>
#include <string>
#include <vector>

#include "unravel/types.hpp"

namespace unravel {

inline constexpr double kDefaultEpsilon = 1e-3;

/// Maps a requested squeezing value onto the open unit disk. Values with
/// |xi| >= 1 - epsilon (limiting-sense requests such as |xi| = 1) are
/// scaled to magnitude 1 - epsilon; values beyond 1 + 1e-12 are rejected.
cplx clamp_squeezing(cplx xi, double epsilon = kDefaultEpsilon);

/// Per-mode squeezing choice. Function-type rules depend on omega only;
/// PerModePhase addresses modes by index.
class SqueezingRule {
public:
    enum class Kind { Zero, OptimalAt, RestoreAt, PerModePhase, Custom };

    static SqueezingRule zero();
    static SqueezingRule optimal_at(double T, double epsilon = kDefaultEpsilon);
    static SqueezingRule restore_at(double T, double epsilon = kDefaultEpsilon);
    static SqueezingRule per_mode_phase(std::vector<double> phases, double magnitude);
    static SqueezingRule custom(std::function<cplx(double)> fn, std::string name,
                                double epsilon = kDefaultEpsilon);

    Kind kind() const noexcept { return kind_; }
    double target_time() const noexcept { return T_; }
    double epsilon() const noexcept { return epsilon_; }
    double magnitude() const noexcept { return magnitude_; }
    const std::vector<double>& phases() const noexcept { return phases_; }

    /// xi for a mode at frequency omega with position `mode_index` in its set.
    cplx value(double omega, std::size_t mode_index = 0) const;

    /// Callable omega -> xi; throws for PerModePhase, which needs mode indices.
    std::function<cplx(double)> as_function() const;

    ModeSet apply(const ModeSet& modes) const;

    std::string descriptor() const;

private:
    SqueezingRule() = default;

    Kind kind_{Kind::Zero};
    double T_{0.0};
    double epsilon_{kDefaultEpsilon};
    double magnitude_{0.0};
    std::vector<double> phases_;
    std::function<cplx(double)> fn_;
    std::string name_;
};

} // namespace unravel
