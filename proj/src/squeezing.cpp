#include "unravel/squeezing.hpp"

#include <cmath>
#include <sstream>

namespace unravel {

cplx clamp_squeezing(cplx xi, double epsilon)
{
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ValidationError("squeezing epsilon must lie in (0, 1)");
    const double r = std::abs(xi);
    if (r > 1.0 + 1e-12)
        throw ValidationError("squeezing magnitude exceeds 1: |xi| = " + std::to_string(r));
    if (r >= 1.0 - epsilon)
        return xi * ((1.0 - epsilon) / r);
    return xi;
}

SqueezingRule SqueezingRule::zero()
{
    return SqueezingRule{};
}

SqueezingRule SqueezingRule::optimal_at(double T, double epsilon)
{
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw ValidationError("optimal rule requires 0 < epsilon < 1");
    if (!(T >= 0.0))
        throw ValidationError("optimal rule requires T >= 0");
    SqueezingRule r;
    r.kind_ = Kind::OptimalAt;
    r.T_ = T;
    r.epsilon_ = epsilon;
    r.magnitude_ = 1.0 - epsilon;
    return r;
}

SqueezingRule SqueezingRule::restore_at(double T, double epsilon)
{
    SqueezingRule r = optimal_at(T, epsilon);
    r.kind_ = Kind::RestoreAt;
    return r;
}

SqueezingRule SqueezingRule::per_mode_phase(std::vector<double> phases, double magnitude)
{
    if (!(magnitude >= 0.0 && magnitude < 1.0))
        throw ValidationError("per-mode phase rule requires 0 <= magnitude < 1");
    SqueezingRule r;
    r.kind_ = Kind::PerModePhase;
    r.magnitude_ = magnitude;
    r.epsilon_ = 1.0 - magnitude;
    r.phases_ = std::move(phases);
    return r;
}

SqueezingRule SqueezingRule::custom(std::function<cplx(double)> fn, std::string name,
                                    double epsilon)
{
    if (!fn)
        throw ValidationError("custom squeezing rule needs a callable");
    SqueezingRule r;
    r.kind_ = Kind::Custom;
    r.epsilon_ = epsilon;
    r.fn_ = std::move(fn);
    r.name_ = std::move(name);
    return r;
}

cplx SqueezingRule::value(double omega, std::size_t mode_index) const
{
    switch (kind_) {
    case Kind::Zero:
        return {0.0, 0.0};
    case Kind::OptimalAt:
        return -magnitude_ * std::exp(I * (omega * T_));
    case Kind::RestoreAt:
        return magnitude_ * std::exp(I * (omega * T_));
    case Kind::PerModePhase:
        if (mode_index >= phases_.size())
            throw ValidationError("per-mode phase rule has no phase for mode " +
                                  std::to_string(mode_index));
        return std::polar(magnitude_, phases_[mode_index]);
    case Kind::Custom:
        return clamp_squeezing(fn_(omega), epsilon_);
    }
    return {0.0, 0.0};
}

std::function<cplx(double)> SqueezingRule::as_function() const
{
    if (kind_ == Kind::PerModePhase)
        throw ValidationError("per-mode phase rules are not functions of omega");
    return [rule = *this](double omega) { return rule.value(omega); };
}

ModeSet SqueezingRule::apply(const ModeSet& modes) const
{
    if (kind_ == Kind::PerModePhase && phases_.size() != modes.size())
        throw ValidationError("per-mode phase rule size does not match the mode set");
    std::vector<cplx> xi(modes.size());
    for (std::size_t i = 0; i < modes.size(); ++i)
        xi[i] = value(modes[i].omega, i);
    return modes.with_squeezing(xi);
}

std::string SqueezingRule::descriptor() const
{
    std::ostringstream os;
    os.precision(10);
    switch (kind_) {
    case Kind::Zero:
        os << "zero";
        break;
    case Kind::OptimalAt:
        os << "optimal(T=" << T_ << ",epsilon=" << epsilon_ << ")";
        break;
    case Kind::RestoreAt:
        os << "restore(T=" << T_ << ",epsilon=" << epsilon_ << ")";
        break;
    case Kind::PerModePhase:
        os << "per_mode_phase(magnitude=" << magnitude_ << ",n=" << phases_.size() << ")";
        break;
    case Kind::Custom:
        os << "custom(" << name_ << ")";
        break;
    }
    return os.str();
}

} // namespace unravel
