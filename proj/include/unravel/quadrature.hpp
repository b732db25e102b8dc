#pragma once

#include <cstddef>
#include <vector>

#include "unravel/types.hpp"

namespace unravel {

/// Fock coefficients c_0..c_{n_max} of the Bargmann squeezed state
/// ||z, xi> = exp(z b^dag - (xi/2) b^dag^2)|0>, from
/// c_{n+1} = (z c_n - xi sqrt(n) c_{n-1}) / sqrt(n+1), c_0 = 1.
/// Throws NumericalError when a coefficient leaves the safe floating range.
std::vector<cplx> bargmann_coefficients(cplx z, cplx xi, std::size_t n_max);

/// Gauss rule for the standard normal weight exp(-x^2/2)/sqrt(2 pi);
/// weights sum to one.
struct GaussHermiteRule {
    std::vector<double> nodes;
    std::vector<double> weights;
};

GaussHermiteRule gauss_hermite(std::size_t n);

struct ComplexNode {
    cplx z;
    double weight;
};

/// Tensor rule for p_xi(z) d^2z: z = e^{i arg(xi)/2} (a x + i b y) with
/// a = sqrt((1+|xi|)/2), b = sqrt((1-|xi|)/2) and x, y standard normal.
std::vector<ComplexNode> squeezed_gaussian_rule(cplx xi, std::size_t n_per_axis);

} // namespace unravel
