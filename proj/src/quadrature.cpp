#include "unravel/quadrature.hpp"

#include <cmath>

#include <Eigen/Dense>

namespace unravel {

std::vector<cplx> bargmann_coefficients(cplx z, cplx xi, std::size_t n_max)
{
    std::vector<cplx> c(n_max + 1);
    c[0] = 1.0;
    if (n_max >= 1)
        c[1] = z;
    for (std::size_t n = 1; n < n_max; ++n) {
        const double dn = static_cast<double>(n);
        c[n + 1] = (z * c[n] - xi * std::sqrt(dn) * c[n - 1]) / std::sqrt(dn + 1.0);
        if (!std::isfinite(std::abs(c[n + 1])) || std::abs(c[n + 1]) > 1e150)
            throw NumericalError("Bargmann recurrence overflow at |z| = " + std::to_string(std::abs(z)) +
                                 "; shrink the quadrature domain or the Fock cutoff");
    }
    return c;
}

GaussHermiteRule gauss_hermite(std::size_t n)
{
    if (n == 0)
        throw ValidationError("Gauss-Hermite rule needs at least one node");
    const auto N = static_cast<Eigen::Index>(n);
    Eigen::MatrixXd J = Eigen::MatrixXd::Zero(N, N);
    for (Eigen::Index k = 1; k < N; ++k)
        J(k, k - 1) = J(k - 1, k) = std::sqrt(static_cast<double>(k));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(J, Eigen::EigenvaluesOnly);

    // Orthonormal probabilists' Hermite values p_0..p_n at x.
    auto values = [n](double x, std::vector<double>& p) {
        p.assign(n + 1, 0.0);
        p[0] = 1.0;
        if (n >= 1)
            p[1] = x;
        for (std::size_t k = 1; k < n; ++k)
            p[k + 1] = (x * p[k] - std::sqrt(static_cast<double>(k)) * p[k - 1]) /
                       std::sqrt(static_cast<double>(k + 1));
    };

    GaussHermiteRule rule;
    std::vector<double> p;
    for (Eigen::Index i = 0; i < N; ++i) {
        double x = es.eigenvalues()[i];
        // Newton polish with p_n' = sqrt(n) p_{n-1}.
        for (int it = 0; it < 3; ++it) {
            values(x, p);
            const double d = std::sqrt(static_cast<double>(n)) * p[n - 1];
            if (d == 0.0)
                break;
            x -= p[n] / d;
        }
        values(x, p);
        // Christoffel weights keep full relative accuracy in the tails.
        double s = 0.0;
        for (std::size_t k = 0; k < n; ++k)
            s += p[k] * p[k];
        rule.nodes.push_back(x);
        rule.weights.push_back(1.0 / s);
    }
    return rule;
}

std::vector<ComplexNode> squeezed_gaussian_rule(cplx xi, std::size_t n_per_axis)
{
    const double r = std::abs(xi);
    if (!(r < 1.0))
        throw ValidationError("quadrature needs |xi| < 1");
    const auto gh = gauss_hermite(n_per_axis);
    const double a = std::sqrt(0.5 * (1.0 + r)), b = std::sqrt(0.5 * (1.0 - r));
    const cplx rot = std::exp(I * (0.5 * std::arg(xi)));
    std::vector<ComplexNode> nodes;
    nodes.reserve(n_per_axis * n_per_axis);
    for (std::size_t i = 0; i < n_per_axis; ++i)
        for (std::size_t j = 0; j < n_per_axis; ++j)
            nodes.push_back({rot * cplx{a * gh.nodes[i], b * gh.nodes[j]},
                             gh.weights[i] * gh.weights[j]});
    return nodes;
}

} // namespace unravel
