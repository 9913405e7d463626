#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfield/gfunction.hpp"
#include "gfield/scenario.hpp"

namespace gfield {

/// Test function with a declared polynomial growth bound |phi| <= C(1+|x|^k).
struct PayoffSpec {
    std::function<double(double)> eval;
    int growth_degree = 0;
};

struct PayoffSpec2 {
    std::function<double(double, double)> eval;
    int growth_degree = 0;
};

/// Truncated spatial box [-half_width, half_width]^d with nx nodes per axis.
struct PDEGrid {
    double half_width = 0.0;
    std::size_t nx = 0;
    double dt = 0.0;
    double T = 0.0;

    double dx() const { return 2.0 * half_width / static_cast<double>(nx - 1); }

    /// Largest stable explicit step for diffusion rate `rate` (= hi2 in 1D,
    /// hi2 * tr(gram) in 2D).
    static double cfl_limit(double dx, double rate) { return dx * dx / rate; }

    /// Grid honoring both invariants with a 6 sigma_hi sqrt(T) box and a
    /// time step at `safety` times the stability limit.
    static PDEGrid make(const VolBand& band, double T, std::size_t nx, int dim = 1, double safety = 0.9,
                        double trace = 0.0)
    {
        PDEGrid g;
        g.T = T;
        g.nx = nx;
        g.half_width = 6.0 * band.hi() * std::sqrt(T);
        const double rate = band.hi2() * (trace > 0.0 ? trace : static_cast<double>(dim));
        g.dt = safety * cfl_limit(g.dx(), rate);
        return g;
    }
};

namespace detail {

inline void validate_grid(const PDEGrid& grid, const VolBand& band, double rate)
{
    if (grid.nx < 5) throw std::invalid_argument("PDEGrid: need at least 5 nodes per axis");
    if (!(grid.T > 0.0)) throw std::invalid_argument("PDEGrid: horizon T must be positive");
    if (!(grid.dt > 0.0)) throw std::invalid_argument("PDEGrid: dt must be positive");
    const double need = 6.0 * band.hi() * std::sqrt(grid.T);
    if (grid.half_width < need * (1.0 - 1e-12))
        throw std::invalid_argument("PDEGrid: half_width " + std::to_string(grid.half_width) +
                                    " below 6*sigma_hi*sqrt(T) = " + std::to_string(need));
    if (rate > 0.0 && grid.dt > PDEGrid::cfl_limit(grid.dx(), rate) * (1.0 + 1e-12))
        throw std::invalid_argument("PDEGrid: CFL violated (dt = " + std::to_string(grid.dt) +
                                    ", limit = " + std::to_string(PDEGrid::cfl_limit(grid.dx(), rate)) + ")");
}

// Linear interpolation of a nodal vector at x = 0.
inline double center_value(const std::vector<double>& u, double half_width, double dx)
{
    const double pos = half_width / dx;
    const auto i = static_cast<std::size_t>(std::floor(pos));
    const double w = pos - static_cast<double>(i);
    if (i + 1 >= u.size()) return u.back();
    return (1.0 - w) * u[i] + w * u[i + 1];
}

}  // namespace detail

/// Explicit monotone scheme for u_t = G(u_xx), u(0, .) = phi. Returns u(T, 0),
/// the sublinear expectation of phi(X) with X G-normal of variance band
/// T * [lo2, hi2].
inline double solve_gheat_1d(const VolBand& band, const PayoffSpec& payoff, double T, const PDEGrid& grid)
{
    if (grid.T != T) throw std::invalid_argument("solve_gheat_1d: grid horizon differs from T");
    detail::validate_grid(grid, band, band.hi2());
    const std::size_t n = grid.nx;
    const double dx = grid.dx();
    const auto steps = static_cast<std::size_t>(std::ceil(T / grid.dt - 1e-12));
    const double dt = T / static_cast<double>(steps);
    const double inv_dx2 = 1.0 / (dx * dx);

    std::vector<double> u(n), d2(n);
    for (std::size_t i = 0; i < n; ++i) {
        u[i] = payoff.eval(-grid.half_width + dx * static_cast<double>(i));
        if (!std::isfinite(u[i]))
            throw std::domain_error("solve_gheat_1d: payoff not finite at node " + std::to_string(i));
    }
    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t i = 1; i + 1 < n; ++i) d2[i] = (u[i - 1] - 2.0 * u[i] + u[i + 1]) * inv_dx2;
        d2[0] = d2[1];
        d2[n - 1] = d2[n - 2];
        bool finite = true;
        for (std::size_t i = 0; i < n; ++i) {
            u[i] += dt * g_scalar(band, d2[i]);
            finite = finite && std::isfinite(u[i]);
        }
        if (!finite) throw std::runtime_error("solve_gheat_1d: NaN/Inf at step " + std::to_string(step));
    }
    return detail::center_value(u, grid.half_width, dx);
}

/// u_t = G(tr(gram D^2 u)) on the square box; the control set is
/// theta * gram with theta in the band.
inline double solve_gheat_2d(const GFunction& gf, const PayoffSpec2& payoff, double T, const PDEGrid& grid)
{
    if (gf.dim() != 2) throw std::invalid_argument("solve_gheat_2d: gram must be 2x2");
    if (grid.T != T) throw std::invalid_argument("solve_gheat_2d: grid horizon differs from T");
    const auto& band = gf.band();
    const Eigen::MatrixXd& g = gf.gram();
    detail::validate_grid(grid, band, band.hi2() * std::max(g.trace(), 1e-300));
    const std::size_t n = grid.nx;
    const double dx = grid.dx();
    const auto steps = static_cast<std::size_t>(std::ceil(T / grid.dt - 1e-12));
    const double dt = T / static_cast<double>(steps);
    const double inv_dx2 = 1.0 / (dx * dx);
    const double g11 = g(0, 0), g22 = g(1, 1), g12 = g(0, 1);

    auto at = [n](std::size_t i, std::size_t j) { return i * n + j; };
    std::vector<double> u(n * n), op(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            const double x = -grid.half_width + dx * static_cast<double>(i);
            const double y = -grid.half_width + dx * static_cast<double>(j);
            u[at(i, j)] = payoff.eval(x, y);
            if (!std::isfinite(u[at(i, j)]))
                throw std::domain_error("solve_gheat_2d: payoff not finite at node (" + std::to_string(i) + "," +
                                        std::to_string(j) + ")");
        }

    for (std::size_t step = 0; step < steps; ++step) {
        for (std::size_t i = 1; i + 1 < n; ++i)
            for (std::size_t j = 1; j + 1 < n; ++j) {
                const double uxx = (u[at(i - 1, j)] - 2.0 * u[at(i, j)] + u[at(i + 1, j)]) * inv_dx2;
                const double uyy = (u[at(i, j - 1)] - 2.0 * u[at(i, j)] + u[at(i, j + 1)]) * inv_dx2;
                const double uxy =
                    (u[at(i + 1, j + 1)] - u[at(i + 1, j - 1)] - u[at(i - 1, j + 1)] + u[at(i - 1, j - 1)]) *
                    0.25 * inv_dx2;
                op[at(i, j)] = g11 * uxx + 2.0 * g12 * uxy + g22 * uyy;
            }
        // Boundary: copy the operator from the nearest interior node.
        for (std::size_t k = 1; k + 1 < n; ++k) {
            op[at(0, k)] = op[at(1, k)];
            op[at(n - 1, k)] = op[at(n - 2, k)];
            op[at(k, 0)] = op[at(k, 1)];
            op[at(k, n - 1)] = op[at(k, n - 2)];
        }
        op[at(0, 0)] = op[at(1, 1)];
        op[at(0, n - 1)] = op[at(1, n - 2)];
        op[at(n - 1, 0)] = op[at(n - 2, 1)];
        op[at(n - 1, n - 1)] = op[at(n - 2, n - 2)];

        bool finite = true;
        for (std::size_t k = 0; k < n * n; ++k) {
            u[k] += dt * g_scalar(band, op[k]);
            finite = finite && std::isfinite(u[k]);
        }
        if (!finite) throw std::runtime_error("solve_gheat_2d: NaN/Inf at step " + std::to_string(step));
    }

    // Bilinear interpolation at the origin.
    const double pos = grid.half_width / dx;
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const double w = pos - static_cast<double>(i0);
    const std::size_t i1 = std::min(i0 + 1, n - 1);
    return (1 - w) * (1 - w) * u[at(i0, i0)] + w * (1 - w) * (u[at(i1, i0)] + u[at(i0, i1)]) +
           w * w * u[at(i1, i1)];
}

/// -E^[-phi(X)] via the same solver.
inline double solve_gheat_1d_lower(const VolBand& band, const PayoffSpec& payoff, double T, const PDEGrid& grid)
{
    PayoffSpec neg{[f = payoff.eval](double x) { return -f(x); }, payoff.growth_degree};
    return -solve_gheat_1d(band, neg, T, grid);
}

enum class MomentSide { upper, lower };

inline double double_factorial(int k)
{
    double r = 1.0;
    for (int i = k; i > 1; i -= 2) r *= i;
    return r;
}

/// Closed-form absolute moments E^|W_h|^k (upper) and -E^[-|W_h|^k] (lower).
inline double gnormal_abs_moment(const VolBand& band, double norm_h, int k, MomentSide side)
{
    if (k <= 0) throw std::invalid_argument("gnormal_abs_moment: k must be a positive integer");
    if (norm_h < 0.0) throw std::invalid_argument("gnormal_abs_moment: norm must be nonnegative");
    const double sigma = side == MomentSide::upper ? band.hi() : band.lo();
    const double scale = std::pow(norm_h * sigma, k);
    if (k % 2 == 0) return double_factorial(k - 1) * scale;
    return 2.0 * double_factorial(k - 1) * scale / std::sqrt(2.0 * std::numbers::pi);
}

}  // namespace gfield
