#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfield/rng.hpp"
#include "gfield/scenario.hpp"

namespace gfield {

/// Relative tolerance for accepting a quadrature Gram matrix as PSD.
inline constexpr double kPsdJitter = 1e-10;

/// G(a) = 1/2 sup_{theta in band} theta * a = 1/2 (a+ hi2 - a- lo2).
inline double g_scalar(const VolBand& band, double a) noexcept
{
    return a >= 0.0 ? 0.5 * a * band.hi2() : 0.5 * a * band.lo2();
}

/// Sublinear function of a finite family h_1..h_n: the matrix set is
/// {theta * gram : theta in band}, so the sup reduces to g_scalar of
/// tr(A * gram).
class GFunction {
public:
    GFunction(Eigen::MatrixXd gram, VolBand band) : gram_(std::move(gram)), band_(band)
    {
        if (gram_.rows() == 0 || gram_.rows() != gram_.cols())
            throw std::invalid_argument("GFunction: gram must be a nonempty square matrix");
        const double scale = std::max(1.0, gram_.norm());
        if ((gram_ - gram_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
            throw std::invalid_argument("GFunction: gram is not symmetric");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram_, Eigen::EigenvaluesOnly);
        if (eig.eigenvalues().minCoeff() < -kPsdJitter * scale)
            throw std::invalid_argument("GFunction: gram is not positive semidefinite (min eigenvalue " +
                                        std::to_string(eig.eigenvalues().minCoeff()) + ")");
    }

    const Eigen::MatrixXd& gram() const noexcept { return gram_; }
    const VolBand& band() const noexcept { return band_; }
    Eigen::Index dim() const noexcept { return gram_.rows(); }

    double operator()(const Eigen::MatrixXd& a) const
    {
        if (a.rows() != gram_.rows() || a.cols() != gram_.cols())
            throw std::invalid_argument("GFunction: matrix is " + std::to_string(a.rows()) + "x" +
                                        std::to_string(a.cols()) + ", expected " +
                                        std::to_string(gram_.rows()) + "x" + std::to_string(gram_.cols()));
        // tr(A * gram) without forming the product; fixed summation order.
        double tr = 0.0;
        for (Eigen::Index i = 0; i < gram_.rows(); ++i)
            for (Eigen::Index j = 0; j < gram_.cols(); ++j) tr += a(i, j) * gram_(j, i);
        return g_scalar(band_, tr);
    }

private:
    Eigen::MatrixXd gram_;
    VolBand band_;
};

inline double g_matrix(const GFunction& gf, const Eigen::MatrixXd& a) { return gf(a); }

struct CompatibilityReport {
    bool pass = false;
    double worst_marginal = 0.0;     // |G_{n+1}(pad A) - G_n(A)|
    double worst_permutation = 0.0;  // |G_sigma(A) - G(A o sigma^-1)|
    std::size_t trials = 0;
};

inline Eigen::MatrixXd random_symmetric(Eigen::Index n, NormalStream& rng)
{
    Eigen::MatrixXd a(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j) a(i, j) = a(j, i) = rng();
    return a;
}

inline std::vector<Eigen::Index> random_permutation(Eigen::Index n, NormalStream& rng)
{
    std::vector<Eigen::Index> p(static_cast<std::size_t>(n));
    std::iota(p.begin(), p.end(), Eigen::Index{0});
    for (Eigen::Index i = n - 1; i > 0; --i) {
        const auto j = static_cast<Eigen::Index>(rng.engine()() % static_cast<std::uint64_t>(i + 1));
        std::swap(p[static_cast<std::size_t>(i)], p[static_cast<std::size_t>(j)]);
    }
    return p;
}

/// Marginal and permutation consistency of the G-function family built
/// from the Gram matrix of n+1 vectors. `perm` overrides the random
/// permutation when nonempty.
inline CompatibilityReport check_compatibility(const Eigen::MatrixXd& gram_full, const VolBand& band,
                                               std::size_t trials, std::uint64_t seed,
                                               const std::vector<Eigen::Index>& perm = {},
                                               double tolerance = 1e-12)
{
    const Eigen::Index n1 = gram_full.rows();
    if (n1 < 2) throw std::invalid_argument("check_compatibility: need at least n+1 = 2 vectors");
    const Eigen::Index n = n1 - 1;
    const GFunction g_full(gram_full, band);
    const GFunction g_n(gram_full.topLeftCorner(n, n), band);

    CompatibilityReport rep;
    rep.trials = trials;
    NormalStream rng(derive_seed(seed, 0xC0FFEE));
    for (std::size_t t = 0; t < trials; ++t) {
        const Eigen::MatrixXd a = random_symmetric(n, rng);
        Eigen::MatrixXd padded = Eigen::MatrixXd::Zero(n1, n1);
        padded.topLeftCorner(n, n) = a;
        rep.worst_marginal = std::max(rep.worst_marginal, std::abs(g_full(padded) - g_n(a)));

        const auto sigma = perm.empty() ? random_permutation(n, rng) : perm;
        if (static_cast<Eigen::Index>(sigma.size()) != n)
            throw std::invalid_argument("check_compatibility: permutation has wrong length");
        std::vector<Eigen::Index> inv(sigma.size());
        for (std::size_t i = 0; i < sigma.size(); ++i) inv[static_cast<std::size_t>(sigma[i])] = static_cast<Eigen::Index>(i);

        Eigen::MatrixXd gram_sigma(n, n);
        Eigen::MatrixXd a_inv(n, n);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < n; ++j) {
                gram_sigma(i, j) = gram_full(sigma[static_cast<std::size_t>(i)], sigma[static_cast<std::size_t>(j)]);
                a_inv(i, j) = a(inv[static_cast<std::size_t>(i)], inv[static_cast<std::size_t>(j)]);
            }
        const GFunction g_sigma(gram_sigma, band);
        rep.worst_permutation = std::max(rep.worst_permutation, std::abs(g_sigma(a) - g_n(a_inv)));
    }
    rep.pass = rep.worst_marginal <= tolerance && rep.worst_permutation <= tolerance;
    return rep;
}

}  // namespace gfield
