#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfield/gfunction.hpp"
#include "gfield/hilbert.hpp"
#include "gfield/parallel.hpp"
#include "gfield/rng.hpp"
#include "gfield/scenario.hpp"
#include "gfield/sublinear.hpp"

namespace gfield {

/// Law of (W_h1, ..., W_hn): fully determined by the Gram matrix and the band.
class FieldDistribution {
public:
    FieldDistribution(std::vector<L2Element> params, Eigen::MatrixXd g, VolBand band)
        : params_(std::move(params)), gfun_(std::move(g), band)
    {
        if (!params_.empty() && static_cast<Eigen::Index>(params_.size()) != gfun_.dim())
            throw std::invalid_argument("FieldDistribution: gram dimension differs from parameter count");
    }

    const std::vector<L2Element>& params() const noexcept { return params_; }
    const Eigen::MatrixXd& gram() const noexcept { return gfun_.gram(); }
    const GFunction& gfun() const noexcept { return gfun_; }
    const VolBand& band() const noexcept { return gfun_.band(); }
    Eigen::Index dim() const noexcept { return gfun_.dim(); }

    /// Variance band ||h_i||^2 [lo2, hi2] of coordinate i.
    std::pair<double, double> variance_band(Eigen::Index i = 0) const
    {
        const double n2 = gram()(i, i);
        return {n2 * band().lo2(), n2 * band().hi2()};
    }

private:
    std::vector<L2Element> params_;
    GFunction gfun_;
};

inline FieldDistribution fdd(const std::vector<L2Element>& params, const VolBand& band)
{
    if (params.empty()) throw std::invalid_argument("fdd: empty parameter list");
    return {params, gram(params), band};
}

/// Exact Gram matrix of indicator functions: entries mu(A_i cap A_j).
inline Eigen::MatrixXd set_gram(const std::vector<IntervalSet>& sets)
{
    const auto n = static_cast<Eigen::Index>(sets.size());
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            g(i, j) = g(j, i) = sets[static_cast<std::size_t>(i)].intersect(sets[static_cast<std::size_t>(j)]).measure();
    return g;
}

/// Square-root factor F with F F^T = gram from the pivoted LDL^T
/// decomposition; semidefinite input is handled without jitter, and
/// repeated parameters produce identical rows of F. When rounding leaves a
/// nonzero pivot after an exact zero one, LDLT gives up and the factor comes
/// from the eigendecomposition with negative eigenvalues clipped.
inline Eigen::MatrixXd gram_factor(const Eigen::MatrixXd& g)
{
    Eigen::LDLT<Eigen::MatrixXd> ldlt(g);
    if (ldlt.info() != Eigen::Success) {
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
        if (eig.info() != Eigen::Success) throw std::runtime_error("gram_factor: eigendecomposition failed");
        return eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
    }
    const Eigen::VectorXd d = ldlt.vectorD().cwiseMax(0.0).cwiseSqrt();
    const Eigen::MatrixXd l = ldlt.matrixL();
    Eigen::MatrixXd f = ldlt.transpositionsP().transpose() * (l * d.asDiagonal());
    return f;
}

/// Rows are independent draws of N(0, theta * gram); row p uses the seed
/// derive_seed(seed, p).
inline Eigen::MatrixXd sample_given_theta(const FieldDistribution& dist, double theta, std::size_t n_paths,
                                          std::uint64_t seed, int jobs = default_jobs())
{
    if (!dist.band().contains(theta))
        throw std::invalid_argument("sample_given_theta: theta " + std::to_string(theta) + " outside band");
    const Eigen::MatrixXd f = std::sqrt(theta) * gram_factor(dist.gram());
    const Eigen::Index n = dist.dim();
    Eigen::MatrixXd out(static_cast<Eigen::Index>(n_paths), n);
    parallel_for(
        n_paths,
        [&](std::size_t p) {
            NormalStream z(derive_seed(seed, p));
            Eigen::VectorXd zz(n);
            for (Eigen::Index i = 0; i < n; ++i) zz(i) = z();
            out.row(static_cast<Eigen::Index>(p)) = (f * zz).transpose();
        },
        jobs);
    return out;
}

/// Sampler for the scenario engine: under a piecewise-constant control the
/// vector is N(0, (integral of theta) * gram).
inline Sampler<Eigen::VectorXd> field_sampler(const FieldDistribution& dist)
{
    return [f = gram_factor(dist.gram())](const ScenarioPath& s, std::uint64_t seed) {
        NormalStream z(seed);
        Eigen::VectorXd zz(f.cols());
        for (Eigen::Index i = 0; i < zz.size(); ++i) zz(i) = z();
        return Eigen::VectorXd(std::sqrt(s.integrated(0.0, s.horizon())) * (f * zz));
    };
}

/// Distribution of sum_{i<N} <h, e_i> W_{e_i}: a 1D G-normal with variance
/// band ||P_N h||^2 [lo2, hi2].
struct ExpansionSurrogate {
    FieldDistribution dist;
    double target_norm_sq = 0.0;
    double projected_norm_sq = 0.0;
    double defect = 0.0;  // ||h||^2 - ||P_N h||^2
};

inline ExpansionSurrogate expansion_surrogate(const L2Element& h, const Basis& basis, std::size_t n,
                                              const VolBand& band)
{
    const Eigen::VectorXd c = coeffs(h, basis, n);
    const auto proj = L2Element::from_coeffs(h.space(), basis, c);
    const double p2 = ordered_sum_sq(c);
    const double t2 = norm_sq(h);
    Eigen::MatrixXd g(1, 1);
    g(0, 0) = p2;
    return {FieldDistribution({proj}, g, band), t2, p2, t2 - p2};
}

struct UnionThetaCheck {
    double theta = 0.0;
    MeanEstimate second_moment;  // E_theta[X^2] of the signed combination
    double target = 0.0;         // theta * mu(union)
    bool pass = false;
};

struct UnionIdentityReport {
    bool pass = false;
    double union_measure = 0.0;
    double signed_quadratic = 0.0;  // a^T G a
    double worst_g_deviation = 0.0;
    std::vector<UnionThetaCheck> per_theta;
};

/// Inclusion-exclusion identity: the signed sum over nonempty subsets S of
/// (-1)^{|S|-1} W(cap_S A_i) has the law of W(cup A_i). Subsets are indexed
/// by nonzero bitmasks in increasing order.
inline UnionIdentityReport union_identity_check(const std::vector<IntervalSet>& family, const VolBand& band,
                                                std::size_t trials, std::uint64_t seed, std::size_t mc_paths = 0,
                                                double se_multiplier = 5.0, double tolerance = 1e-12)
{
    const std::size_t n = family.size();
    if (n == 0) throw std::invalid_argument("union_identity_check: empty family");
    if (n > 4) throw std::invalid_argument("union_identity_check: at most 4 sets (2^n - 1 intersections)");
    for (const auto& a : family)
        for (const auto& p : a.parts())
            if (!std::isfinite(p.a) || !std::isfinite(p.b))
                throw std::invalid_argument("union_identity_check: set of infinite measure");

    const std::size_t m = (std::size_t{1} << n) - 1;
    std::vector<IntervalSet> inter(m);
    Eigen::VectorXd sign(static_cast<Eigen::Index>(m));
    IntervalSet uni;
    for (const auto& a : family) uni = uni.unite(a);
    for (std::size_t mask = 1; mask <= m; ++mask) {
        IntervalSet acc;
        bool first = true;
        int bits = 0;
        for (std::size_t i = 0; i < n; ++i)
            if (mask & (std::size_t{1} << i)) {
                acc = first ? family[i] : acc.intersect(family[i]);
                first = false;
                ++bits;
            }
        inter[mask - 1] = acc;
        sign(static_cast<Eigen::Index>(mask - 1)) = bits % 2 ? 1.0 : -1.0;
    }
    const Eigen::MatrixXd g = set_gram(inter);

    UnionIdentityReport rep;
    rep.union_measure = uni.measure();
    rep.signed_quadratic = sign.dot(g * sign);

    // G_{2^n-1}(c a a^T) against G_union(c) for random scalars c.
    const GFunction gf(g, band);
    NormalStream z(derive_seed(seed, 0x5E7));
    const Eigen::MatrixXd aat = sign * sign.transpose();
    for (std::size_t t = 0; t < trials; ++t) {
        const double c = t % 2 ? std::abs(z()) : z();
        const double lhs = gf(c * aat);
        const double rhs = g_scalar(band, c * rep.union_measure);
        rep.worst_g_deviation = std::max(rep.worst_g_deviation, std::abs(lhs - rhs));
    }
    rep.pass = rep.worst_g_deviation <= tolerance * std::max(1.0, rep.union_measure);

    if (mc_paths > 0) {
        const FieldDistribution dist({}, g, band);
        const auto levels = scenario_levels(band);
        for (std::size_t k = 0; k < levels.size(); ++k) {
            const double theta = levels[k];
            const Eigen::MatrixXd xs = sample_given_theta(dist, theta, mc_paths, derive_seed(seed, 0xAB, k));
            std::vector<double> sq(mc_paths);
            for (std::size_t p = 0; p < mc_paths; ++p) {
                const double v = xs.row(static_cast<Eigen::Index>(p)).dot(sign);
                sq[p] = v * v;
            }
            UnionThetaCheck chk;
            chk.theta = theta;
            chk.second_moment = estimate_mean(sq);
            chk.target = theta * rep.union_measure;
            chk.pass = std::abs(chk.second_moment.mean - chk.target) <= se_multiplier * chk.second_moment.std_error +
                                                                            1e-12 * std::max(1.0, chk.target);
            rep.pass = rep.pass && chk.pass;
            rep.per_theta.push_back(chk);
        }
    }
    return rep;
}

}  // namespace gfield
