#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "gfield/field.hpp"
#include "gfield/gheat.hpp"

using namespace gfield;
using std::numbers::pi;

namespace {

// Entrywise z-scores of the empirical second-moment matrix against target.
double worst_cov_z(const Eigen::MatrixXd& xs, const Eigen::MatrixXd& target)
{
    double worst = 0;
    const auto n = xs.rows();
    for (Eigen::Index i = 0; i < xs.cols(); ++i)
        for (Eigen::Index j = 0; j < xs.cols(); ++j) {
            std::vector<double> prod(static_cast<std::size_t>(n));
            for (Eigen::Index p = 0; p < n; ++p) prod[static_cast<std::size_t>(p)] = xs(p, i) * xs(p, j);
            const auto m = estimate_mean(prod);
            const double z = std::abs(m.mean - target(i, j)) / std::max(m.std_error, 1e-300);
            worst = std::max(worst, z);
        }
    return worst;
}

}  // namespace

TEST_CASE("fdd builds gram and G-function")
{
    const MeasureSpace s;
    const VolBand band(1, 4);
    const auto h = L2Element::indicator(s, IntervalSet(0, 1.5), 2.0);
    const auto d = fdd({h}, band);
    CHECK(d.variance_band().first == Catch::Approx(6.0));
    CHECK(d.variance_band().second == Catch::Approx(24.0));

    const auto cos = Basis::cosine(s);
    const auto pair = fdd({L2Element::basis_element(s, cos, 1), L2Element::basis_element(s, cos, 4)}, band);
    CHECK((pair.gram() - Eigen::MatrixXd::Identity(2, 2)).cwiseAbs().maxCoeff() < 1e-12);
    CHECK_THROWS_AS(fdd({}, band), std::invalid_argument);
    CHECK_THROWS_AS(fdd({h, L2Element::indicator(MeasureSpace(1.0), IntervalSet(0, 0.5))}, band),
                    std::invalid_argument);
}

TEST_CASE("sampler covariance matches theta times gram")
{
    const MeasureSpace s;
    const VolBand band(1, 4);
    const auto d = fdd({L2Element::indicator(s, IntervalSet(0, 2)), L2Element::indicator(s, IntervalSet(1, 3)),
                        L2Element::from_function(s, [](double x) { return std::sin(x) + 0.3; })},
                       band);
    for (double theta : {1.0, 2.5, 4.0}) {
        const auto xs = sample_given_theta(d, theta, 100000, 77);
        CHECK(worst_cov_z(xs, theta * d.gram()) < 5.0);
    }
    CHECK_THROWS_AS(sample_given_theta(d, 4.5, 10, 1), std::invalid_argument);
    CHECK_THROWS_AS(sample_given_theta(d, 0.5, 10, 1), std::invalid_argument);
}

TEST_CASE("top of band second moment")
{
    const MeasureSpace s;
    const VolBand band(1, 4);
    const auto h = L2Element::indicator(s, IntervalSet(0.5, 1.25));
    const auto xs = sample_given_theta(fdd({h}, band), band.hi2(), 100000, 3);
    std::vector<double> sq(static_cast<std::size_t>(xs.rows()));
    for (Eigen::Index p = 0; p < xs.rows(); ++p) sq[static_cast<std::size_t>(p)] = xs(p, 0) * xs(p, 0);
    const auto m = estimate_mean(sq);
    CHECK(std::abs(m.mean - 4 * 0.75) < 5 * m.std_error);
}

TEST_CASE("rank-one gram gives identical coordinates")
{
    const MeasureSpace s;
    const VolBand band(1, 4);
    const auto h = L2Element::from_function(s, [](double x) { return std::cos(2 * x) + x / 7; });
    const auto xs = sample_given_theta(fdd({h, h}, band), 2.0, 1000, 5);
    for (Eigen::Index p = 0; p < xs.rows(); ++p) CHECK(xs(p, 0) == xs(p, 1));
    const auto h2 = L2Element::indicator(s, IntervalSet(1, 2));
    const auto scaled = L2Element::indicator(s, IntervalSet(1, 2), 3.0);
    const auto ys = sample_given_theta(fdd({h2, scaled}, band), 2.0, 1000, 5);
    for (Eigen::Index p = 0; p < ys.rows(); ++p) CHECK(ys(p, 1) == Catch::Approx(3 * ys(p, 0)).epsilon(1e-12));
}

TEST_CASE("sampler is deterministic across worker counts")
{
    const MeasureSpace s;
    const auto d = fdd({L2Element::indicator(s, IntervalSet(0, 2)), L2Element::indicator(s, IntervalSet(1, 3))},
                       VolBand(1, 4));
    CHECK(sample_given_theta(d, 2, 777, 9, 1) == sample_given_theta(d, 2, 777, 9, 3));
}

TEST_CASE("expansion surrogate")
{
    const MeasureSpace s;
    const VolBand band(1, 4);
    const auto cos = Basis::cosine(s);
    const auto e2 = L2Element::from_grid(s, to_grid(L2Element::basis_element(s, cos, 2)));
    for (std::size_t n : {3, 8, 32}) {
        const auto sur = expansion_surrogate(e2, cos, n, band);
        CHECK(sur.dist.gram()(0, 0) == Catch::Approx(fdd({e2}, band).gram()(0, 0)).epsilon(1e-10));
        CHECK(std::abs(sur.defect) < 1e-10);
    }

    const auto ft = Basis::full_trig(s);
    const auto x = L2Element::from_function(s, [](double t) { return t; });
    double prev_defect = 1e300, prev_var = -1;
    for (std::size_t n = 1; n <= 64; ++n) {
        const auto sur = expansion_surrogate(x, ft, n, band);
        // x has nonzero sine content at every frequency, so every odd step strictly shrinks the defect.
        if (n % 2 == 1) CHECK(sur.defect < prev_defect);
        else CHECK(sur.defect <= prev_defect);
        CHECK(sur.dist.variance_band().second >= prev_var);
        prev_defect = sur.defect;
        prev_var = sur.dist.variance_band().second;
    }
    CHECK(prev_var <= norm_sq(x) * band.hi2());
}

TEST_CASE("inclusion-exclusion anchors")
{
    const VolBand band(1, 4);
    const auto disjoint = union_identity_check({IntervalSet(0, 1), IntervalSet(2, 4.5)}, band, 50, 1);
    CHECK(disjoint.pass);
    CHECK(disjoint.signed_quadratic == Catch::Approx(3.5));
    CHECK(disjoint.union_measure == 3.5);

    const auto two = union_identity_check({IntervalSet(0, 2), IntervalSet(1, 3)}, band, 50, 1);
    CHECK(two.signed_quadratic == Catch::Approx(2.0 + 2.0 - 1.0).epsilon(1e-15));
    CHECK(two.union_measure == 3);
    CHECK(two.worst_g_deviation < 1e-12);

    const auto three = union_identity_check({IntervalSet(0, 2), IntervalSet(1, 3), IntervalSet(2, 4)}, band, 50, 1);
    CHECK(three.signed_quadratic == Catch::Approx(4.0).epsilon(1e-15));
    CHECK(three.pass);

    std::vector<IntervalSet> five(5, IntervalSet(0, 1));
    CHECK_THROWS_AS(union_identity_check(five, band, 1, 1), std::invalid_argument);
}

TEST_CASE("inclusion-exclusion Monte Carlo variance")
{
    const VolBand band(1, 4);
    const auto rep = union_identity_check({IntervalSet(0, 2), IntervalSet(1, 3), IntervalSet({{2.5, 4}, {5, 6}})},
                                          band, 20, 11, 100000);
    REQUIRE(rep.per_theta.size() == 2);
    for (const auto& c : rep.per_theta) {
        INFO("theta " << c.theta << " mean " << c.second_moment.mean << " target " << c.target);
        CHECK(c.pass);
    }
}

TEST_CASE("orthogonal parameters are uncorrelated but not independent")
{
    const MeasureSpace s;
    const VolBand band(1, 4);
    const auto d = fdd({L2Element::indicator(s, IntervalSet(0, 1)), L2Element::indicator(s, IntervalSet(1, 2))}, band);
    Eigen::MatrixXd swap(2, 2);
    swap << 0, 1, 1, 0;
    CHECK(g_matrix(d.gfun(), swap) == 0.0);
    const auto scen = extremal_scenarios(band, 1.0);
    const auto est = sup_expectation<Eigen::VectorXd>(
        [](const Eigen::VectorXd& v) { return std::max(0.0, v(0) * v(1)); }, field_sampler(d), scen, 20000, 4);
    CHECK(est.value > 5 * est.std_error);
    // Classical value under the top scenario: sigma_hi^2 / pi.
    CHECK(std::abs(est.value - band.hi2() / pi) < 5 * est.std_error);
}

TEST_CASE("surrogate gap is controlled by the defect")
{
    const MeasureSpace s;
    const VolBand band(1, 4);
    const auto ft = Basis::full_trig(s);
    const auto h = L2Element::indicator(s, IntervalSet(0.4, 1.0));
    const auto sur = expansion_surrogate(h, ft, 32, band);
    const double vt = sur.target_norm_sq, vs = sur.projected_norm_sq;
    const auto phi = PayoffSpec{[](double x) { return std::abs(x); }, 1};
    const auto g1 = PDEGrid::make(band, vt, 801);
    const auto g2 = PDEGrid::make(band, vs, 801);
    const double gap = std::abs(solve_gheat_1d(band, phi, vt, g1) - solve_gheat_1d(band, phi, vs, g2));
    const double bound = band.hi() * std::sqrt(2 / pi) * std::abs(std::sqrt(vt) - std::sqrt(vs));
    CHECK(gap <= bound + 2e-3);
}
