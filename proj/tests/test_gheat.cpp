#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "gfield/gheat.hpp"

using namespace gfield;

namespace {

// Composite Simpson against the N(0, var) density.
double gauss_expect(const std::function<double(double)>& phi, double var)
{
    if (var == 0.0) return phi(0.0);
    const double s = std::sqrt(var);
    const int n = 20000;
    const double a = -14 * s, h = 28 * s / n;
    double acc = 0.0;
    for (int i = 0; i <= n; ++i) {
        const double x = a + i * h;
        const double w = (i == 0 || i == n) ? 1 : (i % 2 ? 4 : 2);
        acc += w * phi(x) * std::exp(-x * x / (2 * var));
    }
    return acc * h / 3 / std::sqrt(2 * std::numbers::pi * var);
}

double pow_abs(double x, int k) { return std::pow(std::abs(x), k); }

}  // namespace

TEST_CASE("1D G-heat closed-form anchors")
{
    const VolBand band(1, 4);
    const auto grid = PDEGrid::make(band, 1.0, 801);
    CHECK(std::abs(solve_gheat_1d(band, {[](double x) { return x * x; }, 2}, 1.0, grid) - 4.0) < 1e-2);
    CHECK(std::abs(solve_gheat_1d(band, {[](double x) { return x; }, 1}, 1.0, grid)) < 1e-3);
    CHECK(std::abs(solve_gheat_1d(band, {[](double x) { return std::abs(x); }, 1}, 1.0, grid) -
                   2 * std::sqrt(2 / std::numbers::pi)) < 1e-2);
    CHECK(std::abs(solve_gheat_1d(band, {[](double x) { return -x * x; }, 2}, 1.0, grid) + 1.0) < 1e-2);
    CHECK(std::abs(solve_gheat_1d_lower(band, {[](double x) { return x * x; }, 2}, 1.0, grid) - 1.0) < 1e-2);
}

TEST_CASE("PDE matches closed-form absolute moments")
{
    const VolBand band(1, 4);
    const auto grid = PDEGrid::make(band, 1.0, 1201);
    for (int k = 1; k <= 4; ++k) {
        const double up = solve_gheat_1d(band, {[k](double x) { return pow_abs(x, k); }, k}, 1.0, grid);
        const double lo = solve_gheat_1d_lower(band, {[k](double x) { return pow_abs(x, k); }, k}, 1.0, grid);
        INFO("k = " << k);
        CHECK(std::abs(up - gnormal_abs_moment(band, 1, k, MomentSide::upper)) < 1e-2);
        CHECK(std::abs(lo - gnormal_abs_moment(band, 1, k, MomentSide::lower)) < 1e-2);
    }
}

TEST_CASE("closed-form moments")
{
    const VolBand band(1, 4);
    CHECK(gnormal_abs_moment(band, 1, 2, MomentSide::upper) == 4);
    CHECK(gnormal_abs_moment(band, 1, 1, MomentSide::lower) == Catch::Approx(2 / std::sqrt(2 * std::numbers::pi)));
    for (int k = 1; k <= 5; ++k) CHECK(gnormal_abs_moment(band, 0, k, MomentSide::upper) == 0);
    CHECK_THROWS_AS(gnormal_abs_moment(band, 1, 0, MomentSide::upper), std::invalid_argument);
    // Classical Gaussian quadrature at the band edges.
    for (int k = 1; k <= 4; ++k) {
        CHECK(gnormal_abs_moment(band, 1.3, k, MomentSide::upper) ==
              Catch::Approx(gauss_expect([k](double x) { return pow_abs(x, k); }, 4 * 1.69)).epsilon(1e-9));
        CHECK(gnormal_abs_moment(band, 1.3, k, MomentSide::lower) ==
              Catch::Approx(gauss_expect([k](double x) { return pow_abs(x, k); }, 1.69)).epsilon(1e-9));
    }
}

TEST_CASE("degenerate band reproduces classical Gaussian expectations")
{
    const VolBand band(2, 2);
    const auto grid = PDEGrid::make(band, 1.0, 1201);
    const std::vector<std::function<double(double)>> polys = {
        [](double x) { return 1 + x; },
        [](double x) { return x * x - 3 * x; },
        [](double x) { return x * x * x + 0.5 * x * x; },
        [](double x) { return 0.1 * x * x * x * x - x * x + 2; },
    };
    for (const auto& p : polys)
        CHECK(std::abs(solve_gheat_1d(band, {p, 4}, 1.0, grid) - gauss_expect(p, 2.0)) < 1e-3);
}

TEST_CASE("convex payoffs attain the top, concave the bottom")
{
    const VolBand band(1, 4);
    const auto grid = PDEGrid::make(band, 1.0, 801);
    const auto convex = [](double x) { return std::abs(x - 0.5) + 0.3 * x * x; };
    const auto concave = [&](double x) { return -convex(x); };
    CHECK(std::abs(solve_gheat_1d(band, {convex, 2}, 1.0, grid) - gauss_expect(convex, 4)) < 1e-2);
    CHECK(std::abs(solve_gheat_1d(band, {concave, 2}, 1.0, grid) - gauss_expect(concave, 1)) < 1e-2);
}

TEST_CASE("Richardson: halving dx reduces the error about fourfold")
{
    const VolBand band(1, 4);
    const auto phi = PayoffSpec{[](double x) { return std::abs(x) * std::abs(x) * std::abs(x); }, 3};
    const double exact = gnormal_abs_moment(band, 1, 3, MomentSide::upper);
    auto g1 = PDEGrid::make(band, 1.0, 101);
    auto g2 = g1;
    g2.nx = 2 * g1.nx - 1;
    g2.dt = g1.dt / 4;
    const double e1 = std::abs(solve_gheat_1d(band, phi, 1.0, g1) - exact);
    const double e2 = std::abs(solve_gheat_1d(band, phi, 1.0, g2) - exact);
    const double ratio = e1 / e2;
    INFO("errors " << e1 << " " << e2);
    CHECK(ratio > 3.0);
    CHECK(ratio < 5.0);
}

TEST_CASE("grid validation")
{
    const VolBand band(1, 4);
    auto grid = PDEGrid::make(band, 1.0, 101);
    grid.dt *= 1.5;
    CHECK_THROWS_WITH(solve_gheat_1d(band, {[](double x) { return x; }, 1}, 1.0, grid),
                      Catch::Matchers::ContainsSubstring("CFL"));
    auto narrow = PDEGrid::make(band, 1.0, 101);
    narrow.half_width = 3;
    CHECK_THROWS_AS(solve_gheat_1d(band, {[](double x) { return x; }, 1}, 1.0, narrow), std::invalid_argument);
    CHECK_THROWS_AS(solve_gheat_1d(band, {[](double x) { return x > 1 ? NAN : x; }, 1}, 1.0,
                                   PDEGrid::make(band, 1.0, 101)),
                    std::domain_error);
}

TEST_CASE("2D covariance oracle")
{
    const VolBand band(1, 4);
    const PayoffSpec2 xy{[](double x, double y) { return x * y; }, 2};
    auto solve = [&](double rho) {
        Eigen::MatrixXd g(2, 2);
        g << 1, rho, rho, 1;
        const GFunction gf(g, band);
        const auto grid = PDEGrid::make(band, 1.0, 121, 2, 0.9, g.trace());
        return solve_gheat_2d(gf, xy, 1.0, grid);
    };
    CHECK(std::abs(solve(0.0)) < 1e-2);
    CHECK(std::abs(solve(0.5) - 2.0) < 2e-2);
    CHECK(std::abs(solve(-0.5) + 0.5) < 2e-2);
}

TEST_CASE("2D marginal matches the 1D solver")
{
    const VolBand band(1, 4);
    Eigen::MatrixXd g(2, 2);
    g << 1, 0.3, 0.3, 2;
    const GFunction gf(g, band);
    const auto grid2 = PDEGrid::make(band, 1.0, 121, 2, 0.9, g.trace());
    const double two = solve_gheat_2d(gf, {[](double x, double) { return x * x; }, 2}, 1.0, grid2);
    const auto grid1 = PDEGrid{grid2.half_width, grid2.nx, grid2.dt, 1.0};
    const double one = solve_gheat_1d(band, {[](double x) { return x * x; }, 2}, 1.0, grid1);
    CHECK(std::abs(two - one) < 1e-2);
    auto bad = grid2;
    bad.dt *= 2;
    CHECK_THROWS_AS(solve_gheat_2d(gf, {[](double x, double) { return x; }, 1}, 1.0, bad), std::invalid_argument);
}
