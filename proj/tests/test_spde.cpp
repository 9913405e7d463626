#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "gfield/spde.hpp"

using namespace gfield;
using std::numbers::pi;

namespace {

NoiseRealization zero_noise(const SPDEConfig& cfg, const VolBand& band)
{
    const auto part = cfg.partition();
    return {part, cfg.basis(), cfg.n_modes, ScenarioPath::constant(band, band.hi2(), cfg.horizon),
            Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(cfg.slices), static_cast<Eigen::Index>(cfg.n_modes))};
}

double cos_mode(std::size_t n, double x) { return n == 0 ? 1 / std::sqrt(2 * pi) : std::cos(n * x) / std::sqrt(pi); }

}  // namespace

TEST_CASE("green kernel symmetry and errors")
{
    const GreenKernel g(1.0);
    NormalStream z(3);
    for (int i = 0; i < 50; ++i) {
        const double t = 0.001 + z.uniform(), x = 2 * pi * z.uniform(), y = 2 * pi * z.uniform();
        CHECK(g.eigen(t, x, y) == g.eigen(t, y, x));
        CHECK(g.images(t, x, y) == g.images(t, y, x));
    }
    CHECK_THROWS_AS(g.eigen(0.0, 1, 1), std::domain_error);
    CHECK_THROWS_AS(g.images(-1.0, 1, 1), std::domain_error);
    CHECK_THROWS_AS(GreenKernel(0.0), std::invalid_argument);
}

TEST_CASE("green kernel mass identity by quadrature")
{
    const GreenKernel g(1.3);
    const int n = 4000;
    for (double t : {0.01, 0.1, 0.5, 2.0})
        for (double x : {0.0, 0.7, pi, 5.9}) {
            // Composite Simpson in y.
            double acc = g.eigen(t, x, 0) + g.eigen(t, x, 2 * pi);
            for (int k = 1; k < n; ++k) acc += (k % 2 ? 4 : 2) * g.eigen(t, x, 2 * pi * k / n);
            acc *= 2 * pi / n / 3;
            CHECK(std::abs(acc - std::exp(-1.69 * t)) < 1e-8);
        }
}

TEST_CASE("green kernel long-time limit")
{
    const GreenKernel g(1.0);
    for (double x : {0.0, 1.0, 3.0})
        for (double y : {0.5, 6.0}) {
            // Constant mode plus the first cosine mode; the next term is e^{-5t}.
            const double two_term = std::exp(-10.0) / (2 * pi) + std::exp(-20.0) * std::cos(x) * std::cos(y) / pi;
            CHECK(std::abs(g.eigen(10, x, y) - two_term) < 1e-20);
            CHECK(std::abs(g.eigen(10, x, y) - std::exp(-10.0) / (2 * pi)) <= std::exp(-20.0) / pi * (1 + 1e-9));
            CHECK(std::abs(g.eigen(12, x, y) - std::exp(-12.0) / (2 * pi)) < 1e-10);
        }
}

TEST_CASE("eigen and image forms agree")
{
    const GreenKernel g(1.0);
    NormalStream z(17);
    double worst = 0;
    for (int i = 0; i < 100; ++i) {
        const double t = std::pow(10.0, -3 + 3 * z.uniform());
        const double x = 2 * pi * z.uniform(), y = 2 * pi * z.uniform();
        worst = std::max(worst, std::abs(g.eigen(t, x, y) - g.images(t, x, y)));
    }
    CHECK(worst < 1e-10);

    const GreenKernel fixed(1.0, 60);
    for (double t : {0.01, 0.05, 0.3})
        CHECK(std::abs(fixed.eigen(t, 0.4, 2.2) - g.images(t, 0.4, 2.2)) < 1e-12);

    // F(x - y) + F(x + y) reproduces the kernel in both regimes.
    for (double t : {0.002, 0.4, 1.5, 4.0})
        CHECK(std::abs(g.half(t, 0.3 - 1.1) + g.half(t, 0.3 + 1.1) - g.eigen(t, 0.3, 1.1)) < 1e-12);
}

TEST_CASE("small-time diagonal asymptote")
{
    // A single image dominates: e^{-m^2 t} / (4 sqrt(pi t)).
    const GreenKernel g(1.0);
    const double t = 1e-3;
    for (double x : {1.0, 2.5, 4.0}) {
        const double expect = std::exp(-t) / (4 * std::sqrt(pi * t));
        CHECK(g.images(t, x, x) == Catch::Approx(expect).epsilon(1e-12));
        CHECK(g.eigen(t, x, x) == Catch::Approx(expect).epsilon(1e-10));
    }
}

TEST_CASE("heat semigroup")
{
    SPDEConfig cfg;
    cfg.mass = 0.8;
    const MeasureSpace s;
    const auto cos = Basis::cosine(s);
    const auto e1 = L2Element::basis_element(s, cos, 1);
    const auto out = heat_semigroup(e1, 0.3, cfg);
    const auto c = coeffs(out, cos, 4);
    CHECK(c(1) == std::exp(-(1 + 0.64) * 0.3));
    CHECK(c(0) == 0.0);
    CHECK(c(2) == 0.0);

    const auto psi = L2Element::from_function(s, [](double x) { return 0.5 + std::cos(2 * x) - 0.3 * std::cos(3 * x); });
    const auto same = heat_semigroup(psi, 0.0, cfg);
    for (double x : {0.0, 1.0, 2.0, 6.0})
        CHECK(same(x) == Catch::Approx(0.5 + std::cos(2 * x) - 0.3 * std::cos(3 * x)).margin(1e-10));

    // Kernel quadrature against the mode decay.
    const double t = 0.2;
    const GreenKernel g(cfg.mass);
    const auto decayed = heat_semigroup(psi, t, cfg);
    const int n = 2000;
    for (double x : {0.3, 2.0, 5.0}) {
        double acc = g.eigen(t, x, 0) * psi(0) + g.eigen(t, x, 2 * pi) * psi(2 * pi);
        for (int k = 1; k < n; ++k) {
            const double y = 2 * pi * k / n;
            acc += (k % 2 ? 4 : 2) * g.eigen(t, x, y) * (0.5 + std::cos(2 * y) - 0.3 * std::cos(3 * y));
        }
        acc *= 2 * pi / n / 3;
        CHECK(std::abs(acc - decayed(x)) < 1e-7);
    }

    const auto sine = L2Element::from_function(s, [](double x) { return std::sin(x); });
    CHECK_THROWS_AS(heat_semigroup(sine, 0.1, cfg), std::invalid_argument);
    CHECK_THROWS_AS(heat_semigroup(psi, -0.1, cfg), std::domain_error);
}

TEST_CASE("spectral solver deterministic part")
{
    SPDEConfig cfg;
    cfg.n_modes = 4;
    cfg.nx = 32;
    cfg.slices = 10;
    const auto noise = zero_noise(cfg, VolBand(1, 4));
    Eigen::VectorXd psi = Eigen::VectorXd::Zero(4);
    psi(1) = 1.0;  // a = -(1 + 1) = -2
    const auto path = spectral_solve(psi, noise, cfg);
    CHECK(path.mode(10, 1) == Catch::Approx(std::exp(-1.0)).epsilon(1e-14));
    CHECK(path.mode(10, 1) == Catch::Approx(0.36788).epsilon(1e-5));
    CHECK(path.mode(10, 0) == 0.0);
    for (std::size_t i = 0; i < cfg.nx; ++i)
        CHECK(path.value(10, i) == Catch::Approx(std::exp(-1.0) * cos_mode(1, path.x(i))).margin(1e-14));
}

TEST_CASE("spectral solver matches the discrete closed form")
{
    SPDEConfig cfg;
    cfg.n_modes = 6;
    cfg.nx = 16;
    cfg.slices = 12;
    cfg.mass = 0.7;
    const VolBand band(1, 4);
    const auto scen = enumerate_scenarios(band, uniform_grid(cfg.horizon, 3))[5];
    const auto noise = sample_noise(cfg.partition(), cfg.basis(), cfg.n_modes, scen, 99);
    Eigen::VectorXd psi(3);
    psi << 0.2, -0.4, 1.0;
    const auto path = spectral_solve(psi, noise, cfg, 3);
    REQUIRE(path.times().size() == 5);
    for (std::size_t o = 0; o < path.times().size(); ++o) {
        const double t = path.times()[o];
        for (std::size_t n = 0; n < cfg.n_modes; ++n) {
            const double a = -(double(n * n) + 0.49);
            double v = n < 3 ? psi(static_cast<Eigen::Index>(n)) * std::exp(a * t) : 0.0;
            for (std::size_t j = 0; j < 3 * o; ++j)
                v += std::exp(a * (t - noise.partition().midpoint(j))) * noise.increment(j, n);
            CHECK(path.mode(o, n) == Catch::Approx(v).margin(1e-13));
        }
    }
}

TEST_CASE("mild solver without noise is heat decay")
{
    SPDEConfig cfg;
    cfg.n_modes = 8;
    cfg.nx = 32;
    cfg.slices = 8;
    const auto noise = zero_noise(cfg, VolBand(1, 4));
    Eigen::VectorXd psi(3);
    psi << 1.0, 0.0, -0.5;
    const auto mild = mild_solve(psi, noise, cfg);
    const auto spec = spectral_solve(psi, noise, cfg);
    CHECK(path_difference(mild, spec).abs_sup < 1e-14);
}

TEST_CASE("mild solver single slice")
{
    SPDEConfig cfg;
    cfg.n_modes = 8;
    cfg.nx = 128;
    cfg.slices = 1;
    cfg.horizon = 0.05;
    const VolBand band(1, 4);
    const auto noise = sample_noise(cfg.partition(), cfg.basis(), cfg.n_modes,
                                    ScenarioPath::constant(band, 4, cfg.horizon), 5);
    const auto mild = mild_solve(Eigen::VectorXd::Zero(1), noise, cfg);
    const double dx = cfg.dx(), tau = 0.025;
    double worst_cell = 0, worst_point = 0, scale = 0;
    for (std::size_t i = 0; i < cfg.nx; ++i) {
        const double x = cfg.x(i);
        double point = 0, cell = 0;
        for (std::size_t n = 0; n < cfg.n_modes; ++n) {
            const double a = -(double(n * n) + 1);
            const double w = std::exp(a * tau) * noise.increment(0, n) * cos_mode(n, x);
            // Averaging e_n over a cell of width dx multiplies it by sinc(n dx / 2).
            const double sinc = n == 0 ? 1.0 : std::sin(n * dx / 2) / (n * dx / 2);
            point += w;
            cell += w * sinc;
        }
        scale = std::max(scale, std::abs(point));
        worst_point = std::max(worst_point, std::abs(mild.value(1, i) - point));
        worst_cell = std::max(worst_cell, std::abs(mild.value(1, i) - cell));
    }
    CHECK(worst_cell < 1e-12);
    CHECK(worst_point < 5e-3 * scale);
}

TEST_CASE("mild against spectral with cell-averaged increments")
{
    SPDEConfig cfg;
    cfg.n_modes = 32;
    cfg.nx = 64;
    cfg.slices = 16;
    const VolBand band(1, 4);
    const auto scen = enumerate_scenarios(band, uniform_grid(cfg.horizon, 4))[9];
    const auto noise = sample_noise(cfg.partition(), cfg.basis(), cfg.n_modes, scen, 21);
    Eigen::VectorXd psi(2);
    psi << 0.3, 0.5;
    const auto mild = mild_solve(psi, noise, cfg, 4);

    Eigen::MatrixXd inc = noise.increments();
    for (Eigen::Index n = 1; n < inc.cols(); ++n) {
        const double h = n * cfg.dx() / 2;
        inc.col(n) *= std::sin(h) / h;
    }
    const NoiseRealization averaged(noise.partition(), noise.basis(), noise.n_modes(), noise.scenario(), inc);
    const auto spec = spectral_solve(psi, averaged, cfg, 4);
    // Only aliased modes of order nx - n separate the two.
    CHECK(path_difference(mild, spec).abs_sup < 1e-6);
}

TEST_CASE("solver contract errors")
{
    SPDEConfig cfg;
    cfg.n_modes = 4;
    cfg.nx = 16;
    cfg.slices = 4;
    const VolBand band(1, 4);
    const auto scen = ScenarioPath::constant(band, 2, cfg.horizon);
    const MeasureSpace s;
    const auto trig = sample_noise(cfg.partition(), Basis::full_trig(s), 4, scen, 1);
    CHECK_THROWS_AS(spectral_solve(Eigen::VectorXd::Zero(1), trig, cfg), std::invalid_argument);
    CHECK_THROWS_AS(mild_solve(Eigen::VectorXd::Zero(1), trig, cfg), std::invalid_argument);
    const auto other = sample_noise(TimePartition::uniform(cfg.horizon, 8), cfg.basis(), 4, scen, 1);
    CHECK_THROWS_AS(spectral_solve(Eigen::VectorXd::Zero(1), other, cfg), std::invalid_argument);
    const auto ok = sample_noise(cfg.partition(), cfg.basis(), 4, scen, 1);
    CHECK_THROWS_AS(spectral_solve(Eigen::VectorXd::Zero(1), ok, cfg, 3), std::invalid_argument);
    CHECK_THROWS_AS(spectral_solve(Eigen::VectorXd::Zero(5), ok, cfg), std::invalid_argument);
    SPDEConfig bad = cfg;
    bad.mass = 0;
    CHECK_THROWS_AS(spectral_solve(Eigen::VectorXd::Zero(1), ok, bad), std::invalid_argument);
    const auto sine = L2Element::from_function(s, [](double x) { return std::sin(2 * x); });
    CHECK_THROWS_AS(mild_solve(sine, ok, cfg), std::invalid_argument);
    const auto high = L2Element::basis_element(s, Basis::cosine(s), 6);
    CHECK_THROWS_AS(spectral_solve(high, ok, cfg), std::invalid_argument);
}

TEST_CASE("G-OU mean matches drift under every scenario")
{
    const auto mode = GOUMode::make(1, 1.0, 0.8);
    const VolBand band(1, 4);
    const auto part = TimePartition::uniform(1.0, 8);
    const auto scen = enumerate_scenarios(band, uniform_grid(1.0, 4));
    const auto rep = ou_mean_check(mode, part, scen, 20000, 7);
    INFO("worst z " << rep.worst_z);
    CHECK(rep.pass);
    CHECK(rep.worst_z < 3.0);
}

TEST_CASE("degenerate band reproduces the classical OU covariance")
{
    const auto mode = GOUMode::make(1, 1.0, 0.0);
    const VolBand band(2, 2);
    const auto part = TimePartition::uniform(1.0, 200);
    const auto xs = simulate_gou(mode, part, ScenarioPath::constant(band, 2, 1.0), 40000, 8);
    for (auto [i, j] : std::vector<std::pair<int, int>>{{60, 60}, {60, 140}, {200, 200}, {20, 200}}) {
        std::vector<double> prod(static_cast<std::size_t>(xs.rows()));
        for (Eigen::Index p = 0; p < xs.rows(); ++p) prod[static_cast<std::size_t>(p)] = xs(p, i) * xs(p, j);
        const auto m = estimate_mean(prod);
        const double target = classical_ou_cov(2.0, mode.drift, part.t(i), part.t(j));
        INFO("s " << part.t(i) << " t " << part.t(j) << " est " << m.mean << " target " << target);
        CHECK(std::abs(m.mean - target) < 5 * m.std_error);
    }
}

TEST_CASE("covariance bound")
{
    const VolBand band(1, 4);
    const auto mode = GOUMode::make(1, 1.0, 0.5);  // a = -2
    const auto part = TimePartition::uniform(1.0, 20);

    const auto diag = ou_cov_bound_check(mode, 0.6, 0.6, part, band.hi2(), extremal_scenarios(band, 1.0), 40000, 2);
    CHECK(diag.pass);
    CHECK(diag.argmax == 1);
    CHECK(diag.bound == Catch::Approx(classical_ou_cov(4.0, -2, 0.6, 0.6)).epsilon(1e-14));
    CHECK(std::abs(diag.estimate - diag.bound) < 5 * diag.std_error);

    const auto zero = ou_cov_bound_check(mode, 0.0, 0.7, part, band.hi2(), extremal_scenarios(band, 1.0), 100, 2);
    CHECK(zero.estimate == 0.0);
    CHECK(zero.bound == 0.0);
    CHECK(zero.pass);

    const auto sweep = enumerate_scenarios(band, uniform_grid(1.0, 5));
    const auto bb = ou_cov_bound_check(mode, 0.3, 0.7, part, band.hi2(), sweep, 20000, 3);
    INFO("estimate " << bb.estimate << " bound " << bb.bound << " se " << bb.std_error);
    CHECK(bb.pass);
    CHECK(bb.bound > 0);

    CHECK_THROWS_AS(ou_cov_bound_check(mode, 0.33, 0.7, part, band.hi2(), sweep, 10, 3), std::invalid_argument);
}

TEST_CASE("weak form residual")
{
    SPDEConfig cfg;
    cfg.n_modes = 16;
    cfg.nx = 64;
    cfg.slices = 64;
    const VolBand band(1, 4);
    const auto quiet = zero_noise(cfg, band);
    Eigen::VectorXd e1 = Eigen::VectorXd::Zero(2);
    e1(1) = 1.0;
    const auto f = TestFunction::mode(1, [](double t) { return std::cos(t) + t * t; },
                                      [](double t) { return -std::sin(t) + 2 * t; });
    CHECK(weak_solution_residual(spectral_solve(e1, quiet, cfg), quiet, f, cfg) < 1e-4);
    CHECK(weak_solution_residual(mild_solve(e1, quiet, cfg), quiet, f, cfg) < 1e-4);

    const auto noise = sample_noise(cfg.partition(), cfg.basis(), cfg.n_modes,
                                    ScenarioPath::constant(band, 4, cfg.horizon), 31);
    const auto path = spectral_solve(e1, noise, cfg);
    CHECK(weak_solution_residual(path, noise, TestFunction::zero(), cfg) == 0.0);

    TestFunction bad{[](double, double x) { return std::sin(x); }, [](double, double) { return 0.0; },
                     [](double, double x) { return std::cos(x); }, [](double, double x) { return -std::sin(x); }};
    CHECK_THROWS_AS(weak_solution_residual(path, noise, bad, cfg), std::invalid_argument);
    CHECK_THROWS_AS(weak_solution_residual(spectral_solve(e1, noise, cfg, 2), noise, f, cfg), std::invalid_argument);
}

TEST_CASE("weak form residual shrinks under refinement")
{
    SPDEConfig cfg;
    cfg.n_modes = 16;
    cfg.nx = 64;
    const VolBand band(1, 4);
    const auto scen = enumerate_scenarios(band, uniform_grid(cfg.horizon, 4))[6];
    const auto fine = sample_noise(TimePartition::uniform(cfg.horizon, 256), cfg.basis(), cfg.n_modes, scen, 4);
    const auto f = TestFunction::mode(0, [](double t) { return 1 + t; }, [](double) { return 1.0; }) +
                   TestFunction::mode(2, [](double t) { return std::exp(-t); }, [](double t) { return -std::exp(-t); });
    Eigen::VectorXd psi(3);
    psi << 0.1, 0.0, 0.4;
    double prev = 1e300;
    for (std::size_t slices : {16, 32, 64, 128, 256}) {
        cfg.slices = slices;
        const auto noise = fine.coarsen(256 / slices);
        const double r = weak_solution_residual(spectral_solve(psi, noise, cfg), noise, f, cfg);
        INFO("slices " << slices << " residual " << r);
        CHECK(r < prev);
        prev = r;
    }
    CHECK(prev < 1e-4);
}

TEST_CASE("second-moment bound")
{
    // psi = 0, m = 1, band (1, 4): the t -> infinity bound is the mode sum.
    double sum = 0;
    for (int n = 1000000; n >= 1; --n) sum += 4.0 / (2.0 * (double(n) * n + 1));
    const double oracle = sum / pi + 4.0 / (2 * 2 * pi);
    CHECK(second_moment_bound(Eigen::VectorXd::Zero(1), 4.0, 1.0, 60.0) == Catch::Approx(oracle).epsilon(1e-6));
    CHECK(second_moment_bound(Eigen::VectorXd::Zero(1), 4.0, 1.0, 60.0, 8) ==
          Catch::Approx(second_moment_bound(Eigen::VectorXd::Zero(1), 4.0, 1.0, 60.0, 200)).epsilon(1e-12));
    // Bounded in t: monotone towards the limit.
    double prev = 0;
    for (double t : {0.1, 1.0, 5.0, 10.0}) {
        const double b = second_moment_bound(Eigen::VectorXd::Zero(1), 4.0, 1.0, t);
        CHECK(b > prev);
        CHECK(b <= second_moment_bound(Eigen::VectorXd::Zero(1), 4.0, 1.0, 60.0));
        prev = b;
    }
}

TEST_CASE("second-moment sweep")
{
    SPDEConfig cfg;
    cfg.n_modes = 32;
    cfg.nx = 32;
    cfg.slices = 16;
    const VolBand band(1, 4);
    const auto scen = enumerate_scenarios(band, uniform_grid(cfg.horizon, 2));
    const auto rep = second_moment_sup(Eigen::VectorXd::Zero(1), band, cfg, scen, 2000, 12, 2);
    INFO("empirical " << rep.empirical_sup << " bound " << rep.bound_sup << " excess " << rep.worst_excess);
    CHECK(rep.pass);
    CHECK(rep.empirical_sup < rep.bound_sup);
    CHECK(rep.argmax_scenario == scen.size() - 1);

    // Degenerate band at zero: the sup is the largest decayed initial value.
    const VolBand still(0, 0);
    Eigen::VectorXd psi(2);
    psi << 0.5, 1.0;
    const auto det = second_moment_sup(psi, still, cfg, extremal_scenarios(still, cfg.horizon), 4, 1);
    const auto quiet = zero_noise(cfg, VolBand(0, 0));
    const auto path = spectral_solve(psi, quiet, cfg);
    CHECK(det.empirical_sup == Catch::Approx(path.values().array().square().maxCoeff()).epsilon(1e-14));
    CHECK(det.pass);

    // Raising the mode count leaves the low modes' normals unchanged.
    SPDEConfig wide = cfg;
    wide.n_modes = 64;
    const auto rep64 = second_moment_sup(Eigen::VectorXd::Zero(1), band, wide, scen, 2000, 12, 2);
    CHECK(std::abs(rep64.empirical_sup - rep.empirical_sup) < 1e-3);
}

TEST_CASE("second-moment sweep is independent of worker count")
{
    SPDEConfig cfg;
    cfg.n_modes = 8;
    cfg.nx = 16;
    cfg.slices = 8;
    const VolBand band(1, 4);
    const auto scen = extremal_scenarios(band, cfg.horizon);
    const auto a = second_moment_sup(Eigen::VectorXd::Zero(1), band, cfg, scen, 100, 3, 1, 3.0, 1);
    const auto b = second_moment_sup(Eigen::VectorXd::Zero(1), band, cfg, scen, 100, 3, 1, 3.0, 4);
    CHECK(a.empirical_sup == b.empirical_sup);
    CHECK(a.worst_excess == b.worst_excess);
}

TEST_CASE("Picard iteration converges to the closed form")
{
    const VolBand band(1, 4);
    const auto part = TimePartition::uniform(0.5, 16);
    const auto scen = enumerate_scenarios(band, uniform_grid(0.5, 4))[10];
    std::vector<NoiseRealization> paths;
    for (std::uint64_t p = 0; p < 4; ++p) paths.push_back(sample_noise(part, Basis::cosine(MeasureSpace()), 4, scen, p));
    for (std::size_t n = 0; n < 4; ++n) {
        const auto mode = GOUMode::make(n, 1.0, 0.3);
        const auto rep = picard_iteration(mode, paths);
        INFO("mode " << n << " iterations " << rep.iterations << " final " << rep.weighted_error.back());
        CHECK(rep.converged);
        CHECK(rep.iterations <= 30);
        CHECK(rep.weighted_error.back() < 1e-8);
        CHECK(rep.sup_error.back() < 1e-8);
        for (double r : rep.step_ratio) CHECK(r <= 1 / std::sqrt(2.0) + 1e-12);
    }
    // A single iteration cannot reach the fixed point.
    const auto one = picard_iteration(GOUMode::make(3, 1.0, 0.3), paths, 1);
    CHECK_FALSE(one.converged);
}
