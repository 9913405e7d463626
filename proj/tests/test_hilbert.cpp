#include "catch_amalgamated.hpp"

#include <cmath>
#include <numbers>

#include "gfield/hilbert.hpp"
#include "gfield/rng.hpp"

using namespace gfield;
using std::numbers::pi;

namespace {

// Composite Simpson on [0, L] with n (even) panels.
double simpson(const std::function<double(double)>& f, double L, int n = 200000)
{
    const double h = L / n;
    double acc = f(0) + f(L);
    for (int i = 1; i < n; ++i) acc += (i % 2 ? 4 : 2) * f(i * h);
    return acc * h / 3;
}

L2Element random_trig(const MeasureSpace& s, const Basis& b, std::size_t n, std::uint64_t seed)
{
    NormalStream z(seed);
    Eigen::VectorXd c(static_cast<Eigen::Index>(n));
    for (Eigen::Index i = 0; i < c.size(); ++i) c(i) = z() / (1 + i);
    return L2Element::from_coeffs(s, b, c);
}

}  // namespace

TEST_CASE("interval algebra")
{
    const IntervalSet a(0, 2), b(1, 3), c(5, 6);
    CHECK(a.intersect(b).measure() == 1);
    CHECK(a.unite(b).measure() == 3);
    CHECK(a.unite(c).measure() == 3);
    CHECK(a.unite(c).parts().size() == 2);
    CHECK(a.intersect(c).empty());
    CHECK(IntervalSet({{0, 1}, {1, 2}}).parts().size() == 1);
    CHECK(IntervalSet({{0, 1}, {0.5, 0.7}, {3, 2}}).measure() == 1);
}

TEST_CASE("measure space and basis validation")
{
    CHECK_THROWS_AS(MeasureSpace(0.0), std::invalid_argument);
    CHECK_THROWS_AS(MeasureSpace(1.0, 8), std::invalid_argument);
    const MeasureSpace s;
    CHECK(s.node(0) == 0);
    CHECK(s.node(s.n_quad() - 1) == s.length());
    double w = 0;
    for (std::size_t i = 0; i < s.n_quad(); ++i) w += s.weight(i);
    CHECK(w == Catch::Approx(s.length()).epsilon(1e-14));
}

TEST_CASE("trigonometric bases are orthonormal up to the band limit")
{
    const MeasureSpace s;
    for (const auto& b : {Basis::cosine(s), Basis::full_trig(s)}) {
        const auto n = b.band_limit(s);
        double worst = 0;
        for (std::size_t i = 0; i < n; i += 7)
            for (std::size_t j = 0; j < n; j += 5) {
                std::vector<double> vi(s.n_quad()), vj(s.n_quad());
                for (std::size_t q = 0; q < s.n_quad(); ++q) {
                    vi[q] = b.eval(i, s.node(q));
                    vj[q] = b.eval(j, s.node(q));
                }
                const double ip = inner(L2Element::from_grid(s, vi), L2Element::from_grid(s, vj));
                worst = std::max(worst, std::abs(ip - (i == j ? 1.0 : 0.0)));
            }
        INFO(to_string(b.kind()));
        CHECK(worst < 1e-8);
    }
}

TEST_CASE("basis integrals are exact antiderivatives")
{
    const MeasureSpace s;
    for (const auto& b : {Basis::cosine(s), Basis::full_trig(s), Basis::indicators(s, 7)})
        for (std::size_t i : {0, 1, 2, 5}) {
            const double a = 0.3, c = 4.1;
            const double ref = simpson([&](double x) { return x >= a && x <= c ? b.eval(i, x) : 0.0; }, s.length());
            CHECK(b.integral(i, a, c) == Catch::Approx(ref).margin(1e-4));
        }
    const auto cos = Basis::cosine(s);
    CHECK(cos.integral(3, 0.2, 2.9) ==
          Catch::Approx(simpson([&](double x) { return cos.eval(3, x); }, 2.7, 20000) * 0 +
                        (std::sin(3 * 2.9) - std::sin(3 * 0.2)) / 3 / std::sqrt(pi)));
}

TEST_CASE("inner product anchors")
{
    const MeasureSpace s;
    const auto cos = Basis::cosine(s);
    const auto e1 = L2Element::basis_element(s, cos, 1);
    const auto e2 = L2Element::basis_element(s, cos, 2);
    CHECK(std::abs(inner(e1, e1) - 1) < 1e-8);
    CHECK(std::abs(inner(e1, e2)) < 1e-8);
    const auto a = L2Element::indicator(s, IntervalSet(0, pi));
    const auto b = L2Element::indicator(s, IntervalSet(pi / 2, 3 * pi / 2));
    CHECK(inner(a, b) == pi / 2);
    // Indicator against grid uses the exact interpolant integral.
    const auto lin = L2Element::from_function(s, [](double x) { return x; });
    CHECK(inner(a, lin) == Catch::Approx(pi * pi / 2).epsilon(1e-12));
    // Indicator against coefficients.
    CHECK(inner(a, e1) == Catch::Approx(std::sin(pi) / std::sqrt(pi)).margin(1e-14));
    CHECK(inner(b, e1) == Catch::Approx((std::sin(1.5 * pi) - std::sin(0.5 * pi)) / std::sqrt(pi)));
    CHECK_THROWS_AS(inner(e1, L2Element::basis_element(MeasureSpace(2 * pi, 256), cos, 1)), std::invalid_argument);
}

TEST_CASE("gram matrices")
{
    const MeasureSpace s;
    const auto ft = Basis::full_trig(s);
    std::vector<L2Element> ortho;
    for (std::size_t i = 0; i < 5; ++i) ortho.push_back(L2Element::basis_element(s, ft, i));
    CHECK((gram(ortho) - Eigen::MatrixXd::Identity(5, 5)).cwiseAbs().maxCoeff() < 1e-12);

    const auto h = random_trig(s, ft, 10, 3);
    const auto h2 = L2Element::from_coeffs(s, ft, 2 * h.coefficients());
    const auto g = gram({h, h2});
    const double n2 = norm_sq(h);
    CHECK(g(0, 0) == Catch::Approx(n2));
    CHECK(g(0, 1) == Catch::Approx(2 * n2));
    CHECK(g(1, 1) == Catch::Approx(4 * n2));
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    CHECK(eig.eigenvalues()(0) == Catch::Approx(0).margin(1e-10));

    // Band-limited pair vs brute-force fine quadrature.
    const auto p = random_trig(s, ft, 40, 8), q = random_trig(s, ft, 40, 9);
    const auto pg = L2Element::from_grid(s, to_grid(p)), qg = L2Element::from_grid(s, to_grid(q));
    const MeasureSpace fine(s.length(), 4 * s.n_quad());
    const auto pf = L2Element::from_function(fine, [&](double x) { return p(x); });
    const auto qf = L2Element::from_function(fine, [&](double x) { return q(x); });
    const auto gg = gram({pg, qg});
    const auto gf = gram({pf, qf});
    CHECK((gg - gf).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("gram is symmetric PSD and obeys Cauchy-Schwarz")
{
    const MeasureSpace s;
    const auto ft = Basis::full_trig(s);
    std::vector<L2Element> elems;
    for (int i = 0; i < 6; ++i) elems.push_back(L2Element::from_grid(s, to_grid(random_trig(s, ft, 30, 100 + i))));
    elems.push_back(L2Element::indicator(s, IntervalSet(1, 2.5)));
    elems.push_back(L2Element::from_function(s, [](double x) { return std::exp(-x); }));
    const auto g = gram(elems);
    CHECK((g - g.transpose()).cwiseAbs().maxCoeff() == 0);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    CHECK(eig.eigenvalues().minCoeff() >= -1e-10 * g.norm());
    for (Eigen::Index i = 0; i < g.rows(); ++i)
        for (Eigen::Index j = 0; j < g.cols(); ++j)
            CHECK(std::abs(g(i, j)) <= std::sqrt(g(i, i) * g(j, j)) * (1 + 1e-10));
}

TEST_CASE("coefficients")
{
    const MeasureSpace s;
    const auto cos = Basis::cosine(s);
    const auto e3 = L2Element::from_grid(s, to_grid(L2Element::basis_element(s, cos, 3)));
    const auto c = coeffs(e3, cos, 8);
    for (Eigen::Index i = 0; i < 8; ++i) CHECK(c(i) == Catch::Approx(i == 3 ? 1.0 : 0.0).margin(1e-10));
    CHECK_THROWS_AS(coeffs(e3, cos, cos.band_limit(s) + 1), std::invalid_argument);

    // h = x: cosine coefficients by fine Simpson quadrature.
    const auto x = L2Element::from_function(s, [](double t) { return t; });
    const auto cx = coeffs(x, cos, 6);
    CHECK(cx(0) == Catch::Approx(pi * std::sqrt(2 * pi)).epsilon(1e-10));
    for (Eigen::Index n = 1; n < 6; ++n) {
        const double ref = simpson([n](double t) { return t * std::cos(n * t) / std::sqrt(pi); }, 2 * pi);
        CHECK(cx(n) == Catch::Approx(ref).margin(1e-4));
    }
}

TEST_CASE("Bessel defect is nonnegative and nonincreasing")
{
    const MeasureSpace s;
    const auto ft = Basis::full_trig(s);
    for (const auto& h : {L2Element::from_function(s, [](double t) { return t; }),
                          L2Element::indicator(s, IntervalSet(0.5, 2.0))}) {
        double prev = parseval_defect(h, ft, 1);
        for (std::size_t n = 2; n <= 64; ++n) {
            const double d = parseval_defect(h, ft, n);
            CHECK(d >= -1e-12);
            CHECK(d <= prev + 1e-12);
            prev = d;
        }
    }
    const auto band = random_trig(s, ft, 20, 4);
    CHECK(std::abs(parseval_defect(L2Element::from_grid(s, to_grid(band)), ft, 20)) < 1e-10);
    CHECK(parseval_defect(L2Element::from_grid(s, to_grid(band)), ft, 10) > 1e-3);
}

TEST_CASE("grid and coefficient round trip")
{
    const MeasureSpace s;
    for (const auto& b : {Basis::cosine(s), Basis::full_trig(s)}) {
        const auto h = L2Element::from_grid(s, to_grid(random_trig(s, b, 50, 21)));
        const auto back = reconstruct(s, b, coeffs(h, b, 50));
        std::vector<double> diff = to_grid(back);
        for (std::size_t i = 0; i < diff.size(); ++i) diff[i] -= h.grid_values()[i];
        CHECK(std::sqrt(norm_sq(L2Element::from_grid(s, diff))) < 1e-7);
    }
}

TEST_CASE("indicator partition basis")
{
    const MeasureSpace s;
    const auto ip = Basis::indicators(s, 8);
    const auto set = L2Element::indicator(s, IntervalSet(0, s.length() / 4));
    const auto c = coeffs(set, ip, 8);
    const double w = s.length() / 8;
    CHECK(c(0) == Catch::Approx(std::sqrt(w)));
    CHECK(c(1) == Catch::Approx(std::sqrt(w)));
    CHECK(c(2) == 0);
    CHECK(std::abs(parseval_defect(set, ip, 8)) < 1e-12);
}

TEST_CASE("Hilbert-Schmidt operators")
{
    const MeasureSpace s;
    const auto cos = Basis::cosine(s);
    const auto f = random_trig(s, cos, 16, 5);
    const auto id = HSOperator::identity(cos, 32);
    const auto fi = hs_apply(id, f);
    CHECK((fi.coefficients().head(16) - f.coefficients()).cwiseAbs().maxCoeff() < 1e-14);

    const auto q = HSOperator::harmonic(cos, 32);
    for (std::size_t n = 0; n < 5; ++n) {
        const auto en = hs_apply(q, L2Element::basis_element(s, cos, n));
        CHECK(en.coefficients()(static_cast<Eigen::Index>(n)) == Catch::Approx(1.0 / (n + 1)));
    }
    const auto qf = hs_apply(q, L2Element::from_grid(s, to_grid(f)));
    const double coef_norm = qf.coefficients().squaredNorm();
    double mode_sum = 0;
    for (Eigen::Index i = 0; i < 16; ++i) mode_sum += std::pow(q.eigenvalues()(i) * f.coefficients()(i), 2);
    CHECK(coef_norm == Catch::Approx(mode_sum).epsilon(1e-9));
    CHECK(std::abs(norm_sq(L2Element::from_grid(s, to_grid(qf))) - mode_sum) < 1e-7);

    CHECK(q.total_sq() == Catch::Approx(pi * pi / 6).epsilon(1e-14));
    double prev = 0;
    for (std::size_t n = 1; n <= 200; n *= 2) {
        const auto qn = HSOperator::harmonic(cos, n);
        CHECK(qn.partial_sq() >= prev);
        CHECK(qn.partial_sq() <= pi * pi / 6);
        CHECK(qn.tail_sq() == Catch::Approx(pi * pi / 6 - qn.partial_sq()).margin(1e-15));
        prev = qn.partial_sq();
    }
    CHECK_THROWS_AS(hs_apply(HSOperator::harmonic(cos, 4), f), std::invalid_argument);
}
