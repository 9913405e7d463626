#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <numbers>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfield/gfunction.hpp"

namespace gfield {

/// Half-open interval [a, b).
struct Interval {
    double a = 0.0;
    double b = 0.0;
    double length() const noexcept { return b > a ? b - a : 0.0; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

/// Finite union of disjoint intervals kept sorted and merged, so measures
/// are exact sums of endpoint differences.
class IntervalSet {
public:
    IntervalSet() = default;
    explicit IntervalSet(std::vector<Interval> parts) : parts_(std::move(parts))
    {
        for (const auto& p : parts_)
            if (!std::isfinite(p.a) || !std::isfinite(p.b))
                throw std::invalid_argument("IntervalSet: non-finite endpoint");
        normalize();
    }
    IntervalSet(double a, double b) : IntervalSet(std::vector<Interval>{{a, b}}) {}

    const std::vector<Interval>& parts() const noexcept { return parts_; }
    bool empty() const noexcept { return parts_.empty(); }

    double measure() const noexcept
    {
        double m = 0.0;
        for (const auto& p : parts_) m += p.length();
        return m;
    }

    bool contains(double x) const noexcept
    {
        for (const auto& p : parts_)
            if (x >= p.a && x < p.b) return true;
        return false;
    }

    IntervalSet intersect(const IntervalSet& o) const
    {
        std::vector<Interval> out;
        std::size_t i = 0, j = 0;
        while (i < parts_.size() && j < o.parts_.size()) {
            const double a = std::max(parts_[i].a, o.parts_[j].a);
            const double b = std::min(parts_[i].b, o.parts_[j].b);
            if (b > a) out.push_back({a, b});
            if (parts_[i].b < o.parts_[j].b) ++i;
            else ++j;
        }
        return IntervalSet(std::move(out));
    }

    IntervalSet unite(const IntervalSet& o) const
    {
        auto all = parts_;
        all.insert(all.end(), o.parts_.begin(), o.parts_.end());
        return IntervalSet(std::move(all));
    }

    friend bool operator==(const IntervalSet&, const IntervalSet&) = default;

private:
    void normalize()
    {
        std::erase_if(parts_, [](const Interval& p) { return !(p.b > p.a); });
        std::sort(parts_.begin(), parts_.end(), [](const Interval& x, const Interval& y) { return x.a < y.a; });
        std::vector<Interval> merged;
        for (const auto& p : parts_) {
            if (!merged.empty() && p.a <= merged.back().b) merged.back().b = std::max(merged.back().b, p.b);
            else merged.push_back(p);
        }
        parts_ = std::move(merged);
    }

    std::vector<Interval> parts_;
};

/// [0, L] with Lebesgue measure and a closed trapezoid grid of n_quad nodes.
class MeasureSpace {
public:
    explicit MeasureSpace(double length = 2.0 * std::numbers::pi, std::size_t n_quad = 512)
        : length_(length), n_quad_(n_quad)
    {
        if (!(length > 0.0) || !std::isfinite(length)) throw std::invalid_argument("MeasureSpace: L must be > 0");
        if (n_quad < 16) throw std::invalid_argument("MeasureSpace: n_quad must be >= 16");
    }

    double length() const noexcept { return length_; }
    std::size_t n_quad() const noexcept { return n_quad_; }
    double dx() const noexcept { return length_ / static_cast<double>(n_quad_ - 1); }
    double node(std::size_t i) const noexcept
    {
        return i + 1 == n_quad_ ? length_ : static_cast<double>(i) * dx();
    }
    double weight(std::size_t i) const noexcept
    {
        return (i == 0 || i + 1 == n_quad_) ? 0.5 * dx() : dx();
    }
    /// Highest resolvable number of trigonometric basis functions.
    std::size_t band_limit() const noexcept { return n_quad_ / 4; }

    friend bool operator==(const MeasureSpace&, const MeasureSpace&) = default;

private:
    double length_;
    std::size_t n_quad_;
};

enum class BasisKind { cosine, full_trig, indicator_partition };

inline std::string to_string(BasisKind k)
{
    switch (k) {
    case BasisKind::cosine: return "cosine";
    case BasisKind::full_trig: return "full-trig";
    case BasisKind::indicator_partition: return "indicator-partition";
    }
    return "?";
}

/// Orthonormal system on [0, L]. Trigonometric families use frequency
/// 2 pi k / L, so on [0, 2 pi] the cosine family is 1/sqrt(2 pi),
/// cos(nx)/sqrt(pi). full-trig orders 1, cos x, sin x, cos 2x, sin 2x, ...
class Basis {
public:
    Basis(BasisKind kind, double length, std::size_t cells = 0) : kind_(kind), length_(length), cells_(cells)
    {
        if (!(length > 0.0)) throw std::invalid_argument("Basis: length must be positive");
        if (kind == BasisKind::indicator_partition && cells == 0)
            throw std::invalid_argument("Basis: indicator partition needs at least one cell");
    }
    static Basis cosine(const MeasureSpace& s) { return {BasisKind::cosine, s.length()}; }
    static Basis full_trig(const MeasureSpace& s) { return {BasisKind::full_trig, s.length()}; }
    static Basis indicators(const MeasureSpace& s, std::size_t cells)
    {
        return {BasisKind::indicator_partition, s.length(), cells};
    }

    BasisKind kind() const noexcept { return kind_; }
    double length() const noexcept { return length_; }
    std::size_t cells() const noexcept { return cells_; }

    std::size_t band_limit(const MeasureSpace& s) const noexcept
    {
        return kind_ == BasisKind::indicator_partition ? cells_ : s.band_limit();
    }

    /// Angular frequency and parity of trig element i.
    double frequency(std::size_t i) const noexcept
    {
        const double w = 2.0 * std::numbers::pi / length_;
        if (kind_ == BasisKind::cosine) return w * static_cast<double>(i);
        return w * static_cast<double>((i + 1) / 2);
    }
    bool is_sine(std::size_t i) const noexcept { return kind_ == BasisKind::full_trig && i > 0 && i % 2 == 0; }

    double eval(std::size_t i, double x) const
    {
        switch (kind_) {
        case BasisKind::indicator_partition: {
            check_index(i);
            const double h = length_ / static_cast<double>(cells_);
            const double a = h * static_cast<double>(i);
            const double b = i + 1 == cells_ ? length_ : a + h;
            const bool inside = x >= a && (x < b || (i + 1 == cells_ && x <= b));
            return inside ? 1.0 / std::sqrt(h) : 0.0;
        }
        default:
            if (i == 0) return 1.0 / std::sqrt(length_);
            return std::sqrt(2.0 / length_) *
                   (is_sine(i) ? std::sin(frequency(i) * x) : std::cos(frequency(i) * x));
        }
    }

    /// Exact integral of e_i over [a, b].
    double integral(std::size_t i, double a, double b) const
    {
        if (!(b > a)) return 0.0;
        switch (kind_) {
        case BasisKind::indicator_partition: {
            check_index(i);
            const double h = length_ / static_cast<double>(cells_);
            const double lo = std::max(a, h * static_cast<double>(i));
            const double hi = std::min(b, i + 1 == cells_ ? length_ : h * static_cast<double>(i + 1));
            return hi > lo ? (hi - lo) / std::sqrt(h) : 0.0;
        }
        default: {
            const double lo = std::max(a, 0.0), hi = std::min(b, length_);
            if (!(hi > lo)) return 0.0;
            if (i == 0) return (hi - lo) / std::sqrt(length_);
            const double w = frequency(i);
            const double c = std::sqrt(2.0 / length_) / w;
            if (is_sine(i)) return c * (std::cos(w * lo) - std::cos(w * hi));
            return c * (std::sin(w * hi) - std::sin(w * lo));
        }
        }
    }

    double sup_abs(std::size_t i) const
    {
        if (kind_ == BasisKind::indicator_partition) return std::sqrt(static_cast<double>(cells_) / length_);
        return i == 0 ? 1.0 / std::sqrt(length_) : std::sqrt(2.0 / length_);
    }

    friend bool operator==(const Basis&, const Basis&) = default;

private:
    void check_index(std::size_t i) const
    {
        if (i >= cells_) throw std::out_of_range("Basis: cell index " + std::to_string(i) + " out of range");
    }

    BasisKind kind_;
    double length_;
    std::size_t cells_;
};

/// Element of L2([0, L]) held either as samples on the space's quadrature
/// grid, as coefficients in a basis, or as a scaled indicator of an exact
/// interval set.
class L2Element {
public:
    enum class Form { grid, coeffs, indicator };

    static L2Element from_grid(const MeasureSpace& s, std::vector<double> values)
    {
        if (values.size() != s.n_quad())
            throw std::invalid_argument("L2Element: grid has " + std::to_string(values.size()) +
                                        " samples, space expects " + std::to_string(s.n_quad()));
        for (double v : values)
            if (!std::isfinite(v)) throw std::invalid_argument("L2Element: non-finite sample");
        L2Element e(s, Form::grid);
        e.values_ = std::move(values);
        return e;
    }

    static L2Element from_function(const MeasureSpace& s, const std::function<double(double)>& f)
    {
        std::vector<double> v(s.n_quad());
        for (std::size_t i = 0; i < v.size(); ++i) v[i] = f(s.node(i));
        return from_grid(s, std::move(v));
    }

    static L2Element from_coeffs(const MeasureSpace& s, const Basis& b, Eigen::VectorXd c)
    {
        if (b.length() != s.length()) throw std::invalid_argument("L2Element: basis length differs from space");
        if (static_cast<std::size_t>(c.size()) > b.band_limit(s))
            throw std::invalid_argument("L2Element: " + std::to_string(c.size()) +
                                        " coefficients exceed band limit " + std::to_string(b.band_limit(s)));
        if (!c.allFinite()) throw std::invalid_argument("L2Element: non-finite coefficient");
        L2Element e(s, Form::coeffs);
        e.basis_ = b;
        e.coeffs_ = std::move(c);
        return e;
    }

    static L2Element basis_element(const MeasureSpace& s, const Basis& b, std::size_t i)
    {
        Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(i + 1));
        c(static_cast<Eigen::Index>(i)) = 1.0;
        return from_coeffs(s, b, std::move(c));
    }

    static L2Element indicator(const MeasureSpace& s, IntervalSet set, double scale = 1.0)
    {
        for (const auto& p : set.parts())
            if (p.a < 0.0 || p.b > s.length())
                throw std::invalid_argument("L2Element: indicator set leaves [0, L]");
        L2Element e(s, Form::indicator);
        e.set_ = std::move(set);
        e.scale_ = scale;
        return e;
    }

    Form form() const noexcept { return form_; }
    const MeasureSpace& space() const noexcept { return space_; }
    const std::vector<double>& grid_values() const noexcept { return values_; }
    const Basis& basis() const noexcept { return basis_; }
    const Eigen::VectorXd& coefficients() const noexcept { return coeffs_; }
    const IntervalSet& set() const noexcept { return set_; }
    double scale() const noexcept { return scale_; }

    /// Pointwise value (indicators are right-open).
    double operator()(double x) const
    {
        switch (form_) {
        case Form::indicator: return set_.contains(x) ? scale_ : 0.0;
        case Form::coeffs: {
            double v = 0.0;
            for (Eigen::Index i = 0; i < coeffs_.size(); ++i)
                v += coeffs_(i) * basis_.eval(static_cast<std::size_t>(i), x);
            return v;
        }
        case Form::grid: {
            const double pos = std::clamp(x / space_.dx(), 0.0, static_cast<double>(space_.n_quad() - 1));
            const auto i = std::min(static_cast<std::size_t>(pos), space_.n_quad() - 2);
            const double w = pos - static_cast<double>(i);
            return (1.0 - w) * values_[i] + w * values_[i + 1];
        }
        }
        return 0.0;
    }

private:
    L2Element(const MeasureSpace& s, Form f) : space_(s), form_(f), basis_(BasisKind::cosine, s.length()) {}

    MeasureSpace space_;
    Form form_;
    std::vector<double> values_;
    Basis basis_;
    Eigen::VectorXd coeffs_;
    IntervalSet set_;
    double scale_ = 1.0;
};

/// Samples on the quadrature grid.
inline std::vector<double> to_grid(const L2Element& h)
{
    if (h.form() == L2Element::Form::grid) return h.grid_values();
    const auto& s = h.space();
    std::vector<double> v(s.n_quad());
    for (std::size_t i = 0; i < v.size(); ++i) v[i] = h(s.node(i));
    return v;
}

namespace detail {

inline void require_same_space(const L2Element& h, const L2Element& k)
{
    if (!(h.space() == k.space())) throw std::invalid_argument("inner: elements live on different measure spaces");
}

// Exact integral over `set` of the piecewise-linear interpolant of grid samples.
inline double integrate_linear(const MeasureSpace& s, const std::vector<double>& v, const IntervalSet& set)
{
    const double dx = s.dx();
    double acc = 0.0;
    for (const auto& p : set.parts()) {
        const auto first = static_cast<std::size_t>(std::floor(p.a / dx));
        for (std::size_t c = first; c + 1 < s.n_quad(); ++c) {
            const double x0 = s.node(c), x1 = s.node(c + 1);
            if (x0 >= p.b) break;
            const double a = std::max(p.a, x0), b = std::min(p.b, x1);
            if (!(b > a)) continue;
            const double slope = (v[c + 1] - v[c]) / (x1 - x0);
            const double fa = v[c] + slope * (a - x0), fb = v[c] + slope * (b - x0);
            acc += 0.5 * (fa + fb) * (b - a);
        }
    }
    return acc;
}

inline double trapezoid(const MeasureSpace& s, const std::vector<double>& a, const std::vector<double>& b)
{
    double acc = 0.0;
    for (std::size_t i = 0; i < s.n_quad(); ++i) acc += s.weight(i) * a[i] * b[i];
    return acc;
}

}  // namespace detail

/// Fourier coefficients <h, e_i>, i < n. Exact for indicator and
/// same-basis coefficient forms, trapezoid quadrature otherwise.
inline Eigen::VectorXd coeffs(const L2Element& h, const Basis& basis, std::size_t n)
{
    const auto& s = h.space();
    if (n > basis.band_limit(s))
        throw std::invalid_argument("coeffs: N = " + std::to_string(n) + " exceeds band limit " +
                                    std::to_string(basis.band_limit(s)));
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
    switch (h.form()) {
    case L2Element::Form::coeffs:
        if (h.basis() == basis) {
            const auto m = std::min<Eigen::Index>(c.size(), h.coefficients().size());
            c.head(m) = h.coefficients().head(m);
            return c;
        }
        break;
    case L2Element::Form::indicator:
        for (std::size_t i = 0; i < n; ++i) {
            double acc = 0.0;
            for (const auto& p : h.set().parts()) acc += basis.integral(i, p.a, p.b);
            c(static_cast<Eigen::Index>(i)) = h.scale() * acc;
        }
        return c;
    case L2Element::Form::grid: break;
    }
    const auto v = to_grid(h);
    if (basis.kind() == BasisKind::indicator_partition) {
        const double w = s.length() / static_cast<double>(basis.cells());
        for (std::size_t i = 0; i < n; ++i) {
            const double a = w * static_cast<double>(i);
            const double b = i + 1 == basis.cells() ? s.length() : a + w;
            c(static_cast<Eigen::Index>(i)) = detail::integrate_linear(s, v, IntervalSet(a, b)) / std::sqrt(w);
        }
        return c;
    }
    for (std::size_t i = 0; i < n; ++i) {
        double acc = 0.0;
        for (std::size_t q = 0; q < s.n_quad(); ++q) acc += s.weight(q) * v[q] * basis.eval(i, s.node(q));
        c(static_cast<Eigen::Index>(i)) = acc;
    }
    return c;
}

inline double inner(const L2Element& h, const L2Element& k)
{
    detail::require_same_space(h, k);
    using F = L2Element::Form;
    if (h.form() == F::coeffs && k.form() == F::coeffs && h.basis() == k.basis()) {
        const auto m = std::min(h.coefficients().size(), k.coefficients().size());
        return h.coefficients().head(m).dot(k.coefficients().head(m));
    }
    if (h.form() == F::indicator && k.form() == F::indicator)
        return h.scale() * k.scale() * h.set().intersect(k.set()).measure();
    if (h.form() == F::indicator || k.form() == F::indicator) {
        const L2Element& ind = h.form() == F::indicator ? h : k;
        const L2Element& other = h.form() == F::indicator ? k : h;
        if (other.form() == F::coeffs) {
            const auto n = static_cast<std::size_t>(other.coefficients().size());
            return other.coefficients().dot(coeffs(ind, other.basis(), n));
        }
        return ind.scale() * detail::integrate_linear(ind.space(), other.grid_values(), ind.set());
    }
    return detail::trapezoid(h.space(), to_grid(h), to_grid(k));
}

inline double norm_sq(const L2Element& h) { return inner(h, h); }

/// Gram matrix of inner products, symmetrized; eigenvalues that are
/// negative only by quadrature jitter are clipped to zero.
inline Eigen::MatrixXd gram(const std::vector<L2Element>& elems)
{
    if (elems.empty()) throw std::invalid_argument("gram: empty element list");
    const auto n = static_cast<Eigen::Index>(elems.size());
    Eigen::MatrixXd g(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j <= i; ++j)
            g(i, j) = g(j, i) = inner(elems[static_cast<std::size_t>(i)], elems[static_cast<std::size_t>(j)]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(g);
    const double floor = -kPsdJitter * std::max(1.0, g.norm());
    if (eig.eigenvalues().minCoeff() < floor)
        throw std::invalid_argument("gram: matrix is indefinite beyond jitter tolerance");
    if (eig.eigenvalues().minCoeff() < 0.0) {
        const Eigen::VectorXd lam = eig.eigenvalues().cwiseMax(0.0);
        g = eig.eigenvectors() * lam.asDiagonal() * eig.eigenvectors().transpose();
        g = 0.5 * (g + g.transpose()).eval();
    }
    return g;
}

inline L2Element reconstruct(const MeasureSpace& s, const Basis& b, const Eigen::VectorXd& c)
{
    return L2Element::from_coeffs(s, b, c);
}

/// Sum of squares accumulated in index order, so partial sums are
/// monotone in the number of terms.
inline double ordered_sum_sq(const Eigen::VectorXd& c)
{
    double acc = 0.0;
    for (Eigen::Index i = 0; i < c.size(); ++i) acc += c(i) * c(i);
    return acc;
}

/// ||h||^2 - sum_{i<n} <h, e_i>^2 (Bessel defect).
inline double parseval_defect(const L2Element& h, const Basis& basis, std::size_t n)
{
    return norm_sq(h) - ordered_sum_sq(coeffs(h, basis, n));
}

/// Diagonal operator Q e_{n-1} = a_n e_{n-1}, n = 1..N, with the analytic
/// tail sum_{n>N} a_n^2 recorded alongside.
class HSOperator {
public:
    HSOperator(Basis basis, Eigen::VectorXd eigenvalues, double tail_sq)
        : basis_(basis), a_(std::move(eigenvalues)), tail_sq_(tail_sq)
    {
        if (a_.size() == 0) throw std::invalid_argument("HSOperator: no eigenvalues");
        if (!a_.allFinite()) throw std::invalid_argument("HSOperator: non-finite eigenvalue");
        if (!(tail_sq >= 0.0)) throw std::invalid_argument("HSOperator: tail must be >= 0");
    }

    /// a_n = 1/n with tail pi^2/6 - sum_{n<=N} 1/n^2.
    static HSOperator harmonic(const Basis& basis, std::size_t n_max)
    {
        Eigen::VectorXd a(static_cast<Eigen::Index>(n_max));
        for (std::size_t n = 1; n <= n_max; ++n) a(static_cast<Eigen::Index>(n - 1)) = 1.0 / static_cast<double>(n);
        double partial = 0.0;
        for (std::size_t n = n_max; n >= 1; --n) partial += 1.0 / (static_cast<double>(n) * static_cast<double>(n));
        return {basis, std::move(a), std::max(0.0, std::numbers::pi * std::numbers::pi / 6.0 - partial)};
    }

    static HSOperator identity(const Basis& basis, std::size_t n_max)
    {
        return {basis, Eigen::VectorXd::Ones(static_cast<Eigen::Index>(n_max)), 0.0};
    }

    const Basis& basis() const noexcept { return basis_; }
    const Eigen::VectorXd& eigenvalues() const noexcept { return a_; }
    std::size_t size() const noexcept { return static_cast<std::size_t>(a_.size()); }
    double tail_sq() const noexcept { return tail_sq_; }
    double partial_sq() const { return a_.squaredNorm(); }
    double total_sq() const { return partial_sq() + tail_sq_; }

private:
    Basis basis_;
    Eigen::VectorXd a_;
    double tail_sq_;
};

/// Q f on the operator's truncation; f must lie in its span to 1e-8.
inline L2Element hs_apply(const HSOperator& q, const L2Element& f)
{
    const auto& s = f.space();
    const auto n = q.size();
    if (n > q.basis().band_limit(s)) throw std::invalid_argument("hs_apply: operator exceeds band limit");
    const Eigen::VectorXd c = coeffs(f, q.basis(), n);
    const double defect = norm_sq(f) - c.squaredNorm();
    if (defect > 1e-8 * std::max(1.0, norm_sq(f)))
        throw std::invalid_argument("hs_apply: element has content beyond the operator truncation (defect " +
                                    std::to_string(defect) + ")");
    return L2Element::from_coeffs(s, q.basis(), q.eigenvalues().cwiseProduct(c));
}

}  // namespace gfield
