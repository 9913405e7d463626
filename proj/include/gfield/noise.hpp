#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfield/hilbert.hpp"
#include "gfield/parallel.hpp"
#include "gfield/rng.hpp"
#include "gfield/scenario.hpp"
#include "gfield/sublinear.hpp"

namespace gfield {

/// 0 = t_0 < t_1 < ... < t_m = T.
class TimePartition {
public:
    explicit TimePartition(std::vector<double> t) : t_(std::move(t))
    {
        if (t_.size() < 2) throw std::invalid_argument("TimePartition: need at least one slice");
        if (t_.front() != 0.0) throw std::invalid_argument("TimePartition: must start at 0");
        for (std::size_t j = 1; j < t_.size(); ++j)
            if (!(t_[j] > t_[j - 1])) throw std::invalid_argument("TimePartition: instants must increase strictly");
    }
    static TimePartition uniform(double horizon, std::size_t slices) { return TimePartition(uniform_grid(horizon, slices)); }

    const std::vector<double>& points() const noexcept { return t_; }
    std::size_t slices() const noexcept { return t_.size() - 1; }
    double horizon() const noexcept { return t_.back(); }
    double t(std::size_t j) const { return t_.at(j); }
    double dt(std::size_t j) const { return t_.at(j + 1) - t_.at(j); }
    double midpoint(std::size_t j) const { return 0.5 * (t_.at(j) + t_.at(j + 1)); }

    /// True if every instant of `coarse` is an instant of this partition.
    bool refines(const std::vector<double>& coarse, double tol = 1e-12) const
    {
        if (std::abs(coarse.back() - horizon()) > tol * std::max(1.0, horizon())) return false;
        std::size_t k = 0;
        for (double c : coarse) {
            while (k < t_.size() && t_[k] < c - tol * std::max(1.0, c)) ++k;
            if (k == t_.size() || std::abs(t_[k] - c) > tol * std::max(1.0, c)) return false;
        }
        return true;
    }

    friend bool operator==(const TimePartition&, const TimePartition&) = default;

private:
    std::vector<double> t_;
};

/// Standard normals z(j, n) for one path. Mode n has its own stream
/// derive_seed(path_seed, n), so raising the mode count leaves the lower
/// modes unchanged.
inline Eigen::MatrixXd standard_normals(std::size_t slices, std::size_t modes, std::uint64_t path_seed)
{
    Eigen::MatrixXd out(static_cast<Eigen::Index>(slices), static_cast<Eigen::Index>(modes));
    for (Eigen::Index n = 0; n < out.cols(); ++n) {
        NormalStream z(derive_seed(path_seed, static_cast<std::uint64_t>(n)));
        for (Eigen::Index j = 0; j < out.rows(); ++j) out(j, n) = z();
    }
    return out;
}

/// Mode increments Delta W_{j,n} of spacetime white noise in orthonormal
/// coordinates. Given the scenario they are independent N(0, theta_j dt_j).
class NoiseRealization {
public:
    NoiseRealization(TimePartition partition, Basis basis, std::size_t n_modes, ScenarioPath scenario,
                     Eigen::MatrixXd increments, std::uint64_t seed = 0)
        : partition_(std::move(partition)), basis_(basis), n_modes_(n_modes), scenario_(std::move(scenario)),
          increments_(std::move(increments)), seed_(seed)
    {
        if (n_modes_ == 0) throw std::invalid_argument("NoiseRealization: need at least one mode");
        if (!partition_.refines(scenario_.grid()))
            throw std::invalid_argument("NoiseRealization: scenario grid is not aligned with the partition");
        if (increments_.rows() != static_cast<Eigen::Index>(partition_.slices()) ||
            increments_.cols() != static_cast<Eigen::Index>(n_modes_))
            throw std::invalid_argument("NoiseRealization: increment matrix has wrong shape");
        theta_.resize(partition_.slices());
        for (std::size_t j = 0; j < theta_.size(); ++j) theta_[j] = scenario_.theta_at(partition_.midpoint(j));
    }

    /// Scales standard normals by sqrt(theta_j dt_j).
    static NoiseRealization from_standard(const TimePartition& partition, const Basis& basis, std::size_t n_modes,
                                          const ScenarioPath& scenario, const Eigen::MatrixXd& z,
                                          std::uint64_t seed = 0)
    {
        if (!partition.refines(scenario.grid()))
            throw std::invalid_argument("sample_noise: scenario grid is not aligned with the partition");
        Eigen::MatrixXd inc = z;
        for (std::size_t j = 0; j < partition.slices(); ++j)
            inc.row(static_cast<Eigen::Index>(j)) *=
                std::sqrt(scenario.theta_at(partition.midpoint(j)) * partition.dt(j));
        return {partition, basis, n_modes, scenario, std::move(inc), seed};
    }

    const TimePartition& partition() const noexcept { return partition_; }
    const Basis& basis() const noexcept { return basis_; }
    std::size_t n_modes() const noexcept { return n_modes_; }
    const ScenarioPath& scenario() const noexcept { return scenario_; }
    const Eigen::MatrixXd& increments() const noexcept { return increments_; }
    double increment(std::size_t j, std::size_t n) const
    {
        return increments_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(n));
    }
    double theta(std::size_t j) const { return theta_.at(j); }
    std::uint64_t seed() const noexcept { return seed_; }

    /// Sums groups of `factor` consecutive slices; the scenario must align
    /// with the coarser partition.
    NoiseRealization coarsen(std::size_t factor) const
    {
        if (factor == 0 || partition_.slices() % factor != 0)
            throw std::invalid_argument("coarsen: factor must divide the slice count");
        std::vector<double> pts;
        for (std::size_t j = 0; j <= partition_.slices(); j += factor) pts.push_back(partition_.t(j));
        const auto m = static_cast<Eigen::Index>(partition_.slices() / factor);
        Eigen::MatrixXd inc = Eigen::MatrixXd::Zero(m, increments_.cols());
        for (Eigen::Index j = 0; j < m; ++j)
            for (std::size_t k = 0; k < factor; ++k) inc.row(j) += increments_.row(j * static_cast<Eigen::Index>(factor) + static_cast<Eigen::Index>(k));
        return {TimePartition(pts), basis_, n_modes_, scenario_, std::move(inc), seed_};
    }

private:
    TimePartition partition_;
    Basis basis_;
    std::size_t n_modes_;
    ScenarioPath scenario_;
    Eigen::MatrixXd increments_;
    std::vector<double> theta_;
    std::uint64_t seed_;
};

/// Standard normals come from `seed` alone, so the same seed under
/// different scenarios yields common random numbers.
inline NoiseRealization sample_noise(const TimePartition& partition, const Basis& basis, std::size_t n_modes,
                                     const ScenarioPath& scenario, std::uint64_t seed)
{
    return NoiseRealization::from_standard(partition, basis, n_modes, scenario,
                                           standard_normals(partition.slices(), n_modes, seed), seed);
}

/// Coefficients of a test function in the noise coordinates.
inline Eigen::VectorXd functional_coeffs(const NoiseRealization& noise, const L2Element& f)
{
    return coeffs(f, noise.basis(), noise.n_modes());
}

/// W((t_j, t_{j+1}], f) = sum_n <f, e_n> Delta W_{j,n}.
inline double eval_functional(const NoiseRealization& noise, const Eigen::VectorXd& c, std::size_t j)
{
    if (static_cast<std::size_t>(c.size()) > noise.n_modes())
        throw std::invalid_argument("eval_functional: coefficient vector longer than noise modes");
    double acc = 0.0;
    for (Eigen::Index n = 0; n < c.size(); ++n) acc += c(n) * noise.increments()(static_cast<Eigen::Index>(j), n);
    return acc;
}

inline double eval_functional(const NoiseRealization& noise, const L2Element& f, std::size_t j)
{
    return eval_functional(noise, functional_coeffs(noise, f), j);
}

/// W(t_j, f), the path value at partition instant j.
inline double noise_path_value(const NoiseRealization& noise, const Eigen::VectorXd& c, std::size_t j)
{
    double acc = 0.0;
    for (std::size_t k = 0; k < j; ++k) acc += eval_functional(noise, c, k);
    return acc;
}

/// Read access to the increments of slices strictly before `limit`.
class PastView {
public:
    PastView(const NoiseRealization& noise, std::size_t limit) : noise_(noise), limit_(limit) {}

    std::size_t limit() const noexcept { return limit_; }
    double increment(std::size_t j, std::size_t n) const
    {
        check(j);
        return noise_.increment(j, n);
    }
    double functional(const Eigen::VectorXd& c, std::size_t j) const
    {
        check(j);
        return eval_functional(noise_, c, j);
    }

private:
    void check(std::size_t j) const
    {
        if (j >= limit_)
            throw std::logic_error("adaptedness violated: slice " + std::to_string(j) + " read while building slice " +
                                   std::to_string(limit_));
    }
    const NoiseRealization& noise_;
    std::size_t limit_;
};

/// f(t, x) = sum_{i,j} X_ij 1_{[t_j, t_{j+1})}(t) 1_{A_i}(x) with disjoint
/// A_i. X_ij is produced from the strict past of slice j only.
class ElementaryField {
public:
    using Coefficient = std::function<double(std::size_t set, std::size_t slice, const PastView& past)>;

    ElementaryField(std::vector<IntervalSet> sets, TimePartition partition, Coefficient x, bool deterministic = false)
        : sets_(std::move(sets)), partition_(std::move(partition)), x_(std::move(x)), deterministic_(deterministic)
    {
        if (sets_.empty()) throw std::invalid_argument("ElementaryField: need at least one set");
        for (std::size_t i = 0; i < sets_.size(); ++i)
            for (std::size_t k = i + 1; k < sets_.size(); ++k)
                if (sets_[i].intersect(sets_[k]).measure() > 0.0)
                    throw std::invalid_argument("ElementaryField: sets " + std::to_string(i) + " and " +
                                                std::to_string(k) + " overlap");
    }

    static ElementaryField constant(std::vector<IntervalSet> sets, TimePartition partition, Eigen::MatrixXd x)
    {
        if (x.rows() != static_cast<Eigen::Index>(sets.size()) ||
            x.cols() != static_cast<Eigen::Index>(partition.slices()))
            throw std::invalid_argument("ElementaryField: coefficient matrix must be sets x slices");
        return {std::move(sets), std::move(partition),
                [x](std::size_t i, std::size_t j, const PastView&) {
                    return x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                },
                true};
    }

    const std::vector<IntervalSet>& sets() const noexcept { return sets_; }
    const TimePartition& partition() const noexcept { return partition_; }
    bool deterministic() const noexcept { return deterministic_; }

    /// X_ij on one noise path.
    Eigen::MatrixXd coefficients(const NoiseRealization& noise) const
    {
        Eigen::MatrixXd x(static_cast<Eigen::Index>(sets_.size()), static_cast<Eigen::Index>(partition_.slices()));
        for (std::size_t j = 0; j < partition_.slices(); ++j) {
            const PastView past(noise, j);
            for (std::size_t i = 0; i < sets_.size(); ++i)
                x(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = x_(i, j, past);
        }
        return x;
    }

private:
    std::vector<IntervalSet> sets_;
    TimePartition partition_;
    Coefficient x_;
    bool deterministic_;
};

/// Cached noise coordinates of the indicator sets: rows are <1_{A_i}, e_n>.
inline Eigen::MatrixXd set_coefficients(const ElementaryField& field, const MeasureSpace& space, const Basis& basis,
                                        std::size_t n_modes)
{
    Eigen::MatrixXd c(static_cast<Eigen::Index>(field.sets().size()), static_cast<Eigen::Index>(n_modes));
    for (std::size_t i = 0; i < field.sets().size(); ++i)
        c.row(static_cast<Eigen::Index>(i)) = coeffs(L2Element::indicator(space, field.sets()[i]), basis, n_modes);
    return c;
}

struct ElementaryIntegral {
    double value = 0.0;
    double norm_sq = 0.0;            // sum_j dt_j ||f_j||^2 with exact set measures
    double projected_norm_sq = 0.0;  // same on the noise projection P_N f_j
    double weighted_sq = 0.0;        // sum_j theta_j dt_j ||P_N f_j||^2
};

/// sum_{i,j} X_ij W((t_j, t_{j+1}], 1_{A_i}) together with the pathwise
/// integrand norms needed by the isometry checks.
inline ElementaryIntegral integrate_elementary_detail(const ElementaryField& field, const NoiseRealization& noise,
                                                     const Eigen::MatrixXd& set_coeffs)
{
    if (!(field.partition() == noise.partition()))
        throw std::invalid_argument("integrate_elementary: field and noise partitions differ");
    const Eigen::MatrixXd x = field.coefficients(noise);
    ElementaryIntegral out;
    Eigen::VectorXd fj(set_coeffs.cols());
    for (std::size_t j = 0; j < field.partition().slices(); ++j) {
        const auto jj = static_cast<Eigen::Index>(j);
        fj.setZero();
        double exact = 0.0;
        for (Eigen::Index i = 0; i < x.rows(); ++i) {
            fj += x(i, jj) * set_coeffs.row(i).transpose();
            exact += x(i, jj) * x(i, jj) * field.sets()[static_cast<std::size_t>(i)].measure();
        }
        const double dt = field.partition().dt(j);
        const double proj = ordered_sum_sq(fj);
        out.value += eval_functional(noise, fj, j);
        out.norm_sq += dt * exact;
        out.projected_norm_sq += dt * proj;
        out.weighted_sq += noise.theta(j) * dt * proj;
    }
    return out;
}

inline double integrate_elementary(const ElementaryField& field, const NoiseRealization& noise,
                                   const MeasureSpace& space = MeasureSpace())
{
    return integrate_elementary_detail(field, noise, set_coefficients(field, space, noise.basis(), noise.n_modes()))
        .value;
}

struct IsometryScenarioRow {
    MeanEstimate second_moment;  // E_theta |I(f)|^2
    MeanEstimate norm_sq;        // E_theta int int (P_N f)^2
    MeanEstimate isometry_gap;   // E_theta [I^2 - sum theta_j dt_j ||P_N f_j||^2]
};

struct IsometryReport {
    bool pass = false;
    double sup_second_moment = 0.0, sup_se = 0.0;
    double inf_second_moment = 0.0, inf_se = 0.0;
    double sup_norm_sq = 0.0, sup_norm_se = 0.0;  // sup over scenarios of E int int (P_N f)^2
    double inf_norm_sq = 0.0, inf_norm_se = 0.0;
    double truncation_defect = 0.0;  // E int int f^2 - (P_N f)^2, worst scenario
    bool upper_ok = false;           // sup <= hi2 sup|f|^2
    bool lower_sup_ok = false;       // sup >= lo2 sup|f|^2
    bool lower_inf_ok = false;       // inf >= lo2 inf|f|^2
    bool per_scenario_ok = false;    // classical isometry under each scenario
    bool attained = true;            // deterministic f: extremal constants reach the bounds
    std::size_t argmax = 0, argmin = 0;
    std::vector<IsometryScenarioRow> rows;
};

/// Scenario sweep of E|I(f)|^2 against the integrand norm. Path p draws its
/// standard normals once and reuses them under every scenario.
inline IsometryReport isometry_report(const ElementaryField& field, const std::vector<ScenarioPath>& scenarios,
                                      const Basis& basis, std::size_t n_modes, std::size_t n_paths,
                                      std::uint64_t seed, double se_multiplier = 5.0,
                                      const MeasureSpace& space = MeasureSpace(), int jobs = default_jobs())
{
    if (scenarios.empty()) throw std::invalid_argument("isometry_report: empty scenario set");
    const auto& part = field.partition();
    const Eigen::MatrixXd setc = set_coefficients(field, space, basis, n_modes);
    const std::size_t ns = scenarios.size();
    std::vector<double> i2(ns * n_paths), nq(ns * n_paths), gap(ns * n_paths), defect(ns * n_paths);
    parallel_for(
        n_paths,
        [&](std::size_t p) {
            const Eigen::MatrixXd z = standard_normals(part.slices(), n_modes, derive_seed(seed, p));
            for (std::size_t s = 0; s < ns; ++s) {
                const auto noise = NoiseRealization::from_standard(part, basis, n_modes, scenarios[s], z);
                const auto r = integrate_elementary_detail(field, noise, setc);
                i2[s * n_paths + p] = r.value * r.value;
                nq[s * n_paths + p] = r.projected_norm_sq;
                gap[s * n_paths + p] = r.value * r.value - r.weighted_sq;
                defect[s * n_paths + p] = r.norm_sq - r.projected_norm_sq;
            }
        },
        jobs);

    IsometryReport rep;
    double lo2 = scenarios[0].values()[0], hi2 = lo2;
    for (const auto& s : scenarios)
        for (double v : s.values()) {
            lo2 = std::min(lo2, v);
            hi2 = std::max(hi2, v);
        }
    auto slice = [&](const std::vector<double>& v, std::size_t s) {
        return std::vector<double>(v.begin() + static_cast<std::ptrdiff_t>(s * n_paths),
                                   v.begin() + static_cast<std::ptrdiff_t>((s + 1) * n_paths));
    };
    rep.per_scenario_ok = true;
    for (std::size_t s = 0; s < ns; ++s) {
        IsometryScenarioRow row{estimate_mean(slice(i2, s)), estimate_mean(slice(nq, s)), estimate_mean(slice(gap, s))};
        rep.truncation_defect = std::max(rep.truncation_defect, estimate_mean(slice(defect, s)).mean);
        const double tol = se_multiplier * row.isometry_gap.std_error + 1e-12 * std::max(1.0, row.second_moment.mean);
        rep.per_scenario_ok = rep.per_scenario_ok && std::abs(row.isometry_gap.mean) <= tol;
        if (s == 0 || row.second_moment.mean > rep.rows[rep.argmax].second_moment.mean) rep.argmax = s;
        if (s == 0 || row.second_moment.mean < rep.rows[rep.argmin].second_moment.mean) rep.argmin = s;
        rep.rows.push_back(row);
    }
    std::size_t nmax = 0, nmin = 0;
    for (std::size_t s = 1; s < ns; ++s) {
        if (rep.rows[s].norm_sq.mean > rep.rows[nmax].norm_sq.mean) nmax = s;
        if (rep.rows[s].norm_sq.mean < rep.rows[nmin].norm_sq.mean) nmin = s;
    }
    rep.sup_second_moment = rep.rows[rep.argmax].second_moment.mean;
    rep.sup_se = rep.rows[rep.argmax].second_moment.std_error;
    rep.inf_second_moment = rep.rows[rep.argmin].second_moment.mean;
    rep.inf_se = rep.rows[rep.argmin].second_moment.std_error;
    rep.sup_norm_sq = rep.rows[nmax].norm_sq.mean;
    rep.sup_norm_se = rep.rows[nmax].norm_sq.std_error;
    rep.inf_norm_sq = rep.rows[nmin].norm_sq.mean;
    rep.inf_norm_se = rep.rows[nmin].norm_sq.std_error;

    auto within = [&](double lhs, double rhs, double se_l, double se_r) {
        return lhs <= rhs + se_multiplier * std::hypot(se_l, se_r) + 1e-12 * std::max(1.0, std::abs(rhs));
    };
    rep.upper_ok = within(rep.sup_second_moment, hi2 * rep.sup_norm_sq, rep.sup_se, hi2 * rep.sup_norm_se);
    rep.lower_sup_ok = within(lo2 * rep.sup_norm_sq, rep.sup_second_moment, lo2 * rep.sup_norm_se, rep.sup_se);
    rep.lower_inf_ok = within(lo2 * rep.inf_norm_sq, rep.inf_second_moment, lo2 * rep.inf_norm_se, rep.inf_se);

    if (field.deterministic()) {
        for (std::size_t s = 0; s < ns; ++s) {
            const auto& sc = scenarios[s];
            if (!sc.is_constant()) continue;
            const double theta = sc.values()[0];
            if (theta != hi2 && theta != lo2) continue;
            const auto& row = rep.rows[s];
            const double target = theta * row.norm_sq.mean;
            rep.attained = rep.attained && std::abs(row.second_moment.mean - target) <=
                                               se_multiplier * row.second_moment.std_error +
                                                   1e-12 * std::max(1.0, target);
        }
    }
    rep.pass = rep.upper_ok && rep.lower_sup_ok && rep.lower_inf_ok && rep.per_scenario_ok && rep.attained;
    return rep;
}

/// Q-embedded G-Brownian motion W(t) = sum_n W(t, e_n) Q e_n on the
/// partition instants. The unembedded series only exists in mode
/// coordinates.
class IdGBMPath {
public:
    IdGBMPath(const HSOperator& q, const NoiseRealization& noise) : q_(q), space_()
    {
        if (!(q.basis() == noise.basis())) throw std::invalid_argument("idgbm_path: operator and noise bases differ");
        if (q.size() > noise.n_modes())
            throw std::invalid_argument("idgbm_path: operator truncation " + std::to_string(q.size()) +
                                        " exceeds noise modes " + std::to_string(noise.n_modes()));
        const auto m = static_cast<Eigen::Index>(noise.partition().slices());
        const auto n = static_cast<Eigen::Index>(q.size());
        modes_ = Eigen::MatrixXd::Zero(m + 1, n);
        for (Eigen::Index j = 0; j < m; ++j) modes_.row(j + 1) = modes_.row(j) + noise.increments().row(j).head(n);
        times_ = noise.partition().points();
    }

    /// W(t_j, e_n) for n < truncation.
    double mode(std::size_t j, std::size_t n) const
    {
        return modes_(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(n));
    }
    const std::vector<double>& times() const noexcept { return times_; }

    /// ||W(t_j)||^2 = sum_n a_n^2 W(t_j, e_n)^2.
    double norm_process(std::size_t j) const
    {
        double acc = 0.0;
        for (Eigen::Index n = 0; n < modes_.cols(); ++n) {
            const double v = q_.eigenvalues()(n) * modes_(static_cast<Eigen::Index>(j), n);
            acc += v * v;
        }
        return acc;
    }

    L2Element value(std::size_t j, const MeasureSpace& space) const
    {
        return L2Element::from_coeffs(space, q_.basis(),
                                      q_.eigenvalues().cwiseProduct(modes_.row(static_cast<Eigen::Index>(j)).transpose()));
    }

private:
    HSOperator q_;
    MeasureSpace space_;
    Eigen::MatrixXd modes_;
    std::vector<double> times_;
};

inline IdGBMPath idgbm_path(const HSOperator& q, const NoiseRealization& noise) { return {q, noise}; }

struct IdGBMIntegral {
    double value = 0.0;
    double tail_bound = 0.0;  // hi2 * sum_j dt_j (||f_j||^2 - ||P_N f_j||^2)
};

/// sum_{i<N} sum_j <f(t_j), e_i> Delta W_{j,i} for f piecewise constant in
/// time; coefficient rows are slices.
inline double integrate_idgbm(const Eigen::MatrixXd& f_coeffs, const NoiseRealization& noise)
{
    if (f_coeffs.rows() != static_cast<Eigen::Index>(noise.partition().slices()))
        throw std::invalid_argument("integrate_idgbm: need one coefficient row per slice");
    if (f_coeffs.cols() > static_cast<Eigen::Index>(noise.n_modes()))
        throw std::invalid_argument("integrate_idgbm: integrand has more modes than the noise");
    double acc = 0.0;
    for (Eigen::Index j = 0; j < f_coeffs.rows(); ++j)
        acc += eval_functional(noise, Eigen::VectorXd(f_coeffs.row(j).transpose()), static_cast<std::size_t>(j));
    return acc;
}

inline IdGBMIntegral integrate_idgbm(const std::vector<L2Element>& f, const NoiseRealization& noise, double sigma_hi2)
{
    if (f.size() != noise.partition().slices())
        throw std::invalid_argument("integrate_idgbm: need one integrand per slice");
    IdGBMIntegral out;
    Eigen::MatrixXd c(static_cast<Eigen::Index>(f.size()), static_cast<Eigen::Index>(noise.n_modes()));
    for (std::size_t j = 0; j < f.size(); ++j) {
        const Eigen::VectorXd cj = functional_coeffs(noise, f[j]);
        c.row(static_cast<Eigen::Index>(j)) = cj.transpose();
        out.tail_bound += noise.partition().dt(j) * std::max(0.0, norm_sq(f[j]) - ordered_sum_sq(cj));
    }
    out.tail_bound *= sigma_hi2;
    out.value = integrate_idgbm(c, noise);
    return out;
}

namespace detail {

inline std::string fmt17(double v)
{
    char buf[40];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline std::string join17(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt17(v[i]);
    return s;
}

inline std::vector<double> split_doubles(const std::string& s)
{
    std::vector<double> out;
    std::stringstream ss(s);
    std::string tok;
    while (std::getline(ss, tok, ',')) {
        std::size_t used = 0;
        out.push_back(std::stod(tok, &used));
        if (used != tok.size()) throw std::invalid_argument("noise metadata: bad number '" + tok + "'");
    }
    return out;
}

}  // namespace detail

/// Writes `<stem>.csv` (slice,mode,increment) and `<stem>.meta` (key=value).
inline void dump_noise(const NoiseRealization& noise, const VolBand& band, const std::string& stem)
{
    std::ofstream csv(stem + ".csv", std::ios::binary);
    if (!csv) throw std::runtime_error("dump_noise: cannot write " + stem + ".csv");
    csv << "slice,mode,increment\n";
    for (Eigen::Index j = 0; j < noise.increments().rows(); ++j)
        for (Eigen::Index n = 0; n < noise.increments().cols(); ++n)
            csv << j << ',' << n << ',' << detail::fmt17(noise.increments()(j, n)) << '\n';
    std::ofstream meta(stem + ".meta", std::ios::binary);
    if (!meta) throw std::runtime_error("dump_noise: cannot write " + stem + ".meta");
    meta << "partition=" << detail::join17(noise.partition().points()) << '\n'
         << "sigma_lo2=" << detail::fmt17(band.lo2()) << '\n'
         << "sigma_hi2=" << detail::fmt17(band.hi2()) << '\n'
         << "scenario_grid=" << detail::join17(noise.scenario().grid()) << '\n'
         << "scenario_values=" << detail::join17(noise.scenario().values()) << '\n'
         << "seed=" << noise.seed() << '\n'
         << "basis=" << to_string(noise.basis().kind()) << '\n'
         << "basis_length=" << detail::fmt17(noise.basis().length()) << '\n'
         << "basis_cells=" << noise.basis().cells() << '\n'
         << "n_modes=" << noise.n_modes() << '\n';
}

inline NoiseRealization load_noise(const std::string& stem)
{
    std::ifstream meta(stem + ".meta");
    if (!meta) throw std::runtime_error("load_noise: cannot read " + stem + ".meta");
    std::map<std::string, std::string> kv;
    for (std::string line; std::getline(meta, line);) {
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos) throw std::invalid_argument("load_noise: malformed line '" + line + "'");
        kv[line.substr(0, eq)] = line.substr(eq + 1);
    }
    auto need = [&](const std::string& k) -> const std::string& {
        const auto it = kv.find(k);
        if (it == kv.end()) throw std::invalid_argument("load_noise: missing key " + k);
        return it->second;
    };
    const VolBand band(std::stod(need("sigma_lo2")), std::stod(need("sigma_hi2")));
    const TimePartition part(detail::split_doubles(need("partition")));
    const ScenarioPath scen(detail::split_doubles(need("scenario_grid")), detail::split_doubles(need("scenario_values")),
                            band);
    const std::string kind = need("basis");
    const BasisKind bk = kind == "cosine"      ? BasisKind::cosine
                         : kind == "full-trig" ? BasisKind::full_trig
                         : kind == "indicator-partition"
                             ? BasisKind::indicator_partition
                             : throw std::invalid_argument("load_noise: unknown basis " + kind);
    const Basis basis(bk, std::stod(need("basis_length")), std::stoull(need("basis_cells")));
    const auto n_modes = static_cast<std::size_t>(std::stoull(need("n_modes")));
    const auto seed = static_cast<std::uint64_t>(std::stoull(need("seed")));

    Eigen::MatrixXd inc = Eigen::MatrixXd::Constant(static_cast<Eigen::Index>(part.slices()),
                                                    static_cast<Eigen::Index>(n_modes),
                                                    std::numeric_limits<double>::quiet_NaN());
    std::ifstream csv(stem + ".csv");
    if (!csv) throw std::runtime_error("load_noise: cannot read " + stem + ".csv");
    std::string line;
    std::getline(csv, line);
    if (line != "slice,mode,increment") throw std::invalid_argument("load_noise: bad CSV header");
    while (std::getline(csv, line)) {
        if (line.empty()) continue;
        const auto a = line.find(','), b = line.find(',', a + 1);
        if (a == std::string::npos || b == std::string::npos)
            throw std::invalid_argument("load_noise: malformed row '" + line + "'");
        const auto j = std::stoll(line.substr(0, a));
        const auto n = std::stoll(line.substr(a + 1, b - a - 1));
        if (j < 0 || n < 0 || j >= inc.rows() || n >= inc.cols())
            throw std::invalid_argument("load_noise: index out of range in '" + line + "'");
        inc(j, n) = std::stod(line.substr(b + 1));
    }
    if (!inc.allFinite()) throw std::invalid_argument("load_noise: missing or non-finite increments");
    return {part, basis, n_modes, scen, std::move(inc), seed};
}

}  // namespace gfield
