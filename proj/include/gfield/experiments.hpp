#pragma once

#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfield/acceptance.hpp"
#include "gfield/config.hpp"
#include "gfield/report.hpp"
#include "gfield/svg.hpp"

namespace gfield::experiments {

/// File name to file contents.
using Files = std::map<std::string, std::string>;

inline Files moments(const RunConfig& c)
{
    const auto band = c.band();
    const double T = c.gheat_horizon;
    const auto grid = c.gheat_grid();
    CsvTable t({"k", "upper_pde", "upper_closed_form", "lower_pde", "lower_closed_form"});
    for (int k = 1; k <= 4; ++k) {
        const PayoffSpec phi{[k](double x) { return acceptance::pow_abs(x, k); }, k};
        t.add({static_cast<double>(k), solve_gheat_1d(band, phi, T, grid),
               gnormal_abs_moment(band, std::sqrt(T), k, MomentSide::upper), solve_gheat_1d_lower(band, phi, T, grid),
               gnormal_abs_moment(band, std::sqrt(T), k, MomentSide::lower)});
    }
    PlotFrame f{"G-normal absolute moments", "k", "moment", false, true};
    return {{"moments.csv", t.str()},
            {"moments.svg", svg_from_table(t, "k", {"upper_pde", "upper_closed_form", "lower_pde", "lower_closed_form"}, f)}};
}

inline Files expansion(const RunConfig& c)
{
    const auto band = c.band();
    const MeasureSpace space;
    const auto ft = Basis::full_trig(space);
    const auto x = L2Element::from_function(space, [](double t) { return t; });
    const auto ind = L2Element::indicator(space, IntervalSet(0.4, 1.0));
    CsvTable defect({"n", "defect_x", "defect_indicator"});
    for (std::size_t n = 1; n <= ft.band_limit(space); ++n)
        defect.add({static_cast<double>(n), expansion_surrogate(x, ft, n, band).defect,
                    expansion_surrogate(ind, ft, n, band).defect});

    // Gap on |x - 0.3| between target and surrogate for growing N.
    CsvTable gap({"n", "target", "surrogate", "gap", "lipschitz_bound"});
    const auto phi = PayoffSpec{[](double v) { return std::abs(v - 0.3); }, 1};
    const double vt = norm_sq(ind);
    const double target = solve_gheat_1d(band, phi, vt, PDEGrid::make(band, vt, 801));
    for (std::size_t n : {2, 4, 8, 16, 32, 64}) {
        const auto sur = expansion_surrogate(ind, ft, n, band);
        const double vs = sur.projected_norm_sq;
        const double s = solve_gheat_1d(band, phi, vs, PDEGrid::make(band, vs, 801));
        gap.add({static_cast<double>(n), target, s, std::abs(target - s),
                 band.hi() * std::sqrt(2.0 / std::numbers::pi) * std::abs(std::sqrt(vt) - std::sqrt(vs))});
    }
    PlotFrame f{"Parseval defect of the expansion surrogate", "N", "defect", true, true};
    return {{"expansion_defect.csv", defect.str()},
            {"expansion_gap.csv", gap.str()},
            {"expansion_defect.svg", svg_from_table(defect, "n", {"defect_x", "defect_indicator"}, f)}};
}

inline Files isometry(const RunConfig& c)
{
    const auto band = c.band();
    const MeasureSpace space;
    const auto ft = Basis::full_trig(space);
    const auto part = TimePartition::uniform(1.0, 4);
    const auto scenarios = acceptance::four_slice_scenarios(c, 1.0);
    Eigen::MatrixXd x(2, 4);
    x << 1, 0.5, -1, 2, 0.3, 0.3, 1, -0.4;
    const auto det = ElementaryField::constant({IntervalSet(0.2, 1.7), IntervalSet(2, 5)}, part, x);
    Eigen::VectorXd probe = Eigen::VectorXd::Zero(16);
    probe(1) = 1;
    probe(4) = -0.5;
    const ElementaryField adapted({IntervalSet(0, 1), IntervalSet(2, 3.5)}, part,
                                  [probe](std::size_t i, std::size_t j, const PastView& past) {
                                      double w = 0;
                                      for (std::size_t k = 0; k < j; ++k) w += past.functional(probe, k);
                                      return i == 0 ? 1 + std::cos(w) : std::tanh(w);
                                  });
    CsvTable t({"integrand", "scenario", "second_moment", "std_error", "norm_sq", "lo2_norm_sq", "hi2_norm_sq"});
    int id = 0;
    for (const auto* f : {&det, &adapted}) {
        const auto rep = isometry_report(*f, scenarios, ft, 16, c.isometry_paths(), derive_seed(c.seed, 107, id), 5.0,
                                         space, c.jobs);
        for (std::size_t s = 0; s < rep.rows.size(); ++s) {
            const auto& r = rep.rows[s];
            t.add({static_cast<double>(id), static_cast<double>(s), r.second_moment.mean, r.second_moment.std_error,
                   r.norm_sq.mean, band.lo2() * r.norm_sq.mean, band.hi2() * r.norm_sq.mean});
        }
        ++id;
    }
    return {{"isometry.csv", t.str()}};
}

inline Files ou(const RunConfig& c)
{
    const auto band = c.band();
    const double T = c.spde.horizon;
    const auto part = TimePartition::uniform(T, 40);
    const auto scenarios = acceptance::four_slice_scenarios(c, T);
    const std::vector<double> psi = {0.4, -0.3, 0.2, 0.1};
    CsvTable t({"n", "t", "mean_target", "mean_min", "mean_max", "var_sup", "var_bound"});
    for (std::size_t n = 0; n < 4; ++n) {
        const auto mode = GOUMode::make(n, c.spde.mass, psi[n]);
        const std::size_t np = c.ou_cov_paths();
        std::vector<Eigen::MatrixXd> xs;
        for (const auto& s : scenarios) xs.push_back(simulate_gou(mode, part, s, np, derive_seed(c.seed, 112, n), c.jobs));
        std::vector<double> col(np);
        for (std::size_t j = 0; j <= part.slices(); ++j) {
            double lo = 1e300, hi = -1e300, var = 0.0;
            for (const auto& m : xs) {
                for (std::size_t p = 0; p < np; ++p) col[p] = m(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(j));
                const double mean = estimate_mean(col).mean;
                lo = std::min(lo, mean);
                hi = std::max(hi, mean);
                const double target = mode.mean(part.t(j));
                for (double& v : col) v = (v - target) * (v - target);
                var = std::max(var, estimate_mean(col).mean);
            }
            t.add({static_cast<double>(n), part.t(j), mode.mean(part.t(j)), lo, hi, var,
                   ou_cov_bound(band.hi2(), mode.drift, part.t(j), part.t(j))});
        }
    }
    return {{"ou.csv", t.str()}};
}

inline Files spde_couple(const RunConfig& c)
{
    const auto band = c.band();
    const auto grid = uniform_grid(c.spde.horizon, 4);
    const std::vector<ScenarioPath> scenarios = {
        ScenarioPath::constant(band, band.hi2(), c.spde.horizon),
        ScenarioPath::constant(band, band.lo2(), c.spde.horizon),
        ScenarioPath(grid, {band.hi2(), band.lo2(), band.hi2(), band.lo2()}, band),
    };
    CsvTable t({"scenario", "slices", "dt", "abs_sup", "reference_sup", "relative"});
    CsvTable order({"scenario", "fitted_order"});
    for (std::size_t k = 0; k < scenarios.size(); ++k) {
        const auto sweep =
            coupling_sweep(acceptance::spde_initial(), c.spde, scenarios[k], 3, derive_seed(c.seed, 111, k));
        for (const auto& l : sweep.levels)
            t.add({static_cast<double>(k), static_cast<double>(l.slices), l.dt, l.diff.abs_sup, l.diff.reference_sup,
                   l.diff.relative});
        order.add({static_cast<double>(k), sweep.order});
    }
    return {{"spde_couple.csv", t.str()}, {"spde_couple_order.csv", order.str()}};
}

inline Files field_snapshot(const RunConfig& c)
{
    const auto band = c.band();
    const auto& cfg = c.spde;
    const auto grid = uniform_grid(cfg.horizon, 4);
    const ScenarioPath scen(grid, {band.hi2(), band.lo2(), band.hi2(), band.lo2()}, band);
    const auto noise = sample_noise(cfg.partition(), cfg.basis(), cfg.n_modes, scen, derive_seed(c.seed, 200));
    const auto path = spectral_solve(acceptance::spde_initial(), noise, cfg);
    CsvTable values({"t", "x", "value"});
    CsvTable modes({"t", "n", "coefficient"});
    std::vector<double> rt, cx, v;
    for (std::size_t j = 0; j < path.times().size(); ++j) {
        for (std::size_t i = 0; i < path.nx(); ++i) {
            values.add({path.times()[j], path.x(i), path.value(j, i)});
            rt.push_back(path.times()[j]);
            cx.push_back(path.x(i));
            v.push_back(path.value(j, i));
        }
        for (std::size_t n = 0; n < cfg.n_modes; ++n) modes.add({path.times()[j], static_cast<double>(n), path.mode(j, n)});
    }
    PlotFrame f{"field snapshot", "x", "t"};
    return {{"field_snapshot.csv", values.str()},
            {"field_modes.csv", modes.str()},
            {"field_snapshot.svg", svg_heat_map(rt, cx, v, f)}};
}

inline const std::vector<std::string>& names()
{
    static const std::vector<std::string> n = {"moments", "expansion", "isometry", "ou", "spde-couple", "field-snapshot"};
    return n;
}

inline Files run(const std::string& name, const RunConfig& c)
{
    if (name == "moments") return moments(c);
    if (name == "expansion") return expansion(c);
    if (name == "isometry") return isometry(c);
    if (name == "ou") return ou(c);
    if (name == "spde-couple") return spde_couple(c);
    if (name == "field-snapshot") return field_snapshot(c);
    throw std::invalid_argument("unknown experiment '" + name + "'");
}

}  // namespace gfield::experiments
