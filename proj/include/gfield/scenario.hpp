#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gfield {

/// Variance-rate uncertainty interval [sigma_lo2, sigma_hi2].
class VolBand {
public:
    VolBand(double sigma_lo2, double sigma_hi2) : lo2_(sigma_lo2), hi2_(sigma_hi2)
    {
        if (!std::isfinite(sigma_lo2) || !std::isfinite(sigma_hi2))
            throw std::invalid_argument("VolBand: non-finite bound");
        if (sigma_lo2 < 0.0)
            throw std::invalid_argument("VolBand: sigma_lo2 must be >= 0");
        if (sigma_lo2 > sigma_hi2)
            throw std::invalid_argument("VolBand: sigma_lo2 must not exceed sigma_hi2");
    }

    double lo2() const noexcept { return lo2_; }
    double hi2() const noexcept { return hi2_; }
    double lo() const noexcept { return std::sqrt(lo2_); }
    double hi() const noexcept { return std::sqrt(hi2_); }
    bool degenerate() const noexcept { return lo2_ == hi2_; }

    bool contains(double theta, double slack = 1e-12) const noexcept
    {
        const double tol = slack * std::max(1.0, hi2_);
        return theta >= lo2_ - tol && theta <= hi2_ + tol;
    }

    friend bool operator==(const VolBand&, const VolBand&) = default;

private:
    double lo2_;
    double hi2_;
};

/// Piecewise-constant variance-rate control theta(t) on [t_0, t_m); one
/// classical probability scenario inside the band.
class ScenarioPath {
public:
    ScenarioPath(std::vector<double> grid, std::vector<double> values, const VolBand& band)
        : grid_(std::move(grid)), values_(std::move(values))
    {
        if (grid_.size() < 2)
            throw std::invalid_argument("ScenarioPath: grid needs at least two instants");
        if (values_.size() + 1 != grid_.size())
            throw std::invalid_argument("ScenarioPath: need one value per slice");
        if (grid_.front() != 0.0)
            throw std::invalid_argument("ScenarioPath: grid must start at 0");
        for (std::size_t j = 1; j < grid_.size(); ++j)
            if (!(grid_[j] > grid_[j - 1]))
                throw std::invalid_argument("ScenarioPath: grid must be strictly increasing");
        for (std::size_t j = 0; j < values_.size(); ++j)
            if (!band.contains(values_[j]))
                throw std::invalid_argument("ScenarioPath: value " + std::to_string(values_[j]) +
                                            " at slice " + std::to_string(j) + " outside band");
    }

    static ScenarioPath constant(const VolBand& band, double theta, double horizon)
    {
        return ScenarioPath({0.0, horizon}, {theta}, band);
    }

    const std::vector<double>& grid() const noexcept { return grid_; }
    const std::vector<double>& values() const noexcept { return values_; }
    std::size_t slices() const noexcept { return values_.size(); }
    double horizon() const noexcept { return grid_.back(); }

    /// theta on the slice containing t (right-continuous; t == horizon maps
    /// to the last slice).
    double theta_at(double t) const
    {
        for (std::size_t j = 0; j + 1 < grid_.size(); ++j)
            if (t < grid_[j + 1]) return values_[j];
        return values_.back();
    }

    /// Integral of theta over [a, b].
    double integrated(double a, double b) const
    {
        double acc = 0.0;
        for (std::size_t j = 0; j < values_.size(); ++j) {
            const double lo = std::max(a, grid_[j]);
            const double hi = std::min(b, grid_[j + 1]);
            if (hi > lo) acc += values_[j] * (hi - lo);
        }
        return acc;
    }

    bool is_constant() const noexcept
    {
        for (double v : values_)
            if (v != values_.front()) return false;
        return true;
    }

    friend bool operator==(const ScenarioPath&, const ScenarioPath&) = default;

private:
    std::vector<double> grid_;
    std::vector<double> values_;
};

inline std::vector<double> uniform_grid(double horizon, std::size_t slices)
{
    if (slices == 0) throw std::invalid_argument("uniform_grid: need at least one slice");
    if (!(horizon > 0.0)) throw std::invalid_argument("uniform_grid: horizon must be positive");
    std::vector<double> g(slices + 1);
    for (std::size_t j = 0; j <= slices; ++j) g[j] = horizon * static_cast<double>(j) / static_cast<double>(slices);
    g.back() = horizon;
    return g;
}

/// Admissible per-slice levels: both band endpoints plus `interior_levels`
/// equally spaced interior points.
inline std::vector<double> scenario_levels(const VolBand& band, std::size_t interior_levels = 0)
{
    std::vector<double> levels{band.lo2()};
    for (std::size_t k = 1; k <= interior_levels; ++k)
        levels.push_back(band.lo2() + (band.hi2() - band.lo2()) * static_cast<double>(k) /
                                          static_cast<double>(interior_levels + 1));
    if (!band.degenerate()) levels.push_back(band.hi2());
    return levels;
}

/// Enumerates every piecewise-constant control on `grid` whose slice values
/// are drawn from the level set. Ordering is mixed-radix with slice 0 as
/// the most significant digit, so index 0 is constant-low and the last
/// index is constant-high.
inline std::vector<ScenarioPath> enumerate_scenarios(const VolBand& band, const std::vector<double>& grid,
                                                     std::size_t interior_levels = 0,
                                                     std::size_t max_scenarios = 1u << 20)
{
    const auto levels = scenario_levels(band, interior_levels);
    const std::size_t m = grid.size() - 1;
    const std::size_t radix = levels.size();
    std::size_t total = 1;
    for (std::size_t j = 0; j < m; ++j) {
        if (total > max_scenarios / radix)
            throw std::invalid_argument("enumerate_scenarios: enumeration exceeds " +
                                        std::to_string(max_scenarios) + " scenarios");
        total *= radix;
    }
    std::vector<ScenarioPath> out;
    out.reserve(total);
    std::vector<double> values(m);
    for (std::size_t idx = 0; idx < total; ++idx) {
        std::size_t rest = idx;
        for (std::size_t j = m; j-- > 0;) {
            values[j] = levels[rest % radix];
            rest /= radix;
        }
        out.emplace_back(grid, values, band);
    }
    return out;
}

/// The two constant extremal controls, low first.
inline std::vector<ScenarioPath> extremal_scenarios(const VolBand& band, double horizon)
{
    std::vector<ScenarioPath> out{ScenarioPath::constant(band, band.lo2(), horizon)};
    if (!band.degenerate()) out.push_back(ScenarioPath::constant(band, band.hi2(), horizon));
    return out;
}

}  // namespace gfield
