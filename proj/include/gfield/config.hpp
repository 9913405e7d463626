#pragma once

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdint>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfield/gheat.hpp"
#include "gfield/report.hpp"
#include "gfield/scenario.hpp"
#include "gfield/spde.hpp"

namespace gfield {

/// Bad or inconsistent run configuration; the message names the field.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Acceptance thresholds. SE multipliers are in standard errors.
struct Tolerances {
    double moment_low = 1e-2;   // k <= 2
    double moment_high = 5e-2;  // k = 3, 4
    double engine_se = 3.0;
    double engine_rel = 0.02;
    double compatibility = 1e-12;
    double covariance = 2e-2;
    double expansion_oracle = 2e-3;
    double expansion_defect_ratio = 0.02;  // defect(N_max) / defect(1)
    double union_exact = 1e-12;
    double union_se = 5.0;
    double isometry_se = 5.0;
    double capacity_se = 3.0;
    double idgbm_se = 5.0;
    double kernel_mass = 1e-8;
    double kernel_duality = 1e-10;
    double coupling_rel = 1e-2;
    double coupling_order_lo = 0.7;
    double coupling_order_hi = 1.3;
    double ou_mean_se = 3.0;
    double ou_cov_se = 3.0;
    double ou_classical_se = 5.0;
    double weak_residual = 1e-3;
    double second_moment_se = 3.0;
    double picard = 1e-8;
    std::size_t picard_max_iter = 30;
};

/// Monte Carlo sample sizes per check; zero means "derive from run.n_paths".
struct PathCounts {
    std::size_t engine = 0;         // n
    std::size_t isometry = 0;       // n / 25
    std::size_t capacity = 0;       // n / 5
    std::size_t union_mc = 0;       // n / 5
    std::size_t idgbm = 0;          // n / 25
    std::size_t ou_mean = 0;        // n
    std::size_t ou_cov = 0;         // n / 5
    std::size_t ou_classical = 0;   // 2n / 5
    std::size_t second_moment = 0;  // n / 25
    std::size_t picard = 8;
};

struct RunConfig {
    double sigma_lo2 = 1.0;
    double sigma_hi2 = 4.0;
    std::size_t scenario_slices = 8;
    std::size_t interior_levels = 0;
    std::size_t gheat_nx = 1201;
    double gheat_horizon = 1.0;
    double gheat_dt = 0.0;  // 0: 0.9 of the stability limit
    SPDEConfig spde;
    std::size_t n_paths = 100000;
    std::uint64_t seed = 20240917;
    std::string out;
    int jobs = 1;
    PathCounts paths;
    Tolerances tol;

    VolBand band() const { return {sigma_lo2, sigma_hi2}; }

    std::size_t count(std::size_t explicit_value, std::size_t num, std::size_t den) const
    {
        if (explicit_value > 0) return explicit_value;
        return std::max<std::size_t>(2, n_paths * num / den);
    }
    std::size_t engine_paths() const { return count(paths.engine, 1, 1); }
    std::size_t isometry_paths() const { return count(paths.isometry, 1, 25); }
    std::size_t capacity_paths() const { return count(paths.capacity, 1, 5); }
    std::size_t union_paths() const { return count(paths.union_mc, 1, 5); }
    std::size_t idgbm_paths() const { return count(paths.idgbm, 1, 25); }
    std::size_t ou_mean_paths() const { return count(paths.ou_mean, 1, 1); }
    std::size_t ou_cov_paths() const { return count(paths.ou_cov, 1, 5); }
    std::size_t ou_classical_paths() const { return count(paths.ou_classical, 2, 5); }
    std::size_t second_moment_paths() const { return count(paths.second_moment, 1, 25); }

    /// 1D PDE grid on [0, T] for the given band; dt from the config when set.
    PDEGrid gheat_grid(double T, std::size_t nx) const
    {
        auto g = PDEGrid::make(band(), T, nx);
        if (gheat_dt > 0.0) g.dt = gheat_dt;
        return g;
    }
    PDEGrid gheat_grid() const { return gheat_grid(gheat_horizon, gheat_nx); }

    void validate() const;
};

namespace detail {

inline std::string trim(const std::string& s)
{
    const auto b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline double parse_double(const std::string& key, const std::string& v)
{
    std::size_t used = 0;
    double out = 0.0;
    try {
        out = std::stod(v, &used);
    } catch (const std::exception&) {
        throw ConfigError(key + ": expected a number, got '" + v + "'");
    }
    if (used != v.size() || !std::isfinite(out)) throw ConfigError(key + ": expected a finite number, got '" + v + "'");
    return out;
}

inline std::uint64_t parse_unsigned(const std::string& key, const std::string& v)
{
    if (v.empty() || v.find_first_not_of("0123456789") != std::string::npos)
        throw ConfigError(key + ": expected a nonnegative integer, got '" + v + "'");
    try {
        return std::stoull(v);
    } catch (const std::exception&) {
        throw ConfigError(key + ": integer out of range: '" + v + "'");
    }
}

using Setter = std::function<void(RunConfig&, const std::string& key, const std::string& value)>;

inline Setter real(double RunConfig::*field)
{
    return [field](RunConfig& c, const std::string& k, const std::string& v) { c.*field = parse_double(k, v); };
}
inline Setter count(std::size_t RunConfig::*field)
{
    return [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.*field = static_cast<std::size_t>(parse_unsigned(k, v));
    };
}
inline Setter tol_real(double Tolerances::*field)
{
    return [field](RunConfig& c, const std::string& k, const std::string& v) { c.tol.*field = parse_double(k, v); };
}
inline Setter path_count(std::size_t PathCounts::*field)
{
    return [field](RunConfig& c, const std::string& k, const std::string& v) {
        c.paths.*field = static_cast<std::size_t>(parse_unsigned(k, v));
    };
}

inline const std::map<std::string, Setter>& setters()
{
    static const std::map<std::string, Setter> table = [] {
        std::map<std::string, Setter> t;
        t["band.sigma_lo2"] = real(&RunConfig::sigma_lo2);
        t["band.sigma_hi2"] = real(&RunConfig::sigma_hi2);
        t["scenario.slices"] = count(&RunConfig::scenario_slices);
        t["scenario.interior_levels"] = count(&RunConfig::interior_levels);
        t["gheat.nx"] = count(&RunConfig::gheat_nx);
        t["gheat.horizon"] = real(&RunConfig::gheat_horizon);
        t["gheat.dt"] = real(&RunConfig::gheat_dt);
        t["spde.mass"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.spde.mass = parse_double(k, v); };
        t["spde.horizon"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.spde.horizon = parse_double(k, v);
        };
        t["spde.n_modes"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.spde.n_modes = static_cast<std::size_t>(parse_unsigned(k, v));
        };
        t["spde.nx"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.spde.nx = static_cast<std::size_t>(parse_unsigned(k, v));
        };
        t["spde.slices"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.spde.slices = static_cast<std::size_t>(parse_unsigned(k, v));
        };
        t["run.n_paths"] = count(&RunConfig::n_paths);
        t["run.seed"] = [](RunConfig& c, const std::string& k, const std::string& v) { c.seed = parse_unsigned(k, v); };
        t["run.out"] = [](RunConfig& c, const std::string&, const std::string& v) { c.out = v; };
        t["run.jobs"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            const auto j = parse_unsigned(k, v);
            if (j == 0 || j > 1024) throw ConfigError(k + ": must be in [1, 1024], got " + v);
            c.jobs = static_cast<int>(j);
        };

        t["paths.engine"] = path_count(&PathCounts::engine);
        t["paths.isometry"] = path_count(&PathCounts::isometry);
        t["paths.capacity"] = path_count(&PathCounts::capacity);
        t["paths.union"] = path_count(&PathCounts::union_mc);
        t["paths.idgbm"] = path_count(&PathCounts::idgbm);
        t["paths.ou_mean"] = path_count(&PathCounts::ou_mean);
        t["paths.ou_cov"] = path_count(&PathCounts::ou_cov);
        t["paths.ou_classical"] = path_count(&PathCounts::ou_classical);
        t["paths.second_moment"] = path_count(&PathCounts::second_moment);
        t["paths.picard"] = path_count(&PathCounts::picard);

        t["tolerances.moment_low"] = tol_real(&Tolerances::moment_low);
        t["tolerances.moment_high"] = tol_real(&Tolerances::moment_high);
        t["tolerances.engine_se"] = tol_real(&Tolerances::engine_se);
        t["tolerances.engine_rel"] = tol_real(&Tolerances::engine_rel);
        t["tolerances.compatibility"] = tol_real(&Tolerances::compatibility);
        t["tolerances.covariance"] = tol_real(&Tolerances::covariance);
        t["tolerances.expansion_oracle"] = tol_real(&Tolerances::expansion_oracle);
        t["tolerances.expansion_defect_ratio"] = tol_real(&Tolerances::expansion_defect_ratio);
        t["tolerances.union_exact"] = tol_real(&Tolerances::union_exact);
        t["tolerances.union_se"] = tol_real(&Tolerances::union_se);
        t["tolerances.isometry_se"] = tol_real(&Tolerances::isometry_se);
        t["tolerances.capacity_se"] = tol_real(&Tolerances::capacity_se);
        t["tolerances.idgbm_se"] = tol_real(&Tolerances::idgbm_se);
        t["tolerances.kernel_mass"] = tol_real(&Tolerances::kernel_mass);
        t["tolerances.kernel_duality"] = tol_real(&Tolerances::kernel_duality);
        t["tolerances.coupling_rel"] = tol_real(&Tolerances::coupling_rel);
        t["tolerances.coupling_order_lo"] = tol_real(&Tolerances::coupling_order_lo);
        t["tolerances.coupling_order_hi"] = tol_real(&Tolerances::coupling_order_hi);
        t["tolerances.ou_mean_se"] = tol_real(&Tolerances::ou_mean_se);
        t["tolerances.ou_cov_se"] = tol_real(&Tolerances::ou_cov_se);
        t["tolerances.ou_classical_se"] = tol_real(&Tolerances::ou_classical_se);
        t["tolerances.weak_residual"] = tol_real(&Tolerances::weak_residual);
        t["tolerances.second_moment_se"] = tol_real(&Tolerances::second_moment_se);
        t["tolerances.picard"] = tol_real(&Tolerances::picard);
        t["tolerances.picard_max_iter"] = [](RunConfig& c, const std::string& k, const std::string& v) {
            c.tol.picard_max_iter = static_cast<std::size_t>(parse_unsigned(k, v));
        };
        return t;
    }();
    return table;
}

inline void require(bool ok, const std::string& message)
{
    if (!ok) throw ConfigError(message);
}

}  // namespace detail

inline void RunConfig::validate() const
{
    using detail::require;
    require(sigma_lo2 >= 0.0, "band.sigma_lo2 must be >= 0, got " + format17(sigma_lo2));
    require(sigma_lo2 <= sigma_hi2,
            "band.sigma_lo2 (" + format17(sigma_lo2) + ") exceeds band.sigma_hi2 (" + format17(sigma_hi2) + ")");
    require(sigma_hi2 > 0.0, "band.sigma_hi2 must be positive, got " + format17(sigma_hi2));

    require(scenario_slices >= 1 && scenario_slices <= 16,
            "scenario.slices must be in [1, 16], got " + std::to_string(scenario_slices));
    require(interior_levels <= 4, "scenario.interior_levels must be in [0, 4], got " + std::to_string(interior_levels));

    require(gheat_nx >= 5, "gheat.nx must be >= 5, got " + std::to_string(gheat_nx));
    require(gheat_horizon > 0.0, "gheat.horizon must be positive, got " + format17(gheat_horizon));
    require(gheat_dt >= 0.0, "gheat.dt must be >= 0 (0 selects the stability limit), got " + format17(gheat_dt));
    {
        const auto g = PDEGrid::make(band(), gheat_horizon, gheat_nx);
        const double limit = PDEGrid::cfl_limit(g.dx(), sigma_hi2);
        require(gheat_dt <= limit * (1.0 + 1e-12),
                "gheat.dt = " + format17(gheat_dt) + " violates the CFL limit dx^2 / sigma_hi2 = " + format17(limit) +
                    " for gheat.nx = " + std::to_string(gheat_nx));
    }

    try {
        spde.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("spde: ") + e.what());
    }
    require(spde.n_modes <= spde.nx, "spde.n_modes (" + std::to_string(spde.n_modes) +
                                         ") must not exceed spde.nx (" + std::to_string(spde.nx) + ")");
    require(spde.slices % 4 == 0, "spde.slices must be a multiple of 4, got " + std::to_string(spde.slices));

    require(n_paths >= 2, "run.n_paths must be >= 2, got " + std::to_string(n_paths));
    require(jobs >= 1, "run.jobs must be >= 1");
    require(paths.picard >= 1, "paths.picard must be >= 1");

    const std::vector<std::pair<const char*, double>> positive = {
        {"tolerances.moment_low", tol.moment_low},
        {"tolerances.moment_high", tol.moment_high},
        {"tolerances.engine_se", tol.engine_se},
        {"tolerances.engine_rel", tol.engine_rel},
        {"tolerances.compatibility", tol.compatibility},
        {"tolerances.covariance", tol.covariance},
        {"tolerances.expansion_oracle", tol.expansion_oracle},
        {"tolerances.expansion_defect_ratio", tol.expansion_defect_ratio},
        {"tolerances.union_exact", tol.union_exact},
        {"tolerances.union_se", tol.union_se},
        {"tolerances.isometry_se", tol.isometry_se},
        {"tolerances.capacity_se", tol.capacity_se},
        {"tolerances.idgbm_se", tol.idgbm_se},
        {"tolerances.kernel_mass", tol.kernel_mass},
        {"tolerances.kernel_duality", tol.kernel_duality},
        {"tolerances.coupling_rel", tol.coupling_rel},
        {"tolerances.ou_mean_se", tol.ou_mean_se},
        {"tolerances.ou_cov_se", tol.ou_cov_se},
        {"tolerances.ou_classical_se", tol.ou_classical_se},
        {"tolerances.weak_residual", tol.weak_residual},
        {"tolerances.second_moment_se", tol.second_moment_se},
        {"tolerances.picard", tol.picard},
    };
    for (const auto& [name, v] : positive) require(v > 0.0, std::string(name) + " must be positive, got " + format17(v));
    require(tol.coupling_order_lo <= tol.coupling_order_hi,
            "tolerances.coupling_order_lo exceeds tolerances.coupling_order_hi");
    require(tol.picard_max_iter >= 1, "tolerances.picard_max_iter must be >= 1");
}

/// Applies "section.key" = value pairs, rejecting unknown keys, then validates.
inline RunConfig config_from_pairs(const std::vector<std::pair<std::string, std::string>>& pairs,
                                   RunConfig base = {})
{
    const auto& table = detail::setters();
    for (const auto& [key, value] : pairs) {
        const auto it = table.find(key);
        if (it == table.end()) throw ConfigError("unknown config key '" + key + "'");
        it->second(base, key, detail::trim(value));
    }
    base.validate();
    return base;
}

inline std::vector<std::pair<std::string, std::string>> parse_ini(std::istream& in)
{
    boost::property_tree::ptree tree;
    try {
        boost::property_tree::ini_parser::read_ini(in, tree);
    } catch (const boost::property_tree::ini_parser_error& e) {
        throw ConfigError(std::string("malformed INI: ") + e.message() + " (line " + std::to_string(e.line()) + ")");
    }
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [section, body] : tree) {
        if (body.empty()) throw ConfigError("key '" + section + "' is outside any [section]");
        for (const auto& [key, leaf] : body) out.emplace_back(section + "." + key, leaf.data());
    }
    return out;
}

inline std::vector<std::pair<std::string, std::string>> parse_json(std::istream& in)
{
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
    if (!doc.is_object()) throw ConfigError("JSON config must be an object of sections");
    std::vector<std::pair<std::string, std::string>> out;
    for (const auto& [section, body] : doc.items()) {
        if (!body.is_object()) throw ConfigError("JSON section '" + section + "' must be an object");
        for (const auto& [key, v] : body.items()) {
            const std::string name = section + "." + key;
            if (v.is_string()) out.emplace_back(name, v.get<std::string>());
            else if (v.is_number_unsigned()) out.emplace_back(name, std::to_string(v.get<std::uint64_t>()));
            else if (v.is_number_integer()) out.emplace_back(name, std::to_string(v.get<std::int64_t>()));
            else if (v.is_number_float()) out.emplace_back(name, format17(v.get<double>()));
            else throw ConfigError(name + ": expected a number or string");
        }
    }
    return out;
}

/// Loads an INI file, or JSON when the path ends in ".json".
inline RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file '" + path + "'");
    const bool json = path.size() >= 5 && path.compare(path.size() - 5, 5, ".json") == 0;
    return config_from_pairs(json ? parse_json(in) : parse_ini(in));
}

inline RunConfig config_from_string(const std::string& text, bool json = false)
{
    std::istringstream in(text);
    return config_from_pairs(json ? parse_json(in) : parse_ini(in));
}

/// Every key with its current value, in INI form.
inline std::string config_to_ini(const RunConfig& c)
{
    std::ostringstream os;
    os << "[band]\nsigma_lo2 = " << format17(c.sigma_lo2) << "\nsigma_hi2 = " << format17(c.sigma_hi2) << "\n\n"
       << "[scenario]\nslices = " << c.scenario_slices << "\ninterior_levels = " << c.interior_levels << "\n\n"
       << "[gheat]\nnx = " << c.gheat_nx << "\nhorizon = " << format17(c.gheat_horizon)
       << "\ndt = " << format17(c.gheat_dt) << "\n\n"
       << "[spde]\nmass = " << format17(c.spde.mass) << "\nhorizon = " << format17(c.spde.horizon)
       << "\nn_modes = " << c.spde.n_modes << "\nnx = " << c.spde.nx << "\nslices = " << c.spde.slices << "\n\n"
       << "[run]\nn_paths = " << c.n_paths << "\nseed = " << c.seed << "\njobs = " << c.jobs << "\n";
    if (!c.out.empty()) os << "out = " << c.out << "\n";
    return os.str();
}

}  // namespace gfield
