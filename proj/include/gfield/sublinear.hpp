#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "gfield/parallel.hpp"
#include "gfield/rng.hpp"
#include "gfield/scenario.hpp"

namespace gfield {

/// Mean and standard error of one classical Monte Carlo sample.
struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t n = 0;
};

/// Plain-sum mean (monotone in the samples) and two-pass variance. A
/// constant sample returns that constant with zero error.
inline MeanEstimate estimate_mean(const std::vector<double>& xs)
{
    MeanEstimate out;
    out.n = xs.size();
    if (xs.empty()) return out;
    const auto [lo, hi] = std::minmax_element(xs.begin(), xs.end());
    if (*lo == *hi) {
        out.mean = *lo;
        return out;
    }
    double sum = 0.0;
    for (double x : xs) sum += x;
    out.mean = sum / static_cast<double>(xs.size());
    if (xs.size() < 2) return out;
    double ss = 0.0;
    for (double x : xs) ss += (x - out.mean) * (x - out.mean);
    out.std_error = std::sqrt(ss / static_cast<double>(xs.size() - 1) / static_cast<double>(xs.size()));
    return out;
}

/// Numerical stand-in for the sublinear expectation: max over scenarios of
/// per-scenario Monte Carlo means.
struct SublinearEstimate {
    double value = 0.0;
    double std_error = 0.0;
    std::size_t argmax = 0;
    std::optional<ScenarioPath> argmax_scenario;
    std::size_t n_paths = 0;
    std::vector<MeanEstimate> per_scenario;

    /// Same statistic restricted to the first k scenarios of the enumeration.
    SublinearEstimate prefix(std::size_t k) const
    {
        if (k == 0 || k > per_scenario.size()) throw std::invalid_argument("SublinearEstimate::prefix: bad size");
        SublinearEstimate out;
        out.n_paths = n_paths;
        out.per_scenario.assign(per_scenario.begin(), per_scenario.begin() + static_cast<std::ptrdiff_t>(k));
        out.argmax = 0;
        for (std::size_t s = 1; s < k; ++s)
            if (per_scenario[s].mean > per_scenario[out.argmax].mean) out.argmax = s;
        out.value = per_scenario[out.argmax].mean;
        out.std_error = per_scenario[out.argmax].std_error;
        return out;
    }
};

template <class Outcome>
using Payoff = std::function<double(const Outcome&)>;

template <class Outcome>
using Sampler = std::function<Outcome(const ScenarioPath&, std::uint64_t)>;

/// Evaluates several payoffs on one shared set of samples. Path p uses the
/// base seed derive_seed(seed, p) under every scenario (common random
/// numbers), so the sup over scenarios compares like with like.
template <class Outcome>
std::vector<SublinearEstimate> sup_expectation(const std::vector<Payoff<Outcome>>& payoffs,
                                               const Sampler<Outcome>& sampler,
                                               const std::vector<ScenarioPath>& scenarios, std::size_t n_paths,
                                               std::uint64_t seed, int jobs = default_jobs())
{
    if (scenarios.empty()) throw std::invalid_argument("sup_expectation: empty scenario set");
    if (n_paths == 0) throw std::invalid_argument("sup_expectation: n_paths must be positive");
    if (payoffs.empty()) throw std::invalid_argument("sup_expectation: no payoff");
    const std::size_t n_pay = payoffs.size();
    const std::size_t n_scen = scenarios.size();

    std::vector<SublinearEstimate> out(n_pay);
    for (auto& est : out) {
        est.n_paths = n_paths;
        est.per_scenario.resize(n_scen);
    }
    // One scenario at a time: samples[k * n_paths + p].
    std::vector<double> samples(n_pay * n_paths);
    std::vector<double> buf(n_paths);
    for (std::size_t s = 0; s < n_scen; ++s) {
        parallel_for(
            n_paths,
            [&](std::size_t p) {
                const Outcome outcome = sampler(scenarios[s], derive_seed(seed, p));
                for (std::size_t k = 0; k < n_pay; ++k) {
                    const double v = payoffs[k](outcome);
                    if (!std::isfinite(v))
                        throw std::domain_error("sup_expectation: non-finite payoff at path " + std::to_string(p) +
                                                " (scenario " + std::to_string(s) + ", payoff " +
                                                std::to_string(k) + ")");
                    samples[k * n_paths + p] = v;
                }
            },
            jobs);
        for (std::size_t k = 0; k < n_pay; ++k) {
            std::copy_n(samples.begin() + static_cast<std::ptrdiff_t>(k * n_paths), n_paths, buf.begin());
            out[k].per_scenario[s] = estimate_mean(buf);
        }
    }

    for (auto& est : out) {
        est.argmax = 0;
        for (std::size_t s = 1; s < n_scen; ++s)
            if (est.per_scenario[s].mean > est.per_scenario[est.argmax].mean) est.argmax = s;
        est.value = est.per_scenario[est.argmax].mean;
        est.std_error = est.per_scenario[est.argmax].std_error;
        est.argmax_scenario = scenarios[est.argmax];
    }
    return out;
}

template <class Outcome>
SublinearEstimate sup_expectation(const Payoff<Outcome>& payoff, const Sampler<Outcome>& sampler,
                                  const std::vector<ScenarioPath>& scenarios, std::size_t n_paths,
                                  std::uint64_t seed, int jobs = default_jobs())
{
    return sup_expectation<Outcome>(std::vector<Payoff<Outcome>>{payoff}, sampler, scenarios, n_paths, seed,
                                    jobs)
        .front();
}

/// -E^[-phi]: the inf over scenarios, reported with the minimizing scenario.
template <class Outcome>
SublinearEstimate lower_expectation(const Payoff<Outcome>& payoff, const Sampler<Outcome>& sampler,
                                    const std::vector<ScenarioPath>& scenarios, std::size_t n_paths,
                                    std::uint64_t seed, int jobs = default_jobs())
{
    auto est = sup_expectation<Outcome>([&payoff](const Outcome& o) { return -payoff(o); }, sampler, scenarios,
                                        n_paths, seed, jobs);
    est.value = -est.value;
    for (auto& m : est.per_scenario) m.mean = -m.mean;
    return est;
}

/// Scalar G-normal sampler: X = sum_j sqrt(theta_j dt_j) Z_j over the
/// scenario's slices (variance = integral of theta).
inline double sample_gnormal(const ScenarioPath& scenario, std::uint64_t path_seed)
{
    NormalStream z(path_seed);
    const auto& g = scenario.grid();
    const auto& v = scenario.values();
    double x = 0.0;
    for (std::size_t j = 0; j < v.size(); ++j) x += std::sqrt(v[j] * (g[j + 1] - g[j])) * z();
    return x;
}

struct CapacityReport {
    bool pass = false;
    double max_frequency = 0.0;  // sup over scenarios of P(xi >= eps)
    double bound = 0.0;          // E^[xi] / eps
    double combined_se = 0.0;
    double margin = 0.0;         // bound + 3 SE - max_frequency
    std::size_t worst_scenario = 0;
};

/// Upper-probability Chebyshev check c(xi >= eps) <= E^[xi] / eps using
/// per-scenario samples of a nonnegative variable.
inline CapacityReport chebyshev_capacity_check(const std::vector<std::vector<double>>& samples_per_scenario,
                                               double eps, double se_multiplier = 3.0)
{
    if (!(eps > 0.0)) throw std::invalid_argument("chebyshev_capacity_check: eps must be positive");
    if (samples_per_scenario.empty()) throw std::invalid_argument("chebyshev_capacity_check: no scenarios");
    CapacityReport rep;
    MeanEstimate best_mean;
    bool first = true;
    double freq_se = 0.0;
    std::vector<double> ind;
    for (std::size_t s = 0; s < samples_per_scenario.size(); ++s) {
        const auto& xs = samples_per_scenario[s];
        if (xs.empty()) throw std::invalid_argument("chebyshev_capacity_check: empty scenario sample");
        ind.assign(xs.size(), 0.0);
        for (std::size_t i = 0; i < xs.size(); ++i) {
            if (xs[i] < 0.0) throw std::invalid_argument("chebyshev_capacity_check: negative sample");
            ind[i] = xs[i] >= eps ? 1.0 : 0.0;
        }
        const auto m = estimate_mean(xs);
        const auto f = estimate_mean(ind);
        if (first || m.mean > best_mean.mean) best_mean = m;
        if (first || f.mean > rep.max_frequency) {
            rep.max_frequency = f.mean;
            freq_se = f.std_error;
            rep.worst_scenario = s;
        }
        first = false;
    }
    rep.bound = best_mean.mean / eps;
    rep.combined_se = std::sqrt(best_mean.std_error * best_mean.std_error / (eps * eps) + freq_se * freq_se);
    rep.margin = rep.bound + se_multiplier * rep.combined_se - rep.max_frequency;
    rep.pass = rep.margin >= 0.0;
    return rep;
}

}  // namespace gfield
