#pragma once

#include <cstdint>
#include <limits>
#include <random>

namespace gfield {

// splitmix64 finalizer; used both as a stream generator and to derive
// independent child seeds from (master, index...) tuples.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z += 0x9e3779b97f4a7c15ULL;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a) noexcept
{
    return mix64(mix64(master) ^ (a * 0xd1342543de82ef95ULL + 0x2545f4914f6cdd1dULL));
}

constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t a, std::uint64_t b) noexcept
{
    return derive_seed(derive_seed(master, a), b);
}

/// Counter-style generator with 64 bits of state. Cheap to construct, so
/// every Monte Carlo path gets its own stream keyed by a derived seed.
class PathRng {
public:
    using result_type = std::uint64_t;

    explicit PathRng(std::uint64_t seed) noexcept : state_(seed) {}

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept
    {
        state_ += 0x9e3779b97f4a7c15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::uint64_t state_;
};

/// Standard normal stream bound to one path seed.
class NormalStream {
public:
    explicit NormalStream(std::uint64_t seed) : rng_(seed) {}

    double operator()() { return dist_(rng_); }

    double uniform() { return std::uniform_real_distribution<double>(0.0, 1.0)(rng_); }

    PathRng& engine() noexcept { return rng_; }

private:
    PathRng rng_;
    std::normal_distribution<double> dist_{0.0, 1.0};
};

}  // namespace gfield
