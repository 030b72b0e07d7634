#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>

#include <boost/random/mersenne_twister.hpp>
#include <boost/random/normal_distribution.hpp>

namespace npmc {

using Rng = boost::random::mt19937_64;

namespace detail {

inline constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

} // namespace detail

/// Derives an independent stream seed from a parent seed and a path of
/// stream indices (run, iteration, sample, ...). Each level is mixed through
/// splitmix64 so that sibling and nested streams do not collide in practice.
inline constexpr std::uint64_t derive_seed(std::uint64_t parent,
                                           std::initializer_list<std::uint64_t> path) noexcept
{
    std::uint64_t s = detail::splitmix64(parent);
    for (std::uint64_t p : path) {
        s = detail::splitmix64(s ^ detail::splitmix64(p + 0x632be59bd9b4e019ULL));
    }
    return s;
}

inline Rng make_rng(std::uint64_t seed) { return Rng{seed}; }

/// Standard normal draw (ziggurat; the distribution object is stateless).
inline double standard_normal(Rng& rng)
{
    thread_local boost::random::normal_distribution<double> dist{0.0, 1.0};
    return dist(rng);
}

inline double uniform01(Rng& rng)
{
    return std::uniform_real_distribution<double>{0.0, 1.0}(rng);
}

} // namespace npmc
