#ifndef RMLHMM_RNG_HPP_INCLUDED
#define RMLHMM_RNG_HPP_INCLUDED

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <string_view>

namespace rmlhmm
{
namespace detail
{
    // Stafford's mix13 finalizer (the SplitMix64 output function).
    constexpr std::uint64_t mix64(std::uint64_t z) noexcept
    {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    constexpr std::uint64_t fnv1a(std::string_view s) noexcept
    {
        std::uint64_t h = 0xcbf29ce484222325ULL;
        for (char c : s)
        {
            h ^= static_cast<unsigned char>(c);
            h *= 0x100000001b3ULL;
        }
        return h;
    }
} // namespace detail

/// Counter-based 64-bit generator: the k-th draw is a pure function of (key, k).
///
/// Streams are derived from a master seed and a purpose label, so trajectory
/// sampling, parameter initialization and Monte-Carlo evaluation never share
/// draws even when they start from the same seed. Satisfies
/// UniformRandomBitGenerator; the distributions below are implemented here
/// rather than taken from <random> so that draws are identical across
/// standard library implementations.
class Rng
{
public:
    using result_type = std::uint64_t;

    explicit constexpr Rng(std::uint64_t key) noexcept : key_(detail::mix64(key ^ 0x6a09e667f3bcc909ULL)) {}

    /// Independent stream for `label` under master seed `seed`.
    static constexpr Rng stream(std::uint64_t seed, std::string_view label) noexcept
    {
        return Rng(detail::mix64(seed) ^ detail::fnv1a(label));
    }

    /// Child stream, e.g. one per Monte-Carlo replicate.
    constexpr Rng substream(std::uint64_t index) const noexcept
    {
        Rng r(key_ ^ detail::mix64(index + 0x9e3779b97f4a7c15ULL));
        return r;
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    constexpr result_type operator()() noexcept
    {
        return detail::mix64(key_ + 0x9e3779b97f4a7c15ULL * ++counter_);
    }

    std::uint64_t counter() const noexcept { return counter_; }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) noexcept { return lo + (hi - lo) * uniform(); }

    /// Standard normal via Box-Muller (one value per call; the pair's sine half is dropped).
    double normal() noexcept
    {
        double u1 = 1.0 - uniform(); // (0, 1]
        double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * std::numbers::pi * u2);
    }

    /// Index drawn from the discrete law `probs` (need not be exactly normalized).
    template <typename Probs>
    std::size_t categorical(const Probs& probs) noexcept
    {
        double total = 0.0;
        for (std::size_t i = 0; i < static_cast<std::size_t>(probs.size()); ++i)
            total += probs[i];
        double u   = uniform() * total;
        double acc = 0.0;
        std::size_t last = static_cast<std::size_t>(probs.size()) - 1;
        for (std::size_t i = 0; i < last; ++i)
        {
            acc += probs[i];
            if (u < acc)
                return i;
        }
        return last;
    }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

} // namespace rmlhmm

#endif // RMLHMM_RNG_HPP_INCLUDED
