#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <string_view>

namespace ri {

//---------------------------------------------------------------------------//
// Stateless mixing primitives.
//---------------------------------------------------------------------------//

/// SplitMix64 finalizer (Stafford variant 13).
constexpr std::uint64_t mix64(std::uint64_t z) noexcept
{
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}

/// 64-bit FNV-1a over the bytes of \p s.
constexpr std::uint64_t fnv1a64(std::string_view s) noexcept
{
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (unsigned char ch : s)
    {
        h ^= ch;
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline constexpr std::uint64_t kGolden = 0x9E3779B97F4A7C15ULL;

//---------------------------------------------------------------------------//
/*!
 * Reproducible random stream: xoshiro256** with portable distribution
 * sampling.
 *
 * None of the std:: distributions are used because their output is
 * implementation-defined; every variate here is a fixed function of the
 * 64-bit output sequence.
 */
class Stream
{
  public:
    using result_type = std::uint64_t;

    /// Expand a 64-bit key into the 256-bit state with SplitMix64.
    explicit Stream(std::uint64_t key = 0) noexcept
    {
        std::uint64_t x = key;
        for (auto& s : state_)
        {
            x += kGolden;
            s = mix64(x);
        }
    }

    static constexpr result_type min() { return 0; }
    static constexpr result_type max()
    {
        return std::numeric_limits<result_type>::max();
    }

    result_type operator()() noexcept { return next(); }

    std::uint64_t next() noexcept
    {
        auto& s = state_;
        std::uint64_t const result = rotl(s[1] * 5, 7) * 9;
        std::uint64_t const t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept
    {
        return static_cast<double>(next() >> 11) * 0x1.0p-53;
    }

    /// Uniform on (0, 1].
    double uniformPositive() noexcept { return 1.0 - uniform(); }

    double uniform(double lo, double hi) noexcept
    {
        return lo + (hi - lo) * uniform();
    }

    /// Unbiased integer in [0, n) (Lemire's multiply-and-reject).
    std::uint32_t below(std::uint32_t n) noexcept
    {
        std::uint64_t m = static_cast<std::uint64_t>(
                              static_cast<std::uint32_t>(next() >> 32))
                          * n;
        auto low = static_cast<std::uint32_t>(m);
        if (low < n)
        {
            std::uint32_t const threshold = (0u - n) % n;
            while (low < threshold)
            {
                m = static_cast<std::uint64_t>(
                        static_cast<std::uint32_t>(next() >> 32))
                    * n;
                low = static_cast<std::uint32_t>(m);
            }
        }
        return static_cast<std::uint32_t>(m >> 32);
    }

    double exponential() noexcept { return -std::log(uniformPositive()); }

    double normal() noexcept
    {
        // Marsaglia polar method; the spare variate is discarded so the
        // stream position depends only on the call count.
        for (;;)
        {
            double const a = 2.0 * uniform() - 1.0;
            double const b = 2.0 * uniform() - 1.0;
            double const r2 = a * a + b * b;
            if (r2 > 0.0 && r2 < 1.0)
            {
                return a * std::sqrt(-2.0 * std::log(r2) / r2);
            }
        }
    }

    /// Poisson variate: inversion for small means, PTRS (Hormann 1993)
    /// transformed rejection otherwise.
    std::uint64_t poisson(double mean);

  private:
    static constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept
    {
        return (x << k) | (x >> (64 - k));
    }

    std::array<std::uint64_t, 4> state_{};
};

inline std::uint64_t Stream::poisson(double mean)
{
    if (!(mean >= 0.0) || !std::isfinite(mean))
    {
        throw std::invalid_argument("poisson: mean must be finite and >= 0");
    }
    if (mean == 0.0)
    {
        return 0;
    }
    if (mean < 12.0)
    {
        // Sequential inversion of the CDF.
        double const u = uniform();
        double p = std::exp(-mean);
        double cdf = p;
        std::uint64_t k = 0;
        while (u >= cdf)
        {
            ++k;
            p *= mean / static_cast<double>(k);
            double const next_cdf = cdf + p;
            if (next_cdf == cdf)
            {
                break;
            }
            cdf = next_cdf;
        }
        return k;
    }

    double const slam = std::sqrt(mean);
    double const loglam = std::log(mean);
    double const b = 0.931 + 2.53 * slam;
    double const a = -0.059 + 0.02483 * b;
    double const inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
    double const vr = 0.9277 - 3.6224 / (b - 2);
    for (;;)
    {
        double const u = uniform() - 0.5;
        double const v = uniform();
        double const us = 0.5 - std::fabs(u);
        double const k = std::floor((2 * a / us + b) * u + mean + 0.43);
        if (us >= 0.07 && v <= vr)
        {
            return static_cast<std::uint64_t>(k);
        }
        if (k < 0 || (us < 0.013 && v > us))
        {
            continue;
        }
        double const lhs = std::log(v * inv_alpha / (a / (us * us) + b));
        double const rhs = -mean + k * loglam - std::lgamma(k + 1);
        if (lhs <= rhs)
        {
            return static_cast<std::uint64_t>(k);
        }
    }
}

//---------------------------------------------------------------------------//
// Keyed stream derivation.
//---------------------------------------------------------------------------//

/// Domains a stream may be derived for.
enum class StreamDomain
{
    soup,
    walk_family,
    replica,
    generation,
};

constexpr std::string_view to_string(StreamDomain tag)
{
    switch (tag)
    {
        case StreamDomain::soup:
            return "soup";
        case StreamDomain::walk_family:
            return "walk-family";
        case StreamDomain::replica:
            return "replica";
        case StreamDomain::generation:
            return "generation";
    }
    return "?";
}

inline StreamDomain parseStreamDomain(std::string_view tag)
{
    for (auto t : {StreamDomain::soup,
                   StreamDomain::walk_family,
                   StreamDomain::replica,
                   StreamDomain::generation})
    {
        if (to_string(t) == tag)
        {
            return t;
        }
    }
    throw std::invalid_argument("unregistered stream domain tag '"
                                + std::string(tag) + "'");
}

/*!
 * 64-bit key of the stream for (master seed, domain tag, index).
 *
 *   k0 = mix64(seed + G)
 *   k1 = mix64(k0 ^ fnv1a64(tag))
 *   key = mix64(k1 ^ mix64(index + G))
 *
 * with G = 0x9E3779B97F4A7C15 and arithmetic modulo 2^64.
 */
constexpr std::uint64_t
streamKey(std::uint64_t seed, StreamDomain tag, std::uint64_t index) noexcept
{
    std::uint64_t const k0 = mix64(seed + kGolden);
    std::uint64_t const k1 = mix64(k0 ^ fnv1a64(to_string(tag)));
    return mix64(k1 ^ mix64(index + kGolden));
}

inline Stream
deriveStream(std::uint64_t seed, StreamDomain tag, std::uint64_t index) noexcept
{
    return Stream{streamKey(seed, tag, index)};
}

inline Stream
deriveStream(std::uint64_t seed, std::string_view tag, std::uint64_t index)
{
    return deriveStream(seed, parseStreamDomain(tag), index);
}

/// Seed for a nested experiment (e.g. replica r of a run).
inline std::uint64_t
deriveSeed(std::uint64_t seed, StreamDomain tag, std::uint64_t index) noexcept
{
    return streamKey(seed, tag, index);
}

}  // namespace ri
