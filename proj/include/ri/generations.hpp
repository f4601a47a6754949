#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "analysis.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "point_set.hpp"
#include "potential.hpp"
#include "relations.hpp"
#include "rng.hpp"
#include "soup.hpp"

namespace ri {

inline constexpr int kMaxGenerations = 6;

struct GenerationOptions
{
    std::int64_t escapeRadius = 32;
    /// Keep only V-set points within this l1 radius of 0; 0 keeps all.
    std::int64_t windowRadius = 0;
    /// Largest V-set a generation may be sampled on.
    std::size_t sizeLimit = kMaxEquilibriumSize;
    /// Solve for cap(V_k) after each generation.
    bool capacities = false;
    unsigned threads = 1;
};

/*!
 * Generations built from independent soups sigma_0, sigma_1, ...:
 * generation 0 is sigma_0 on {0}, generation k + 1 the trajectories of
 * sigma_{k+1} on V_k that avoid V_{k-1}, with V_{-1} = {0}, V_{-2} empty
 * and V_k the union of V_{k-1} with the recorded traces of generation k.
 */
struct GenerationStack
{
    int d = 0;
    double u = 0.0;
    std::int64_t escapeRadius = 0;
    std::int64_t windowRadius = 0;
    std::vector<Soup> generations;
    /// Trajectories of sigma_{k} meeting V_{k-2} (discarded by thinning).
    std::vector<std::uint64_t> discarded;
    /// vSets[k] = V_k as sorted points.
    std::vector<std::vector<Point>> vSets;
    /// baseCaps[k] = cap(V_{k-1}), the base of generation k, when requested.
    std::vector<double> baseCaps;
    std::vector<std::uint64_t> seeds;
    bool complete = true;
    std::string failure;
    double returnBound = 0.0;

    int depth() const { return static_cast<int>(generations.size()) - 1; }

    /// V_k for k >= -2.
    std::vector<Point> vSet(int k) const
    {
        if (k == -2)
            return {};
        if (k == -1)
            return {Point::origin(d)};
        return vSets.at(static_cast<std::size_t>(k));
    }

    /// x lies on a recorded trace of generations 0..k (windowed).
    bool covered(Point const& x, int k) const
    {
        if (generations.empty() || generations.front().empty())
            return false;
        auto const& v = vSets.at(static_cast<std::size_t>(
            std::min(k, depth())));
        return std::binary_search(v.begin(), v.end(), x);
    }
};

namespace detail {

inline std::vector<Point> unionWithTraces(Lattice const& lat,
                                          std::vector<Point> base,
                                          Soup const& s,
                                          Ball const& keep)
{
    PointSet seen = toPointSet(lat, base);
    for (auto const& t : s.trajectories)
    {
        forEachPathKey(*t, [&](Lattice::Key k) {
            if (seen.contains(k))
                return;
            Point const p = lat.unpack(k);
            if (!keep.contains(p))
                return;
            seen.insert(k);
            base.push_back(p);
        });
    }
    std::sort(base.begin(), base.end());
    return base;
}

inline Ball keepBall(int d, GenerationOptions const& opt)
{
    std::int64_t const r = opt.windowRadius > 0
                               ? std::min(opt.windowRadius, opt.escapeRadius)
                               : opt.escapeRadius;
    return Ball{Point::origin(d), r};
}

}  // namespace detail

/*!
 * Grow generations 0..maxK. Stops early with complete = false when a V-set
 * exceeds the size limit; generations built so far are kept.
 */
inline GenerationStack growGenerations(GreenOracle const& green,
                                       double u,
                                       int maxK,
                                       std::uint64_t seed,
                                       GenerationOptions const& opt)
{
    if (maxK < 0 || maxK > kMaxGenerations)
    {
        throw std::invalid_argument("growGenerations: maxK must be in 0..6");
    }
    if (!(u > 0.0))
        throw std::invalid_argument("growGenerations: need u > 0");
    int const d = green.dim();
    Lattice const lat(d);
    Ball const keep = detail::keepBall(d, opt);
    GenerationStack st;
    st.d = d;
    st.u = u;
    st.escapeRadius = opt.escapeRadius;
    st.windowRadius = opt.windowRadius;

    SoupOptions so;
    so.threads = opt.threads;

    std::vector<Point> previous;  // V_{k-1}
    std::vector<Point> current{Point::origin(d)};  // V_k
    for (int k = 0; k <= maxK; ++k)
    {
        // Sample generation k on V_{k-1} (here `current`), avoiding V_{k-2}.
        if (current.size() > opt.sizeLimit)
        {
            st.complete = false;
            st.failure = "V_" + std::to_string(k - 1) + " has "
                         + std::to_string(current.size())
                         + " points, above the size limit "
                         + std::to_string(opt.sizeLimit);
            break;
        }
        auto const gseed = deriveSeed(seed, StreamDomain::generation,
                                      static_cast<std::uint64_t>(k));
        st.seeds.push_back(gseed);
        Soup gen;
        std::uint64_t dropped = 0;
        bool const nothing_new = (k > 0 && current.size() == previous.size());
        if (nothing_new)
        {
            gen.d = d;
            gen.base = SoupBase::makePoints(current);
            gen.uLow = 0.0;
            gen.uHigh = u;
            gen.seed = gseed;
            gen.escapeRadius = opt.escapeRadius;
            gen.returnBound = 0.0;
        }
        else
        {
            gen = sampleSoup(green,
                             SoupBase::makePoints(current),
                             0.0,
                             u,
                             opt.escapeRadius,
                             gseed,
                             so);
            if (!previous.empty())
            {
                PointSet const avoid = toPointSet(lat, previous);
                std::vector<TrajectoryPtr> kept;
                for (auto const& t : gen.trajectories)
                {
                    if (t->hits(avoid))
                        ++dropped;
                    else
                        kept.push_back(t);
                }
                gen.trajectories = std::move(kept);
            }
            st.returnBound = std::max(st.returnBound, gen.truncationBound());
        }
        if (opt.capacities)
        {
            double cap = gen.capK;
            if (nothing_new)
                cap = st.baseCaps.back();
            else if (std::isnan(cap))
                cap = capacity(current, green);
            st.baseCaps.push_back(cap);
        }
        std::vector<Point> next
            = detail::unionWithTraces(lat, current, gen, keep);
        st.generations.push_back(std::move(gen));
        st.discarded.push_back(dropped);
        st.vSets.push_back(next);
        previous = std::move(current);
        current = std::move(next);
    }
    return st;
}

struct ReachEstimate
{
    int m = 0;
    Point x;
    ProbabilityEstimate probability;
    /// Stacks stopped by the size limit (counted as failures to reach).
    std::uint64_t incomplete = 0;
    double returnBound = 0.0;
};

enum class ReachMethod
{
    /// Grow generations 0..m-1 and test x on V_{m-1}.
    stack,
    /// Grow generations 0..m-2; sample generation m-1 only where it
    /// covers x, as a soup on {x} thinned to the generation's class.
    target,
};

constexpr std::string_view to_string(ReachMethod m)
{
    return m == ReachMethod::stack ? "stack" : "target";
}

struct ReachOptions
{
    GenerationOptions generation;
    ReachMethod method = ReachMethod::target;
};

namespace detail {

/// Index offset separating target-route soups from generation soups.
inline constexpr std::uint64_t kTargetStreamOffset = 1u << 16;

inline bool reachOnce(GreenOracle const& green,
                      int m,
                      Point const& x,
                      double u,
                      std::uint64_t rs,
                      ReachOptions const& opt,
                      bool& incomplete,
                      double& bound)
{
    int const d = green.dim();
    Lattice const lat(d);
    if (opt.method == ReachMethod::stack)
    {
        auto const st = growGenerations(green, u, m - 1, rs, opt.generation);
        bound = st.returnBound;
        incomplete = !st.complete;
        return st.complete && st.covered(x, m - 1);
    }
    if (opt.generation.windowRadius > 0
        && l1Norm(x) > opt.generation.windowRadius)
        return false;

    std::vector<Point> hit{Point::origin(d)};  // V_{m-2}
    std::vector<Point> avoid;  // V_{m-3}
    if (m >= 2)
    {
        auto const st = growGenerations(green, u, m - 2, rs, opt.generation);
        bound = st.returnBound;
        if (!st.complete)
        {
            incomplete = true;
            return false;
        }
        if (st.covered(x, m - 2))
            return true;
        hit = st.vSet(m - 2);
        avoid = st.vSet(m - 3);
        if (hit.size() == avoid.size())
            return false;
    }
    SoupOptions so;
    so.buildTraces = false;
    PointSet const hit_keys = toPointSet(lat, hit);
    PointSet const avoid_keys = toPointSet(lat, avoid);
    bool found = false;
    auto const meta = streamSoup(
        green,
        SoupBase::makePoints({x}),
        0.0,
        u,
        opt.generation.escapeRadius,
        deriveSeed(rs,
                   StreamDomain::generation,
                   kTargetStreamOffset + static_cast<std::uint64_t>(m - 1)),
        so,
        [&](TrajectoryPtr const& t) {
            if (!found && t->hits(hit_keys)
                && (avoid_keys.empty() || !t->hits(avoid_keys)))
                found = true;
        });
    bound = std::max(bound, meta.returnBound);
    return found;
}

}  // namespace detail

/*!
 * Frequency with which x lies on the traces of generations 0..m-1, i.e.
 * 0 and x are joined by a chain of at most m trajectories grown from 0.
 */
inline ReachEstimate reachProbability(GreenOracle const& green,
                                      int m,
                                      Point const& x,
                                      double u,
                                      std::uint64_t replicas,
                                      std::uint64_t seed,
                                      ReachOptions const& opt = {})
{
    if (m < 1 || m > 4)
        throw std::invalid_argument("reachProbability: m must be in 1..4");
    if (!(u > 0.0))
        throw std::invalid_argument("reachProbability: need u > 0");
    detail::requireReplicas(replicas);
    std::vector<char> success(replicas, 0);
    std::vector<char> incomplete(replicas, 0);
    std::vector<double> bounds(replicas, 0.0);
    ReachOptions inner = opt;
    inner.generation.threads = 1;
    parallelFor(replicas, opt.generation.threads, [&](std::size_t r) {
        bool inc = false;
        double b = 0.0;
        success[r] = detail::reachOnce(green,
                                       m,
                                       x,
                                       u,
                                       deriveSeed(seed, StreamDomain::replica, r),
                                       inner,
                                       inc,
                                       b)
                         ? 1
                         : 0;
        incomplete[r] = inc ? 1 : 0;
        bounds[r] = b;
    });
    ReachEstimate est;
    est.m = m;
    est.x = x;
    std::uint64_t s = 0;
    for (std::size_t r = 0; r < replicas; ++r)
    {
        s += static_cast<std::uint64_t>(success[r]);
        est.incomplete += static_cast<std::uint64_t>(incomplete[r]);
        est.returnBound = std::max(est.returnBound, bounds[r]);
    }
    est.probability = estimateProbability(s, replicas);
    return est;
}

//---------------------------------------------------------------------------//
// Conditional counts
//---------------------------------------------------------------------------//

/// Count of generation k against u (cap(V_{k-1}) - cap(V_{k-2})).
struct ConditionalCount
{
    int k = 0;
    std::uint64_t count = 0;
    double mean = 0.0;
    std::uint64_t discarded = 0;
    /// u cap(V_{k-2}): the discarded class meets V_{k-2}, a subset of V_{k-1}.
    double discardedMean = 0.0;
};

/// Per-generation counts and conditional means of a stack grown with
/// capacities; cap(V_{-2}) = 0.
inline std::vector<ConditionalCount>
conditionalCounts(GenerationStack const& st)
{
    if (st.baseCaps.size() != st.generations.size())
    {
        throw std::invalid_argument(
            "conditionalCounts: stack grown without capacities");
    }
    std::vector<ConditionalCount> out;
    for (std::size_t g = 0; g < st.generations.size(); ++g)
    {
        ConditionalCount c;
        c.k = static_cast<int>(g);
        c.count = st.generations[g].size();
        c.discarded = st.discarded[g];
        double const lower = g == 0 ? 0.0 : st.baseCaps[g - 1];
        c.mean = st.u * (st.baseCaps[g] - lower);
        c.discardedMean = st.u * lower;
        out.push_back(c);
    }
    return out;
}

}  // namespace ri
