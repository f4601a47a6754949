#pragma once

#include <algorithm>
#include <cstdint>
#include <deque>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include "analysis.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "point_set.hpp"
#include "potential.hpp"
#include "rng.hpp"
#include "soup.hpp"
#include "walk.hpp"

namespace ri {

namespace detail {

/// Key of p, or nullopt when p lies outside the packing range.
inline std::optional<Lattice::Key> tryPack(Lattice const& lat, Point const& p)
{
    if (p.dim != lat.dim())
        throw std::invalid_argument("point " + to_string(p)
                                    + " has wrong dimension");
    for (int i = 0; i < p.dim; ++i)
        if (std::abs(p.c[i]) > lat.maxAbsCoord())
            return std::nullopt;
    return lat.pack(p);
}

template<class F>
void forEachPathKey(Trajectory const& t, F&& f)
{
    for (auto k : t.forward.points)
        f(k);
    for (auto k : t.backward.points)
        f(k);
}

inline bool covers(Trajectory const& t, Lattice::Key k)
{
    if (!t.trace.empty())
        return t.trace.contains(k);
    auto const eq = [k](Lattice::Key q) { return q == k; };
    return std::any_of(t.forward.points.begin(), t.forward.points.end(), eq)
           || std::any_of(
               t.backward.points.begin(), t.backward.points.end(), eq);
}

}  // namespace detail

//---------------------------------------------------------------------------//
/*!
 * Incidence of lattice points and soup trajectories, plus the graph on
 * trajectories with an edge when two traces intersect.
 */
class IncidenceGraph
{
  public:
    using Index = std::uint32_t;

    IncidenceGraph() = default;

    IncidenceGraph(int d, std::vector<TrajectoryPtr> trajectories)
        : lat_{d}, traj_{std::move(trajectories)}
    {
        if (traj_.size() > std::numeric_limits<Index>::max())
            throw std::length_error("IncidenceGraph: too many trajectories");
        for (std::size_t i = 0; i < traj_.size(); ++i)
        {
            auto const idx = static_cast<Index>(i);
            auto add = [&](Lattice::Key k) {
                auto& list = index_[k];
                if (list.empty() || list.back() != idx)
                    list.push_back(idx);
            };
            if (!traj_[i]->trace.empty())
            {
                traj_[i]->trace.forEach(add);
            }
            else
            {
                PointSet seen;
                detail::forEachPathKey(*traj_[i], [&](Lattice::Key k) {
                    if (seen.insert(k))
                        add(k);
                });
            }
        }
        adj_.assign(traj_.size(), {});
        index_.forEach([&](Lattice::Key, std::vector<Index> const& list) {
            for (std::size_t a = 0; a < list.size(); ++a)
            {
                for (std::size_t b = a + 1; b < list.size(); ++b)
                {
                    adj_[list[a]].push_back(list[b]);
                    adj_[list[b]].push_back(list[a]);
                }
            }
        });
        for (auto& n : adj_)
        {
            std::sort(n.begin(), n.end());
            n.erase(std::unique(n.begin(), n.end()), n.end());
            edges_ += n.size();
        }
        edges_ /= 2;
    }

    int dim() const { return lat_.dim(); }
    Lattice const& lattice() const { return lat_; }
    std::size_t size() const { return traj_.size(); }
    std::size_t edgeCount() const { return edges_; }
    /// Number of distinct points on the union of traces.
    std::size_t pointCount() const { return index_.size(); }
    TrajectoryPtr const& trajectory(Index i) const { return traj_.at(i); }

    /// Trajectories whose trace contains the point, in increasing order.
    std::span<Index const> covering(Lattice::Key k) const
    {
        auto const* list = index_.find(k);
        if (!list)
            return {};
        return *list;
    }

    std::span<Index const> covering(Point const& x) const
    {
        auto const k = detail::tryPack(lat_, x);
        return k ? covering(*k) : std::span<Index const>{};
    }

    std::span<Index const> neighbors(Index i) const { return adj_.at(i); }

    bool adjacent(Index i, Index j) const
    {
        auto const& n = adj_.at(i);
        return std::binary_search(n.begin(), n.end(), j);
    }

    template<class F>
    void forEachPoint(F&& f) const
    {
        index_.forEach(
            [&](Lattice::Key k, std::vector<Index> const&) { f(k); });
    }

  private:
    Lattice lat_{kMinDim};
    std::vector<TrajectoryPtr> traj_;
    PointMap<std::vector<Index>> index_;
    std::vector<std::vector<Index>> adj_;
    std::size_t edges_ = 0;
};

inline IncidenceGraph buildIncidence(Soup const& s)
{
    return IncidenceGraph(s.d, s.trajectories);
}

/*!
 * BFS levels from the trajectories covering x: level 1 for those, level
 * k + 1 for unvisited neighbors of level k; 0 marks unreachable.
 */
inline std::vector<int> chainLevels(IncidenceGraph const& g, Point const& x)
{
    std::vector<int> level(g.size(), 0);
    std::deque<IncidenceGraph::Index> queue;
    for (auto i : g.covering(x))
    {
        level[i] = 1;
        queue.push_back(i);
    }
    while (!queue.empty())
    {
        auto const i = queue.front();
        queue.pop_front();
        for (auto j : g.neighbors(i))
        {
            if (level[j] == 0)
            {
                level[j] = level[i] + 1;
                queue.push_back(j);
            }
        }
    }
    return level;
}

/// Chain distance given BFS levels from x; nullopt when unreachable.
inline std::optional<int> chainDistanceFromLevels(IncidenceGraph const& g,
                                                  std::span<int const> level,
                                                  Point const& y)
{
    int best = 0;
    for (auto j : g.covering(y))
        if (level[j] > 0 && (best == 0 || level[j] < best))
            best = level[j];
    if (best == 0)
        return std::nullopt;
    return best;
}

/*!
 * Fewest trajectories in an intersecting chain whose first trace contains
 * x and whose last contains y; nullopt when no chain exists in the soup.
 */
inline std::optional<int>
chainDistance(IncidenceGraph const& g, Point const& x, Point const& y)
{
    auto const target = g.covering(y);
    if (target.empty() || g.covering(x).empty())
        return std::nullopt;
    std::vector<char> is_target(g.size(), 0);
    for (auto j : target)
        is_target[j] = 1;
    std::vector<int> level(g.size(), 0);
    std::deque<IncidenceGraph::Index> queue;
    for (auto i : g.covering(x))
    {
        if (is_target[i])
            return 1;
        level[i] = 1;
        queue.push_back(i);
    }
    while (!queue.empty())
    {
        auto const i = queue.front();
        queue.pop_front();
        for (auto j : g.neighbors(i))
        {
            if (level[j] != 0)
                continue;
            level[j] = level[i] + 1;
            if (is_target[j])
                return level[j];
            queue.push_back(j);
        }
    }
    return std::nullopt;
}

/// Pair counts over occupied window points by chain length.
struct PairConnectivity
{
    std::uint64_t occupied = 0;
    std::uint64_t pairs = 0;
    /// within[m - 1]: unordered pairs at chain distance <= m.
    std::vector<std::uint64_t> within;

    double fraction(int m) const
    {
        return pairs == 0 ? std::nan("")
                          : static_cast<double>(within.at(m - 1))
                                / static_cast<double>(pairs);
    }
};

/// Chain distances between all occupied pairs of \p window, up to maxChain.
inline PairConnectivity pairConnectivity(IncidenceGraph const& g,
                                         std::span<Point const> window,
                                         int maxChain)
{
    if (maxChain < 1)
        throw std::invalid_argument("pairConnectivity: maxChain < 1");
    PairConnectivity out;
    out.within.assign(static_cast<std::size_t>(maxChain), 0);
    std::vector<Point> occupied;
    for (auto const& x : window)
        if (!g.covering(x).empty())
            occupied.push_back(x);
    out.occupied = occupied.size();
    for (std::size_t a = 0; a < occupied.size(); ++a)
    {
        auto const level = chainLevels(g, occupied[a]);
        for (std::size_t b = a + 1; b < occupied.size(); ++b)
        {
            ++out.pairs;
            auto const dist = chainDistanceFromLevels(g, level, occupied[b]);
            if (!dist)
                continue;
            for (int m = *dist; m <= maxChain; ++m)
                ++out.within[static_cast<std::size_t>(m - 1)];
        }
    }
    return out;
}

//---------------------------------------------------------------------------//
// The relations M, L and R
//---------------------------------------------------------------------------//

/// Some trajectory with label in the slice covers both x and y.
inline bool holdsM(Soup const& s,
                   double t1,
                   double t2,
                   Point const& x,
                   Point const& y)
{
    Soup const sub = slice(s, t1, t2);
    Lattice const lat(s.d);
    auto const kx = detail::tryPack(lat, x);
    auto const ky = detail::tryPack(lat, y);
    if (!kx || !ky)
        return false;
    return std::any_of(
        sub.trajectories.begin(), sub.trajectories.end(), [&](auto const& t) {
            return detail::covers(*t, *kx) && detail::covers(*t, *ky);
        });
}

/*!
 * Independent forward walks w_x, one per vertex, each on the walk-family
 * stream indexed by the packed vertex key and stopped at the escape ball.
 */
class VertexWalkFamily
{
  public:
    struct Entry
    {
        WalkPath walk;
        PointSet trace;
    };

    VertexWalkFamily(int d, std::uint64_t seed, std::int64_t escapeRadius)
        : lat_{d}, seed_{seed}, escape_{Point::origin(d), escapeRadius}
    {
        lat_.requireRadius(escapeRadius);
    }

    std::uint64_t seed() const { return seed_; }
    Ball const& escapeBall() const { return escape_; }
    Lattice const& lattice() const { return lat_; }

    /// Draw w_x if not yet present. Not safe for concurrent calls.
    Entry const& materialize(Point const& x)
    {
        auto const k = lat_.pack(x);
        auto it = walks_.find(k);
        if (it != walks_.end())
            return it->second;
        Stream rng = deriveStream(seed_, StreamDomain::walk_family, k);
        Entry e;
        e.walk = simulateForward(lat_, x, escape_, rng);
        e.trace = PointSet(e.walk.points.begin(), e.walk.points.end());
        return walks_.emplace(k, std::move(e)).first->second;
    }

    bool contains(Point const& x) const
    {
        return walks_.count(lat_.pack(x)) != 0;
    }

    Entry const& at(Point const& x) const
    {
        auto it = walks_.find(lat_.pack(x));
        if (it == walks_.end())
        {
            throw std::out_of_range("VertexWalkFamily: w_" + to_string(x)
                                    + " not materialized");
        }
        return it->second;
    }

  private:
    Lattice lat_;
    std::uint64_t seed_;
    Ball escape_;
    std::unordered_map<Lattice::Key, Entry> walks_;
};

/// y lies on the range of w_x.
inline bool holdsL(VertexWalkFamily const& f, Point const& x, Point const& y)
{
    auto const ky = detail::tryPack(f.lattice(), y);
    return ky && f.at(x).trace.contains(*ky);
}

/// x lies on the range of w_y.
inline bool holdsR(VertexWalkFamily const& f, Point const& x, Point const& y)
{
    return holdsL(f, y, x);
}

//---------------------------------------------------------------------------//
// Slab chains and compositions
//---------------------------------------------------------------------------//

inline constexpr std::uint64_t kMinReplicas = 100;

/// Whether a trajectory meets the base of a soup.
class BaseTest
{
  public:
    BaseTest(Lattice const& lat, SoupBase const& base) : base_{base}
    {
        if (base.kind == SoupBase::Kind::points)
            keys_ = toPointSet(lat, base.points);
    }

    bool operator()(Lattice const& lat, Trajectory const& t) const
    {
        if (base_.kind == SoupBase::Kind::points)
            return t.hits(keys_);
        return t.minDistance(lat, base_.ball.center) <= base_.ball.radius;
    }

  private:
    SoupBase base_;
    PointSet keys_;
};

struct SlabChainOptions
{
    std::int64_t escapeRadius = 0;
    unsigned threads = 1;
};

struct SlabChainOutcome
{
    bool linked = false;
    /// Largest per-tail return bound met along the layers.
    double returnBound = 0.0;
};

/*!
 * One draw of the slab chain event: starting from the set \p from, layer i
 * holds the trajectories of the base soup with label in slabs[i] that meet
 * the union of traces of layer i - 1; the event holds when the last layer
 * meets \p to.
 *
 * Layer i is sampled as a soup on the previous union (points outside the
 * escape ball dropped) restricted to trajectories meeting the base, which
 * is the base soup restricted to that class by the Poisson restriction
 * property. Distinct slabs are independent, so conditioning on earlier
 * layers is harmless.
 */
inline SlabChainOutcome
slabChainLinks(GreenOracle const& green,
               std::vector<Point> from,
               PointSet const& to,
               std::span<std::pair<double, double> const> slabs,
               SoupBase const& base,
               std::uint64_t seed,
               SlabChainOptions const& opt)
{
    int const d = green.dim();
    Lattice const lat(d);
    Ball const escape{Point::origin(d), opt.escapeRadius};
    BaseTest const in_base(lat, base);
    SlabChainOutcome out;
    if (slabs.empty())
    {
        for (auto const& p : from)
        {
            auto const k = detail::tryPack(lat, p);
            if (k && to.contains(*k))
            {
                out.linked = true;
                break;
            }
        }
        return out;
    }

    SoupOptions so;
    so.mode = SamplerMode::thinning;
    so.threads = opt.threads;
    so.buildTraces = false;
    for (std::size_t i = 0; i < slabs.size(); ++i)
    {
        std::erase_if(from, [&](Point const& p) { return !escape.contains(p); });
        if (from.empty())
            return out;
        bool const last = (i + 1 == slabs.size());
        PointSet next;
        bool hit_target = false;
        Soup const meta = streamSoup(
            green,
            SoupBase::makePoints(std::move(from)),
            slabs[i].first,
            slabs[i].second,
            opt.escapeRadius,
            deriveSeed(seed, StreamDomain::soup, i),
            so,
            [&](TrajectoryPtr const& t) {
                if (hit_target || !in_base(lat, *t))
                    return;
                if (last)
                {
                    hit_target = t->hits(to);
                    return;
                }
                detail::forEachPathKey(*t,
                                       [&](Lattice::Key k) { next.insert(k); });
            });
        out.returnBound = std::max(out.returnBound, meta.returnBound);
        if (last)
        {
            out.linked = hit_target;
            return out;
        }
        from.clear();
        from.reserve(next.size());
        for (auto k : next.sortedKeys())
            from.push_back(lat.unpack(k));
    }
    return out;
}

struct CompositionEstimate
{
    int n = 0;
    ProbabilityEstimate probability;
    std::vector<std::pair<double, double>> slabs;
    double returnBound = 0.0;
};

struct CompositionOptions
{
    /// Escape radius of walks and soups; 0 picks 8 times the base radius.
    std::int64_t escapeRadius = 0;
    unsigned threads = 1;
};

namespace detail {

inline std::int64_t baseRadius(SoupBase const& base)
{
    if (base.kind == SoupBase::Kind::ball)
        return l1Norm(base.ball.center) + base.ball.radius;
    std::int64_t r = 0;
    for (auto const& p : base.points)
        r = std::max(r, l1Norm(p));
    return r;
}

inline std::int64_t compositionEscape(SoupBase const& base,
                                      CompositionOptions const& opt)
{
    return opt.escapeRadius > 0 ? opt.escapeRadius
                                : 8 * std::max<std::int64_t>(1, baseRadius(base));
}

inline void requireReplicas(std::uint64_t replicas)
{
    if (replicas < kMinReplicas)
    {
        throw std::invalid_argument("need at least 100 replicas for a "
                                    "confidence interval (got "
                                    + std::to_string(replicas) + ")");
    }
}

template<class Draw>
CompositionEstimate runSlabReplicas(std::uint64_t replicas,
                                    std::uint64_t seed,
                                    unsigned threads,
                                    Draw&& draw)
{
    std::vector<SlabChainOutcome> results(replicas);
    parallelFor(replicas, threads, [&](std::size_t r) {
        results[r] = draw(deriveSeed(seed, StreamDomain::replica, r));
    });
    CompositionEstimate est;
    std::uint64_t successes = 0;
    for (auto const& r : results)
    {
        successes += r.linked ? 1 : 0;
        est.returnBound = std::max(est.returnBound, r.returnBound);
    }
    est.probability = estimateProbability(successes, replicas);
    return est;
}

}  // namespace detail

/// The intervals [u(i-1)/n, ui/n] for i = first..last.
inline std::vector<std::pair<double, double>>
slabIntervals(double u, int n, int first, int last)
{
    std::vector<std::pair<double, double>> out;
    for (int i = first; i <= last; ++i)
        out.emplace_back(u * (i - 1) / n, u * i / n);
    return out;
}

/*!
 * Frequency of x C_n y: the ranges of independent walks w_x and w_y are
 * linked through one trajectory from each slab [u(i-1)/n, ui/n],
 * i = 2..n-1, of the soup on \p base, consecutive ones intersecting.
 */
inline CompositionEstimate estimateComposition(GreenOracle const& green,
                                               int n,
                                               Point const& x,
                                               Point const& y,
                                               double u,
                                               SoupBase const& base,
                                               std::uint64_t replicas,
                                               std::uint64_t seed,
                                               CompositionOptions const& opt = {})
{
    if (n < 3)
        throw std::invalid_argument("estimateComposition: need n >= 3");
    if (!(u > 0.0))
        throw std::invalid_argument("estimateComposition: need u > 0");
    detail::requireReplicas(replicas);
    std::int64_t const escape = detail::compositionEscape(base, opt);
    auto const slabs = slabIntervals(u, n, 2, n - 1);
    SlabChainOptions const so{escape, 1};
    auto est = detail::runSlabReplicas(
        replicas, seed, opt.threads, [&](std::uint64_t rs) {
            VertexWalkFamily family(green.dim(), rs, escape);
            auto const& wx = family.materialize(x);
            std::vector<Point> from;
            for (auto k : wx.walk.points)
                from.push_back(family.lattice().unpack(k));
            PointSet const to = family.materialize(y).trace;
            return slabChainLinks(green, from, to, slabs, base, rs, so);
        });
    est.n = n;
    est.slabs = slabs;
    return est;
}

/*!
 * Frequency of a chain of m trajectories from the successive slabs
 * [u(i-1)/m, ui/m], i = 1..m, the first covering x and the last covering y.
 */
inline CompositionEstimate estimateSlabChain(GreenOracle const& green,
                                             int m,
                                             Point const& x,
                                             Point const& y,
                                             double u,
                                             SoupBase const& base,
                                             std::uint64_t replicas,
                                             std::uint64_t seed,
                                             CompositionOptions const& opt = {})
{
    if (m < 1)
        throw std::invalid_argument("estimateSlabChain: need m >= 1");
    if (!(u > 0.0))
        throw std::invalid_argument("estimateSlabChain: need u > 0");
    detail::requireReplicas(replicas);
    std::int64_t const escape = detail::compositionEscape(base, opt);
    auto const slabs = slabIntervals(u, m, 1, m);
    Lattice const lat(green.dim());
    PointSet to;
    to.insert(lat.pack(y));
    SlabChainOptions const so{escape, 1};
    auto est = detail::runSlabReplicas(
        replicas, seed, opt.threads, [&](std::uint64_t rs) {
            return slabChainLinks(green, {x}, to, slabs, base, rs, so);
        });
    est.n = m;
    est.slabs = slabs;
    return est;
}

//---------------------------------------------------------------------------//
// Streaming chain ladder
//---------------------------------------------------------------------------//

struct ChainLadderOptions
{
    std::int64_t windowRadius = 5;
    /// Increasing base radii; all rungs come from the soup on the largest.
    std::vector<std::int64_t> ladder{10, 20, 40};
    /// 0 picks twice the largest rung.
    std::int64_t escapeRadius = 0;
    unsigned threads = 1;
};

struct ChainLadderReplica
{
    std::uint64_t trajectories = 0;
    std::uint64_t windowTrajectories = 0;
    std::uint64_t occupied = 0;
    std::uint64_t pairs = 0;
    /// Pairs on one common trajectory.
    std::uint64_t within1 = 0;
    /// Pairs on two intersecting (or one) trajectories.
    std::uint64_t within2 = 0;
    /// Pairs at chain distance <= 3 using trajectories of each rung.
    std::vector<std::uint64_t> within3;
    double returnBound = 0.0;
};

namespace detail {

/// Fixed-width bitset over window trajectories.
class Bits
{
  public:
    explicit Bits(std::size_t n = 0) : words_((n + 63) / 64, 0) {}
    void set(std::size_t i) { words_[i / 64] |= std::uint64_t{1} << (i % 64); }
    void orWith(Bits const& o)
    {
        for (std::size_t w = 0; w < words_.size(); ++w)
            words_[w] |= o.words_[w];
    }
    bool intersects(Bits const& o) const
    {
        for (std::size_t w = 0; w < words_.size(); ++w)
            if (words_[w] & o.words_[w])
                return true;
        return false;
    }

  private:
    std::vector<std::uint64_t> words_;
};

}  // namespace detail

/*!
 * Chain-distance counts for occupied pairs of the window ball(0, w) in one
 * soup on ball(0, R), R the largest rung, with each rung r using only the
 * trajectories that meet ball(0, r).
 *
 * A chain of length <= 3 from x to y consists of trajectories a through x
 * and b through y (both meet the window, so they belong to every rung) and
 * a third trajectory meeting both. The soup is streamed twice from its
 * seed: the first pass keeps the window trajectories, the second records,
 * for every pair of window trajectories, the smallest rung holding a
 * trajectory that meets both. Nothing else is stored, which keeps large
 * bases within memory.
 */
inline ChainLadderReplica chainLadderReplica(GreenOracle const& green,
                                             double u,
                                             std::uint64_t seed,
                                             ChainLadderOptions const& opt)
{
    int const d = green.dim();
    if (opt.ladder.empty() || !std::is_sorted(opt.ladder.begin(), opt.ladder.end())
        || opt.ladder.front() < opt.windowRadius)
    {
        throw std::invalid_argument(
            "chainLadder: ladder must be increasing and start at or above "
            "the window radius");
    }
    Lattice const lat(d);
    std::int64_t const top = opt.ladder.back();
    std::int64_t const escape = opt.escapeRadius > 0 ? opt.escapeRadius
                                                     : 2 * top;
    SoupBase const base = SoupBase::makeBall(Point::origin(d), top);
    SoupOptions so;
    so.mode = SamplerMode::thinning;
    so.threads = opt.threads;
    so.buildTraces = false;

    auto min_norm = [&](Trajectory const& t) {
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        detail::forEachPathKey(
            t, [&](Lattice::Key k) { best = std::min(best, lat.l1Norm(k)); });
        return best;
    };

    // Pass 1: window trajectories and the index point -> window trajectory.
    std::vector<TrajectoryPtr> window_traj;
    Soup const meta = streamSoup(
        green, base, 0.0, u, escape, seed, so, [&](TrajectoryPtr const& t) {
            if (min_norm(*t) <= opt.windowRadius)
                window_traj.push_back(t);
        });
    ChainLadderReplica out;
    out.returnBound = meta.returnBound;
    out.windowTrajectories = window_traj.size();
    IncidenceGraph const g(d, window_traj);

    std::size_t const nw = window_traj.size();
    std::size_t const nr = opt.ladder.size();
    constexpr std::uint8_t kNone = 0xFF;
    std::vector<std::uint8_t> link(nw * nw, kNone);

    // Pass 2: every trajectory of the big soup as a middle link.
    std::vector<std::uint32_t> stamp(nw, 0);
    std::uint32_t round = 0;
    std::vector<std::uint32_t> met;
    std::uint64_t total = 0;
    streamSoup(
        green, base, 0.0, u, escape, seed, so, [&](TrajectoryPtr const& t) {
            ++total;
            if (nw == 0)
                return;
            ++round;
            met.clear();
            std::int64_t mn = std::numeric_limits<std::int64_t>::max();
            detail::forEachPathKey(*t, [&](Lattice::Key k) {
                mn = std::min(mn, lat.l1Norm(k));
                for (auto a : g.covering(k))
                {
                    if (stamp[a] != round)
                    {
                        stamp[a] = round;
                        met.push_back(a);
                    }
                }
            });
            if (met.empty())
                return;
            auto const rung = static_cast<std::uint8_t>(
                std::lower_bound(opt.ladder.begin(), opt.ladder.end(), mn)
                - opt.ladder.begin());
            if (rung >= nr)
                return;
            for (auto a : met)
                for (auto b : met)
                    link[a * nw + b] = std::min(link[a * nw + b], rung);
        });
    out.trajectories = total;

    // Occupied window points and their covering window trajectories.
    std::vector<detail::Bits> cov;
    std::vector<Point> occupied;
    forEachInBall(Ball{Point::origin(d), opt.windowRadius}, [&](Point const& x) {
        auto const c = g.covering(x);
        if (c.empty())
            return;
        detail::Bits b(nw);
        for (auto a : c)
            b.set(a);
        cov.push_back(std::move(b));
        occupied.push_back(x);
    });
    out.occupied = occupied.size();
    out.within3.assign(nr, 0);

    // reach1(a) = {a}; reach2(a) = traces meeting a; reach3 per rung.
    std::vector<detail::Bits> reach2(nw, detail::Bits(nw));
    std::vector<std::vector<detail::Bits>> reach3(
        nr, std::vector<detail::Bits>(nw, detail::Bits(nw)));
    for (std::size_t a = 0; a < nw; ++a)
    {
        reach2[a].set(a);
        for (auto b : g.neighbors(static_cast<IncidenceGraph::Index>(a)))
            reach2[a].set(b);
        for (std::size_t b = 0; b < nw; ++b)
        {
            auto const r = link[a * nw + b];
            if (r == kNone)
                continue;
            for (std::size_t k = r; k < nr; ++k)
                reach3[k][a].set(b);
        }
    }

    std::size_t const no = occupied.size();
    for (std::size_t i = 0; i < no; ++i)
    {
        detail::Bits r2(nw);
        std::vector<detail::Bits> r3(nr, detail::Bits(nw));
        for (auto a : g.covering(occupied[i]))
        {
            r2.orWith(reach2[a]);
            for (std::size_t k = 0; k < nr; ++k)
                r3[k].orWith(reach3[k][a]);
        }
        for (std::size_t j = i + 1; j < no; ++j)
        {
            ++out.pairs;
            if (cov[i].intersects(cov[j]))
                ++out.within1;
            if (r2.intersects(cov[j]))
                ++out.within2;
            for (std::size_t k = 0; k < nr; ++k)
                if (r3[k].intersects(cov[j]))
                    ++out.within3[k];
        }
    }
    return out;
}

}  // namespace ri
