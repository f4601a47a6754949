#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "lattice.hpp"
#include "parallel.hpp"
#include "point_set.hpp"
#include "potential.hpp"
#include "rng.hpp"
#include "walk.hpp"

namespace ri {

//---------------------------------------------------------------------------//
// Base sets
//---------------------------------------------------------------------------//

/// Finite base set K of a soup: an l1 ball or an explicit point list.
struct SoupBase
{
    enum class Kind
    {
        ball,
        points,
    };

    Kind kind = Kind::points;
    Ball ball;
    std::vector<Point> points;

    static SoupBase makeBall(Point center, std::int64_t radius)
    {
        if (radius < 0)
        {
            throw std::invalid_argument("SoupBase: negative radius");
        }
        SoupBase b;
        b.kind = Kind::ball;
        b.ball = Ball{center, radius};
        return b;
    }

    static SoupBase makePoints(std::vector<Point> pts)
    {
        if (pts.empty())
        {
            throw std::invalid_argument("SoupBase: empty base set");
        }
        for (auto const& p : pts)
            detail::requireSameDim(p, pts.front());
        std::sort(pts.begin(), pts.end());
        pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
        SoupBase b;
        b.kind = Kind::points;
        b.points = std::move(pts);
        return b;
    }

    int dim() const
    {
        return kind == Kind::ball ? ball.center.dim : points.front().dim;
    }

    /// Center of the escape ball: the ball center, or the origin.
    Point center() const
    {
        return kind == Kind::ball ? ball.center : Point::origin(dim());
    }

    /// Sorted points of K.
    std::vector<Point> materialize() const
    {
        if (kind == Kind::points)
            return points;
        auto pts = ballPoints(ball);
        std::sort(pts.begin(), pts.end());
        return pts;
    }

    friend bool operator==(SoupBase const& a, SoupBase const& b)
    {
        if (a.kind != b.kind)
            return false;
        if (a.kind == Kind::ball)
            return a.ball.center == b.ball.center
                   && a.ball.radius == b.ball.radius;
        return a.points == b.points;
    }
};

/// Points of K having a lattice neighbor outside K, in sorted order.
inline std::vector<Point> innerBoundary(Lattice const& lat,
                                        std::vector<Point> const& sorted,
                                        PointSet const& keys)
{
    std::vector<Point> out;
    int const d = lat.dim();
    for (auto const& x : sorted)
    {
        auto const k = lat.pack(x);
        bool boundary = false;
        for (int j = 0; j < d && !boundary; ++j)
        {
            auto const step = lat.axisStep(j);
            boundary = !keys.contains(k + step) || !keys.contains(k - step);
        }
        if (boundary)
            out.push_back(x);
    }
    return out;
}

//---------------------------------------------------------------------------//
// Trajectories and soups
//---------------------------------------------------------------------------//

/*!
 * One soup element restricted to the escape ball: the forward walk from the
 * start and the backward walk conditioned never to return to the base.
 * Both paths begin at the start point.
 */
struct Trajectory
{
    std::uint64_t index = 0;
    double label = 0.0;
    Point start;
    WalkPath forward;
    WalkPath backward;
    PointSet trace;
    bool truncated = true;
    /// Generation index in a generation stack; -1 otherwise.
    int generation = -1;

    /// Whether the trace meets A; scans the paths when no trace was built.
    bool hits(PointSet const& A) const
    {
        if (!trace.empty())
            return intersects(trace, A);
        auto in_a = [&](Lattice::Key k) { return A.contains(k); };
        return std::any_of(forward.points.begin(), forward.points.end(), in_a)
               || std::any_of(
                   backward.points.begin(), backward.points.end(), in_a);
    }

    /// Smallest l1 distance from \p center over both paths.
    std::int64_t minDistance(Lattice const& lat, Point const& center) const
    {
        std::int64_t best = std::numeric_limits<std::int64_t>::max();
        for (auto const* path : {&forward, &backward})
            for (auto k : path->points)
                best = std::min(best, l1Dist(lat.unpack(k), center));
        return best;
    }

    void rebuildTrace()
    {
        trace.clear();
        trace.reserve(forward.points.size() + backward.points.size());
        for (auto k : forward.points)
            trace.insert(k);
        for (auto k : backward.points)
            trace.insert(k);
    }
};

using TrajectoryPtr = std::shared_ptr<Trajectory const>;

enum class SamplerMode
{
    automatic,
    /// Count from cap(K), starts from the normalized equilibrium measure.
    equilibrium,
    /// Per-site Poisson proposals kept when they escape (no linear solve).
    thinning,
};

constexpr std::string_view to_string(SamplerMode m)
{
    switch (m)
    {
        case SamplerMode::automatic:
            return "automatic";
        case SamplerMode::equilibrium:
            return "equilibrium";
        case SamplerMode::thinning:
            return "thinning";
    }
    return "?";
}

inline SamplerMode parseSamplerMode(std::string_view s)
{
    for (auto m : {SamplerMode::automatic,
                   SamplerMode::equilibrium,
                   SamplerMode::thinning})
        if (to_string(m) == s)
            return m;
    throw std::invalid_argument("unknown sampler mode '" + std::string(s)
                                + "'");
}

struct Soup
{
    int d = 0;
    SoupBase base;
    double uLow = 0.0;
    double uHigh = 0.0;
    std::uint64_t seed = 0;
    std::int64_t escapeRadius = 0;
    /// Capacity used for the Poisson count (NaN for thinning).
    double capK = std::nan("");
    /// Acceptance-rate estimate of cap(K) (thinning only).
    double capEstimate = std::nan("");
    SamplerMode mode = SamplerMode::equilibrium;
    /// Bound on the probability that one discarded tail returns to K.
    double returnBound = std::nan("");
    std::vector<TrajectoryPtr> trajectories;

    std::size_t size() const { return trajectories.size(); }
    bool empty() const { return trajectories.empty(); }
    Lattice lattice() const { return Lattice(d); }
    Ball escapeBall() const { return Ball{base.center(), escapeRadius}; }

    /// Union bound over all 2N discarded tails.
    double truncationBound() const { return truncationBound(size()); }

    /// Same for n trajectories; streamed soups keep no trajectory list.
    double truncationBound(std::uint64_t n) const
    {
        if (std::isnan(returnBound))
            return returnBound;
        return std::min(1.0, 2.0 * static_cast<double>(n) * returnBound);
    }
};

struct SoupOptions
{
    SamplerMode mode = SamplerMode::automatic;
    /// Defaults to last_visit for one-point bases, early_reject otherwise.
    std::optional<ConditioningMethod> conditioning;
    /// Automatic mode uses thinning above this many boundary points.
    std::size_t thinningThreshold = kDenseSolveLimit;
    unsigned threads = 1;
    /// Reuse an equilibrium table of the same base.
    PotentialTable const* table = nullptr;
    /// Fill Trajectory::trace; streaming consumers may work on paths only.
    bool buildTraces = true;
    /// Boundary sites handled per parallel batch in thinning mode.
    std::size_t batchSize = 4096;
};

namespace detail {

inline void validateLevels(double uLow, double uHigh)
{
    if (!(uLow >= 0.0) || !(uLow < uHigh) || !std::isfinite(uHigh))
    {
        throw std::invalid_argument(
            "sampleSoup: need 0 <= uLow < uHigh (got uLow="
            + std::to_string(uLow) + ", uHigh=" + std::to_string(uHigh) + ")");
    }
}

inline void validateBase(SoupBase const& base, Ball const& escape)
{
    if (base.kind == SoupBase::Kind::ball)
    {
        if (base.ball.radius > escape.radius)
        {
            throw std::invalid_argument(
                "sampleSoup: base radius exceeds the escape radius");
        }
        return;
    }
    for (auto const& x : base.points)
    {
        if (!escape.contains(x))
        {
            throw std::invalid_argument("sampleSoup: base point "
                                        + to_string(x)
                                        + " outside the escape ball");
        }
    }
}

/// Sampling state shared by both modes.
struct SoupContext
{
    Lattice lat;
    Ball escape;
    ConditioningMethod method;
    bool buildTraces;
};

template<class InK>
std::shared_ptr<Trajectory> makeTrajectory(SoupContext const& ctx,
                                           Point const& start,
                                           double label,
                                           InK const& inK,
                                           Stream& rng)
{
    auto t = std::make_shared<Trajectory>();
    t->label = label;
    t->start = start;
    t->forward = simulateForward(ctx.lat, start, ctx.escape, rng);
    t->backward = conditionedNoReturnIf(
        ctx.lat, start, inK, ctx.escape, rng, ctx.method);
    t->truncated = true;
    if (ctx.buildTraces)
        t->rebuildTrace();
    return t;
}

/// Proposals at one boundary site; kept ones are appended to \p out.
template<class InK>
void thinSite(SoupContext const& ctx,
              Point const& x,
              InK const& inK,
              double uLow,
              double len,
              Stream& rng,
              std::vector<std::shared_ptr<Trajectory>>& out)
{
    auto const xk = ctx.lat.pack(x);
    auto const proposals = rng.poisson(len);
    WalkPath path;
    for (std::uint64_t m = 0; m < proposals; ++m)
    {
        double const label = uLow + len * rng.uniform();
        if (!escapePathIf(ctx.lat, xk, inK, ctx.escape, rng, path))
            continue;
        auto t = std::make_shared<Trajectory>();
        t->label = label;
        t->start = x;
        t->backward = path;
        t->forward = simulateForward(ctx.lat, x, ctx.escape, rng);
        t->truncated = true;
        if (ctx.buildTraces)
            t->rebuildTrace();
        out.push_back(std::move(t));
    }
}

/*!
 * Thinning over boundary sites produced by \p forEachSite in order; the
 * j-th site uses stream j + 1. Sites are processed in parallel batches and
 * emitted in site order.
 */
template<class ForEachSite, class InK, class Sink>
std::uint64_t thinSites(SoupContext const& ctx,
                        ForEachSite&& forEachSite,
                        InK const& inK,
                        double uLow,
                        double len,
                        std::uint64_t seed,
                        SoupOptions const& opt,
                        Sink& sink)
{
    std::vector<Point> batch;
    std::vector<std::vector<std::shared_ptr<Trajectory>>> kept;
    std::uint64_t site_index = 0;
    std::uint64_t emitted = 0;
    std::size_t const batch_size = std::max<std::size_t>(1, opt.batchSize);
    auto flush = [&] {
        kept.assign(batch.size(), {});
        std::uint64_t const first = site_index;
        parallelFor(batch.size(), opt.threads, [&](std::size_t j) {
            Stream rng = deriveStream(seed, StreamDomain::soup, first + j + 1);
            thinSite(ctx, batch[j], inK, uLow, len, rng, kept[j]);
        });
        site_index += batch.size();
        batch.clear();
        for (auto& group : kept)
        {
            for (auto& t : group)
            {
                t->index = emitted++;
                sink(std::shared_ptr<Trajectory const>(std::move(t)));
            }
        }
    };
    forEachSite([&](Point const& x) {
        batch.push_back(x);
        if (batch.size() == batch_size)
            flush();
    });
    if (!batch.empty())
        flush();
    return emitted;
}

}  // namespace detail

/*!
 * Poisson soup of trajectories meeting the base K with labels in
 * [uLow, uHigh], delivered to \p sink in index order.
 *
 * Equilibrium mode: N ~ Poisson((uHigh - uLow) cap(K)), labels uniform,
 * starts from the normalized equilibrium measure; these draws come from
 * stream 0 of the soup domain, and trajectory i walks on stream i + 1.
 *
 * Thinning mode: each inner-boundary point x (stream j + 1 for the j-th in
 * sorted order) receives Poisson((uHigh - uLow)) labelled proposals; a
 * proposal is kept when its walk leaves the escape ball without returning
 * to K, and that walk becomes the backward path. Kept counts are
 * independent Poisson((uHigh - uLow) e_K(x)), so the result has the same
 * law up to truncation. Ball bases are never materialized in this mode.
 *
 * The returned Soup carries the metadata only.
 */
template<class Sink>
Soup streamSoup(GreenOracle const& green,
                SoupBase const& base,
                double uLow,
                double uHigh,
                std::int64_t escapeRadius,
                std::uint64_t seed,
                SoupOptions const& opt,
                Sink&& sink)
{
    int const d = base.dim();
    if (d != green.dim())
    {
        throw std::invalid_argument("sampleSoup: base and oracle dimensions "
                                    "differ");
    }
    detail::validateLevels(uLow, uHigh);
    Soup soup;
    soup.d = d;
    soup.base = base;
    soup.uLow = uLow;
    soup.uHigh = uHigh;
    soup.seed = seed;
    soup.escapeRadius = escapeRadius;
    Ball const escape = soup.escapeBall();
    Lattice const lat(d);
    lat.requireRadius(l1Norm(escape.center) + escapeRadius);
    detail::validateBase(base, escape);

    bool const is_ball = base.kind == SoupBase::Kind::ball;
    std::uint64_t const k_size = is_ball ? ballSize(d, base.ball.radius)
                                         : base.points.size();
    std::uint64_t const boundary_size
        = is_ball ? sphereSize(d, base.ball.radius) : 0;
    detail::SoupContext ctx{
        lat,
        escape,
        opt.conditioning.value_or(k_size == 1
                                      ? ConditioningMethod::last_visit
                                      : ConditioningMethod::early_reject),
        opt.buildTraces};
    double const len = uHigh - uLow;

    // Explicit point bases are small enough to hold as keys.
    std::vector<Point> K;
    PointSet keys;
    std::vector<Point> boundary;
    if (!is_ball || (opt.mode == SamplerMode::equilibrium || opt.table))
    {
        K = base.materialize();
        keys = PointSet(K.size());
        for (auto const& x : K)
            keys.insert(lat.pack(x));
        boundary = innerBoundary(lat, K, keys);
    }
    std::uint64_t const n_boundary = is_ball ? boundary_size : boundary.size();

    SamplerMode mode = opt.mode;
    if (mode == SamplerMode::automatic)
    {
        mode = (opt.table || (n_boundary <= opt.thinningThreshold
                              && k_size <= kMaxEquilibriumSize))
                   ? SamplerMode::equilibrium
                   : SamplerMode::thinning;
    }
    soup.mode = mode;

    if (mode == SamplerMode::equilibrium)
    {
        if (K.empty())
        {
            K = base.materialize();
            keys = PointSet(K.size());
            for (auto const& x : K)
                keys.insert(lat.pack(x));
        }
        PotentialTable local;
        PotentialTable const* table = opt.table;
        if (!table)
        {
            local = equilibrium(K, green);
            table = &local;
        }
        else if (table->K != K)
        {
            throw std::invalid_argument("sampleSoup: table base differs");
        }
        soup.capK = table->cap;
        soup.returnBound = truncationReturnBound(*table, green, escape);

        std::vector<double> cumulative;
        std::vector<std::size_t> site;
        double acc = 0.0;
        for (std::size_t i : table->support)
        {
            acc += table->normEq[i];
            cumulative.push_back(acc);
            site.push_back(i);
        }
        Stream main = deriveStream(seed, StreamDomain::soup, 0);
        auto const n = main.poisson(len * table->cap);
        std::vector<double> labels(n);
        std::vector<Point> starts(n);
        for (std::uint64_t i = 0; i < n; ++i)
        {
            labels[i] = uLow + len * main.uniform();
            double const v = main.uniform() * acc;
            auto it = std::upper_bound(cumulative.begin(), cumulative.end(), v);
            if (it == cumulative.end())
                --it;
            starts[i] = table->K[site[static_cast<std::size_t>(
                it - cumulative.begin())]];
        }
        std::size_t const batch_size = std::max<std::size_t>(1, opt.batchSize);
        std::vector<std::shared_ptr<Trajectory>> built;
        for (std::uint64_t first = 0; first < n; first += batch_size)
        {
            auto const count = static_cast<std::size_t>(
                std::min<std::uint64_t>(batch_size, n - first));
            built.assign(count, nullptr);
            parallelFor(count, opt.threads, [&](std::size_t j) {
                auto const i = first + j;
                Stream rng = deriveStream(seed, StreamDomain::soup, i + 1);
                built[j] = detail::makeTrajectory(
                    ctx, starts[i], labels[i], InKeySet{keys}, rng);
                built[j]->index = i;
            });
            for (auto& t : built)
                sink(std::shared_ptr<Trajectory const>(std::move(t)));
        }
        return soup;
    }

    std::uint64_t accepted_count = 0;
    double rmax = 0.0;
    double rmax_l1 = 0.0;
    if (is_ball)
    {
        InCenteredBall const inK{base.ball.radius};
        accepted_count = detail::thinSites(
            ctx,
            [&](auto&& f) { forEachOnSphere(base.ball, f); },
            inK,
            uLow,
            len,
            seed,
            opt,
            sink);
        rmax = static_cast<double>(base.ball.radius);
        rmax_l1 = rmax;
    }
    else
    {
        accepted_count = detail::thinSites(
            ctx,
            [&](auto&& f) {
                for (auto const& x : boundary)
                    f(x);
            },
            InKeySet{keys},
            uLow,
            len,
            seed,
            opt,
            sink);
        for (auto const& z : K)
        {
            rmax = std::max(rmax, l2Norm(z - escape.center));
            rmax_l1 = std::max(
                rmax_l1, static_cast<double>(l1Dist(z, escape.center)));
        }
    }
    auto const accepted = static_cast<double>(accepted_count);
    soup.capEstimate = accepted / len;
    // Upper confidence bound on cap(K), so the return bound stays a bound.
    double const cap_upper = (accepted + 3.0 * std::sqrt(accepted) + 3.0) / len;
    soup.returnBound
        = truncationReturnBound(cap_upper, rmax, rmax_l1, green, escape);
    return soup;
}

inline Soup sampleSoup(GreenOracle const& green,
                       SoupBase const& base,
                       double uLow,
                       double uHigh,
                       std::int64_t escapeRadius,
                       std::uint64_t seed,
                       SoupOptions const& opt = {})
{
    std::vector<TrajectoryPtr> trajectories;
    Soup soup = streamSoup(green,
                           base,
                           uLow,
                           uHigh,
                           escapeRadius,
                           seed,
                           opt,
                           [&](TrajectoryPtr t) {
                               trajectories.push_back(std::move(t));
                           });
    soup.trajectories = std::move(trajectories);
    return soup;
}

inline Soup sampleSoup(GreenOracle const& green,
                       std::span<Point const> K,
                       double uLow,
                       double uHigh,
                       std::int64_t escapeRadius,
                       std::uint64_t seed,
                       SoupOptions const& opt = {})
{
    return sampleSoup(green,
                      SoupBase::makePoints({K.begin(), K.end()}),
                      uLow,
                      uHigh,
                      escapeRadius,
                      seed,
                      opt);
}

/*!
 * Trajectories with label in [t1, t2), or [t1, t2] when t2 is the top of
 * the soup's interval, so adjacent slices partition the soup.
 */
inline Soup slice(Soup const& s, double t1, double t2)
{
    if (!(s.uLow <= t1 && t1 <= t2 && t2 <= s.uHigh))
    {
        throw std::invalid_argument("slice: [" + std::to_string(t1) + ", "
                                    + std::to_string(t2)
                                    + "] not within the soup interval");
    }
    Soup out = s;
    out.trajectories.clear();
    out.uLow = t1;
    out.uHigh = t2;
    bool const closed = (t2 == s.uHigh);
    for (auto const& t : s.trajectories)
    {
        if (t->label >= t1 && (t->label < t2 || (closed && t->label <= t2)))
            out.trajectories.push_back(t);
    }
    return out;
}

/// Union of traces intersected with the window.
inline PointSet interlacementSet(Soup const& s, PointSet const& window)
{
    PointSet out;
    for (auto const& t : s.trajectories)
    {
        PointSet const& small = t->trace.size() <= window.size() ? t->trace : window;
        PointSet const& large = t->trace.size() <= window.size() ? window : t->trace;
        small.forEach([&](Lattice::Key k) {
            if (large.contains(k))
                out.insert(k);
        });
    }
    return out;
}

/// Number of trajectories whose trace meets A.
inline std::uint64_t countHitting(Soup const& s, PointSet const& A)
{
    std::uint64_t n = 0;
    for (auto const& t : s.trajectories)
        if (t->hits(A))
            ++n;
    return n;
}

/// Packed keys of a point list.
inline PointSet toPointSet(Lattice const& lat, std::span<Point const> pts)
{
    PointSet out(pts.size());
    for (auto const& p : pts)
        out.insert(lat.pack(p));
    return out;
}

}  // namespace ri
