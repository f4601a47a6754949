#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "lattice.hpp"
#include "point_set.hpp"
#include "rng.hpp"

namespace ri {

inline constexpr std::uint64_t kDefaultStepBudget = 1'000'000'000ULL;
inline constexpr std::uint64_t kDefaultAttemptBudget = 10'000'000ULL;

/// A walk exceeded its step budget; usually a mis-set escape radius.
class RunawayWalkError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

//---------------------------------------------------------------------------//
/*!
 * Finite nearest-neighbor path stored as packed keys.
 *
 * Paths produced here end at the first point strictly outside the escape
 * ball (that point included); startIndex marks time zero.
 */
struct WalkPath
{
    std::vector<Lattice::Key> points;
    std::size_t startIndex = 0;
    bool truncated = false;
    std::int64_t escapeRadius = 0;

    std::size_t steps() const
    {
        return points.empty() ? 0 : points.size() - 1;
    }
    Lattice::Key start() const { return points.at(startIndex); }
};

enum class WalkEnd
{
    exited,
    stopped,
};

//---------------------------------------------------------------------------//
/*!
 * Run a simple random walk from \p start until it leaves \p escape or the
 * visitor asks to stop.
 *
 * The visitor is called as visit(key, n) or visit(key, n, norm) for every
 * position at times n >= 1, including the first point outside the ball,
 * where norm is the l1 distance to the ball center; it returns false to
 * stop.
 * A start already outside the ball ends immediately with no steps.
 */
template<class Visit>
WalkEnd walkFrom(Lattice const& lat,
                 Lattice::Key start,
                 Ball const& escape,
                 Stream& rng,
                 Visit&& visit,
                 std::uint64_t budget = kDefaultStepBudget)
{
    int const d = lat.dim();
    std::array<Coord, kMaxDim> rel{};
    std::array<Lattice::Key, kMaxDim> step{};
    std::int64_t norm = 0;
    for (int i = 0; i < d; ++i)
    {
        rel[i] = lat.coord(start, i) - escape.center.c[i];
        norm += std::abs(rel[i]);
        step[i] = lat.axisStep(i);
    }
    if (norm > escape.radius)
    {
        return WalkEnd::exited;
    }
    lat.requireRadius(l1Norm(escape.center) + escape.radius);

    auto const two_d = static_cast<std::uint32_t>(2 * d);
    Lattice::Key key = start;
    for (std::uint64_t n = 1; n <= budget; ++n)
    {
        std::uint32_t const dir = rng.below(two_d);
        int const axis = static_cast<int>(dir >> 1);
        Coord const old = rel[axis];
        if (dir & 1u)
        {
            rel[axis] = old + 1;
            key += step[axis];
        }
        else
        {
            rel[axis] = old - 1;
            key -= step[axis];
        }
        norm += std::abs(rel[axis]) - std::abs(old);
        bool keep_going;
        if constexpr (std::is_invocable_v<Visit&,
                                          Lattice::Key,
                                          std::uint64_t,
                                          std::int64_t>)
            keep_going = visit(key, n, norm);
        else
            keep_going = visit(key, n);
        if (!keep_going)
        {
            return WalkEnd::stopped;
        }
        if (norm > escape.radius)
        {
            return WalkEnd::exited;
        }
    }
    throw RunawayWalkError("walk exceeded step budget of "
                           + std::to_string(budget) + " steps");
}

/// Forward walk from x, stopped at the first exit from \p escape.
inline WalkPath simulateForward(Lattice const& lat,
                                Point const& x,
                                Ball const& escape,
                                Stream& rng,
                                std::uint64_t budget = kDefaultStepBudget)
{
    WalkPath path;
    path.escapeRadius = escape.radius;
    path.truncated = true;
    path.points.push_back(lat.pack(x));
    walkFrom(
        lat,
        path.points.front(),
        escape,
        rng,
        [&](Lattice::Key k, std::uint64_t) {
            path.points.push_back(k);
            return true;
        },
        budget);
    return path;
}

inline WalkPath simulateForward(Lattice const& lat,
                                Point const& x,
                                std::int64_t stopRadius,
                                Stream& rng)
{
    return simulateForward(lat, x, Ball{lat.origin(), stopRadius}, rng);
}

/*!
 * True iff the walk from x leaves the escape ball before visiting K at a
 * time n >= 1.
 */
inline bool escapes(Lattice const& lat,
                    Point const& x,
                    PointSet const& K,
                    Ball const& escape,
                    Stream& rng)
{
    if (K.empty())
        return true;
    auto const end = walkFrom(lat,
                              lat.pack(x),
                              escape,
                              rng,
                              [&](Lattice::Key k, std::uint64_t) {
                                  return !K.contains(k);
                              });
    return end == WalkEnd::exited;
}

/// Membership in a set given as packed keys.
struct InKeySet
{
    PointSet const& keys;
    bool operator()(Lattice::Key k, std::int64_t) const
    {
        return keys.contains(k);
    }
};

/// Membership in the l1 ball of the given radius about the escape center.
struct InCenteredBall
{
    std::int64_t radius;
    bool operator()(Lattice::Key, std::int64_t norm) const
    {
        return norm <= radius;
    }
};

/*!
 * One proposal for the conditioned walk: run from x, recording the path,
 * and report whether it left the escape ball without visiting K at any
 * time n >= 1. On rejection \p out holds the prefix up to the return.
 */
template<class InK>
bool escapePathIf(Lattice const& lat,
                  Lattice::Key xk,
                  InK const& inK,
                  Ball const& escape,
                  Stream& rng,
                  WalkPath& out)
{
    out.points.clear();
    out.startIndex = 0;
    out.truncated = true;
    out.escapeRadius = escape.radius;
    out.points.push_back(xk);
    auto const end = walkFrom(
        lat, xk, escape, rng, [&](Lattice::Key k, std::uint64_t, std::int64_t norm) {
            if (inK(k, norm))
                return false;
            out.points.push_back(k);
            return true;
        });
    return end == WalkEnd::exited;
}

inline bool escapePath(Lattice const& lat,
                       Lattice::Key xk,
                       PointSet const& K,
                       Ball const& escape,
                       Stream& rng,
                       WalkPath& out)
{
    return escapePathIf(lat, xk, InKeySet{K}, escape, rng, out);
}

enum class ConditioningMethod
{
    /// Suffix after the last visit to K, accepted when that visit is at x.
    last_visit,
    /// Whole walk, rejected as soon as it returns to K.
    early_reject,
};

constexpr std::string_view to_string(ConditioningMethod m)
{
    return m == ConditioningMethod::last_visit ? "last_visit" : "early_reject";
}

/*!
 * Walk from x conditioned never to return to K (law P_x^K up to
 * truncation at the escape ball), for K given by a membership predicate.
 *
 * With last_visit the walk runs to the escape boundary and the suffix after
 * its last visit to K is kept when that visit is at x itself; conditioned on
 * this, the suffix has exactly the law of the conditioned walk. For K = {x}
 * every attempt is accepted. With early_reject a walk is discarded the first
 * time it re-enters K. For x outside K both methods reduce to rejecting
 * walks that hit K.
 */
template<class InK>
WalkPath conditionedNoReturnIf(Lattice const& lat,
                               Point const& x,
                               InK const& inK,
                               Ball const& escape,
                               Stream& rng,
                               ConditioningMethod method,
                               std::uint64_t max_attempts = kDefaultAttemptBudget)
{
    auto const xk = lat.pack(x);
    bool const x_in_k = inK(xk, l1Dist(x, escape.center));
    WalkPath path;
    path.escapeRadius = escape.radius;
    path.truncated = true;

    for (std::uint64_t attempt = 0; attempt < max_attempts; ++attempt)
    {
        if (!x_in_k || method == ConditioningMethod::early_reject)
        {
            if (escapePathIf(lat, xk, inK, escape, rng, path))
                return path;
            continue;
        }

        path.points.clear();
        path.points.push_back(xk);
        std::size_t last = 0;
        walkFrom(lat,
                 xk,
                 escape,
                 rng,
                 [&](Lattice::Key k, std::uint64_t, std::int64_t norm) {
                     if (inK(k, norm))
                         last = path.points.size();
                     path.points.push_back(k);
                     return true;
                 });
        if (path.points[last] == xk)
        {
            path.points.erase(path.points.begin(),
                              path.points.begin()
                                  + static_cast<std::ptrdiff_t>(last));
            return path;
        }
    }
    throw RunawayWalkError("conditionedNoReturn: no accepted walk after "
                           + std::to_string(max_attempts) + " attempts");
}

inline WalkPath
conditionedNoReturn(Lattice const& lat,
                    Point const& x,
                    PointSet const& K,
                    Ball const& escape,
                    Stream& rng,
                    ConditioningMethod method = ConditioningMethod::last_visit,
                    std::uint64_t max_attempts = kDefaultAttemptBudget)
{
    return conditionedNoReturnIf(
        lat, x, InKeySet{K}, escape, rng, method, max_attempts);
}

}  // namespace ri
