#pragma once

#include <algorithm>
#include <memory>
#include <optional>
#include <set>
#include <vector>

#include "ri/lattice.hpp"
#include "ri/rng.hpp"
#include "ri/soup.hpp"

// Brute-force references shared by the unit tests and the acceptance suite.

namespace ri::oracle {

/// Trace of a trajectory as an ordered set of points.
inline std::set<Point> traceOf(Lattice const& lat, Trajectory const& t)
{
    std::set<Point> s;
    for (auto k : t.forward.points)
        s.insert(lat.unpack(k));
    for (auto k : t.backward.points)
        s.insert(lat.unpack(k));
    return s;
}

inline bool meets(std::set<Point> const& a, std::set<Point> const& b)
{
    for (auto const& p : a)
        if (b.count(p))
            return true;
    return false;
}

/*!
 * Shortest chain from x to y by enumerating every sequence of distinct
 * trajectories of length <= maxLength; nullopt if there is none.
 */
inline std::optional<int> exhaustiveChainDistance(int d,
                                                  std::vector<TrajectoryPtr> const& soup,
                                                  Point const& x,
                                                  Point const& y,
                                                  int maxLength)
{
    Lattice const lat(d);
    std::vector<std::set<Point>> tr;
    for (auto const& t : soup)
        tr.push_back(traceOf(lat, *t));
    int const n = static_cast<int>(tr.size());
    std::optional<int> best;
    std::vector<int> seq;
    std::vector<char> used(static_cast<std::size_t>(n), 0);
    auto extend = [&](auto&& self) -> void {
        int const len = static_cast<int>(seq.size());
        if (len > 0 && tr[static_cast<std::size_t>(seq.back())].count(y))
        {
            if (!best || len < *best)
                best = len;
        }
        if (len == maxLength)
            return;
        for (int i = 0; i < n; ++i)
        {
            if (used[static_cast<std::size_t>(i)])
                continue;
            if (len == 0 && !tr[static_cast<std::size_t>(i)].count(x))
                continue;
            if (len > 0 && !meets(tr[static_cast<std::size_t>(seq.back())],
                                  tr[static_cast<std::size_t>(i)]))
                continue;
            used[static_cast<std::size_t>(i)] = 1;
            seq.push_back(i);
            self(self);
            seq.pop_back();
            used[static_cast<std::size_t>(i)] = 0;
        }
    };
    extend(extend);
    return best;
}

/// Trajectory whose forward path is a given list of points.
inline TrajectoryPtr pathTrajectory(Lattice const& lat,
                                    std::vector<Point> const& pts,
                                    std::uint64_t index = 0)
{
    auto t = std::make_shared<Trajectory>();
    t->index = index;
    t->start = pts.front();
    for (auto const& p : pts)
        t->forward.points.push_back(lat.pack(p));
    t->backward.points.push_back(lat.pack(pts.front()));
    t->rebuildTrace();
    return t;
}

/*!
 * Micro-soup: 1..maxTrajectories short random walks started uniformly in
 * the cube [-side, side]^d.
 */
inline std::vector<TrajectoryPtr> microSoup(int d, Stream& rng, int maxTrajectories = 8,
                                            int side = 3, int maxSteps = 12)
{
    Lattice const lat(d);
    int const n = 1 + static_cast<int>(rng.below(static_cast<std::uint32_t>(maxTrajectories)));
    std::vector<TrajectoryPtr> out;
    for (int i = 0; i < n; ++i)
    {
        Point p(d);
        for (int j = 0; j < d; ++j)
            p.c[j] = static_cast<Coord>(rng.below(static_cast<std::uint32_t>(2 * side + 1))) - side;
        std::vector<Point> pts{p};
        int const steps = 1 + static_cast<int>(rng.below(static_cast<std::uint32_t>(maxSteps)));
        for (int s = 0; s < steps; ++s)
        {
            auto const dir = rng.below(static_cast<std::uint32_t>(2 * d));
            p.c[dir / 2] += (dir & 1u) ? 1 : -1;
            pts.push_back(p);
        }
        out.push_back(pathTrajectory(lat, pts, static_cast<std::uint64_t>(i)));
    }
    return out;
}

/// A point of some trajectory of the soup, or a random cube point.
inline Point microPoint(int d, std::vector<TrajectoryPtr> const& soup, Stream& rng, int side = 3)
{
    Lattice const lat(d);
    if (rng.uniform() < 0.8)
    {
        auto const& t = *soup[rng.below(static_cast<std::uint32_t>(soup.size()))];
        auto const& pts = t.forward.points;
        return lat.unpack(pts[rng.below(static_cast<std::uint32_t>(pts.size()))]);
    }
    Point p(d);
    for (int j = 0; j < d; ++j)
        p.c[j] = static_cast<Coord>(rng.below(static_cast<std::uint32_t>(2 * side + 1))) - side;
    return p;
}

}  // namespace ri::oracle
