#pragma once

#include <cmath>
#include <istream>
#include <memory>
#include <ostream>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../soup.hpp"

// Soup persistence as JSON lines: a header record per soup followed by one
// record per trajectory. NaN reals are written as null.

namespace ri::harness {

using Json = nlohmann::ordered_json;

class PersistError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

namespace detail {

inline Json pointJson(Point const& p)
{
    Json a = Json::array();
    for (int i = 0; i < p.dim; ++i)
        a.push_back(p.c[i]);
    return a;
}

inline Point jsonPoint(Json const& a, int d)
{
    if (!a.is_array() || static_cast<int>(a.size()) != d)
        throw PersistError("expected a point with " + std::to_string(d)
                           + " coordinates");
    Point p(d);
    for (int i = 0; i < d; ++i)
        p.c[i] = a[static_cast<std::size_t>(i)].get<Coord>();
    return p;
}

inline Json realJson(double x)
{
    return std::isnan(x) ? Json(nullptr) : Json(x);
}

inline double jsonReal(Json const& j)
{
    return j.is_null() ? std::nan("") : j.get<double>();
}

inline Json pathJson(Lattice const& lat, WalkPath const& w)
{
    Json a = Json::array();
    for (auto k : w.points)
        a.push_back(pointJson(lat.unpack(k)));
    return a;
}

inline WalkPath jsonPath(Lattice const& lat, Json const& a, std::int64_t escape)
{
    WalkPath w;
    w.escapeRadius = escape;
    w.truncated = true;
    for (auto const& p : a)
        w.points.push_back(lat.pack(jsonPoint(p, lat.dim())));
    return w;
}

}  // namespace detail

inline Json soupHeader(Soup const& s, int generation = -1)
{
    Json h;
    h["type"] = "soup";
    h["d"] = s.d;
    h["uLow"] = s.uLow;
    h["uHigh"] = s.uHigh;
    h["seed"] = s.seed;
    h["escapeRadius"] = s.escapeRadius;
    Json b;
    if (s.base.kind == SoupBase::Kind::ball)
    {
        b["kind"] = "ball";
        b["center"] = detail::pointJson(s.base.ball.center);
        b["radius"] = s.base.ball.radius;
    }
    else
    {
        b["kind"] = "points";
        Json pts = Json::array();
        for (auto const& p : s.base.points)
            pts.push_back(detail::pointJson(p));
        b["points"] = pts;
    }
    h["base"] = b;
    h["mode"] = std::string(to_string(s.mode));
    h["capK"] = detail::realJson(s.capK);
    h["capEstimate"] = detail::realJson(s.capEstimate);
    h["returnBound"] = detail::realJson(s.returnBound);
    h["size"] = s.size();
    if (generation >= 0)
        h["generation"] = generation;
    return h;
}

inline Json trajectoryRecord(Lattice const& lat, Trajectory const& t)
{
    Json r;
    r["index"] = t.index;
    r["label"] = t.label;
    r["start"] = detail::pointJson(t.start);
    r["fwd"] = detail::pathJson(lat, t.forward);
    r["bwd"] = detail::pathJson(lat, t.backward);
    if (t.forward.startIndex != 0)
        r["fwdStart"] = t.forward.startIndex;
    if (t.backward.startIndex != 0)
        r["bwdStart"] = t.backward.startIndex;
    r["truncated"] = t.truncated;
    r["generation"] = t.generation;
    return r;
}

/// Append one soup (header plus trajectories) to \p out.
inline void writeSoup(std::ostream& out, Soup const& s, int generation = -1)
{
    Lattice const lat(s.d);
    out << soupHeader(s, generation).dump() << '\n';
    for (auto const& t : s.trajectories)
        out << trajectoryRecord(lat, *t).dump() << '\n';
}

/// Read every soup in a JSON-lines stream; traces are rebuilt from paths.
inline std::vector<Soup> readSoups(std::istream& in)
{
    std::vector<Soup> out;
    std::string line;
    std::size_t n = 0;
    std::size_t expected = 0;
    auto fail = [&](std::string const& msg) {
        throw PersistError("soup file line " + std::to_string(n) + ": " + msg);
    };
    while (std::getline(in, line))
    {
        ++n;
        if (line.empty())
            continue;
        Json j;
        try
        {
            j = Json::parse(line);
            if (j.contains("type") && j["type"] == "soup")
            {
                if (!out.empty() && out.back().size() != expected)
                    fail("previous soup truncated");
                Soup s;
                s.d = j.at("d").get<int>();
                s.uLow = j.at("uLow").get<double>();
                s.uHigh = j.at("uHigh").get<double>();
                s.seed = j.at("seed").get<std::uint64_t>();
                s.escapeRadius = j.at("escapeRadius").get<std::int64_t>();
                auto const& b = j.at("base");
                if (b.at("kind") == "ball")
                {
                    s.base = SoupBase::makeBall(detail::jsonPoint(b.at("center"), s.d),
                                                b.at("radius").get<std::int64_t>());
                }
                else
                {
                    std::vector<Point> pts;
                    for (auto const& p : b.at("points"))
                        pts.push_back(detail::jsonPoint(p, s.d));
                    s.base = SoupBase::makePoints(std::move(pts));
                }
                s.mode = parseSamplerMode(j.at("mode").get<std::string>());
                s.capK = detail::jsonReal(j.at("capK"));
                s.capEstimate = detail::jsonReal(j.at("capEstimate"));
                s.returnBound = detail::jsonReal(j.at("returnBound"));
                expected = j.at("size").get<std::size_t>();
                s.trajectories.reserve(expected);
                out.push_back(std::move(s));
                continue;
            }
            if (out.empty())
                fail("trajectory record before any soup header");
            Soup& s = out.back();
            Lattice const lat(s.d);
            auto t = std::make_shared<Trajectory>();
            t->index = j.at("index").get<std::uint64_t>();
            t->label = j.at("label").get<double>();
            t->start = detail::jsonPoint(j.at("start"), s.d);
            t->forward = detail::jsonPath(lat, j.at("fwd"), s.escapeRadius);
            t->backward = detail::jsonPath(lat, j.at("bwd"), s.escapeRadius);
            t->forward.startIndex = j.value("fwdStart", std::size_t{0});
            t->backward.startIndex = j.value("bwdStart", std::size_t{0});
            t->truncated = j.at("truncated").get<bool>();
            t->forward.truncated = t->truncated;
            t->backward.truncated = t->truncated;
            t->generation = j.at("generation").get<int>();
            t->rebuildTrace();
            s.trajectories.push_back(std::move(t));
        }
        catch (PersistError const&)
        {
            throw;
        }
        catch (std::exception const& e)
        {
            fail(e.what());
        }
    }
    if (!out.empty() && out.back().size() != expected)
        fail("last soup truncated");
    return out;
}

}  // namespace ri::harness
