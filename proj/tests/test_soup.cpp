#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ri/analysis.hpp"
#include "ri/soup.hpp"

using namespace ri;

namespace {

GreenOracle const& green5()
{
    static GreenOracle const g(5);
    return g;
}

SoupBase ball(std::int64_t r)
{
    return SoupBase::makeBall(Point::origin(5), r);
}

}  // namespace

TEST(Sample, LevelValidation)
{
    EXPECT_THROW(sampleSoup(green5(), ball(1), 0.5, 0.5, 8, 1), std::invalid_argument);
    EXPECT_THROW(sampleSoup(green5(), ball(1), 0.6, 0.5, 8, 1), std::invalid_argument);
    EXPECT_THROW(sampleSoup(green5(), ball(1), -0.1, 0.5, 8, 1), std::invalid_argument);
    // Base must fit inside the escape ball.
    EXPECT_THROW(sampleSoup(green5(), ball(9), 0.0, 1.0, 8, 1), std::invalid_argument);
}

TEST(Sample, TrajectoryInvariants)
{
    auto const& g = green5();
    Lattice const lat(5);
    for (auto mode : {SamplerMode::equilibrium, SamplerMode::thinning})
    {
        SoupOptions so;
        so.mode = mode;
        auto const K = ball(2).materialize();
        PointSet const keys = toPointSet(lat, K);
        for (std::uint64_t r = 0; r < 10; ++r)
        {
            auto const s = sampleSoup(g, ball(2), 0.5, 2.0, 16, r, so);
            for (auto const& t : s.trajectories)
            {
                ASSERT_TRUE(keys.contains(lat.pack(t->start)));
                ASSERT_GE(t->label, 0.5);
                ASSERT_LE(t->label, 2.0);
                ASSERT_TRUE(t->trace.contains(lat.pack(t->start)));
                ASSERT_EQ(t->forward.points.front(), lat.pack(t->start));
                ASSERT_EQ(t->backward.points.front(), lat.pack(t->start));
                for (std::size_t k = 1; k < t->backward.points.size(); ++k)
                    ASSERT_FALSE(keys.contains(t->backward.points[k]));
                ASSERT_EQ(lat.l1Norm(t->forward.points.back()), 17);
                ASSERT_EQ(lat.l1Norm(t->backward.points.back()), 17);
            }
            ASSERT_GE(s.returnBound, 0.0);
        }
    }
}

TEST(Sample, Deterministic)
{
    auto const& g = green5();
    SoupOptions one;
    SoupOptions two;
    two.threads = 2;
    auto const a = sampleSoup(g, ball(2), 0.0, 1.0, 16, 99, one);
    auto const b = sampleSoup(g, ball(2), 0.0, 1.0, 16, 99, two);
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t i = 0; i < a.size(); ++i)
    {
        EXPECT_EQ(a.trajectories[i]->label, b.trajectories[i]->label);
        EXPECT_EQ(a.trajectories[i]->forward.points, b.trajectories[i]->forward.points);
        EXPECT_EQ(a.trajectories[i]->backward.points, b.trajectories[i]->backward.points);
    }
}

TEST(Sample, CountMeanIsUCap)
{
    auto const& g = green5();
    auto const K = ball(2).materialize();
    auto const table = equilibrium(K, g);
    SoupOptions so;
    so.table = &table;
    so.buildTraces = false;
    std::vector<std::uint64_t> counts;
    for (std::uint64_t r = 0; r < 2000; ++r)
        counts.push_back(sampleSoup(g, ball(2), 0.0, 1.0, 16, deriveSeed(1, StreamDomain::soup, r), so).size());
    auto const m = sampleMean(std::span<std::uint64_t const>(counts));
    EXPECT_LE(std::fabs(m.zScore(table.cap)), 3.0);
    EXPECT_TRUE(poissonGof(counts, table.cap).passes());
}

TEST(Sample, ShortIntervalScalesMean)
{
    auto const& g = green5();
    double const cap0 = 1.0 / g(Point::origin(5));
    double const eps = 0.05;
    std::vector<std::uint64_t> counts;
    for (std::uint64_t r = 0; r < 20000; ++r)
        counts.push_back(sampleSoup(g, ball(0), 1.0, 1.0 + eps, 8, deriveSeed(2, StreamDomain::soup, r)).size());
    auto const m = sampleMean(std::span<std::uint64_t const>(counts));
    EXPECT_LE(std::fabs(m.zScore(eps * cap0)), 3.0);
}

TEST(Sample, ThinningMatchesEquilibriumCount)
{
    auto const& g = green5();
    SoupOptions thin;
    thin.mode = SamplerMode::thinning;
    thin.buildTraces = false;
    std::vector<std::uint64_t> counts;
    for (std::uint64_t r = 0; r < 1000; ++r)
        counts.push_back(sampleSoup(g, ball(2), 0.0, 1.0, 16, deriveSeed(3, StreamDomain::soup, r), thin).size());
    double const cap = capacity(ball(2).materialize(), g);
    auto const m = sampleMean(std::span<std::uint64_t const>(counts));
    // Walks that leave the escape ball and would come back are kept, so
    // thinning can only overcount, by at most the truncation bound.
    auto const s = sampleSoup(g, ball(2), 0.0, 1.0, 16, 0, thin);
    EXPECT_LE(m.mean - cap, 3 * m.standardError() + cap * s.returnBound + 1e-12);
    EXPECT_GE(m.mean - cap, -3 * m.standardError());
}

TEST(Sample, StartsFollowNormalizedEquilibrium)
{
    auto const& g = green5();
    auto const K = ball(2).materialize();
    auto const table = equilibrium(K, g);
    SoupOptions so;
    so.table = &table;
    so.buildTraces = false;
    std::vector<std::uint64_t> hist(table.K.size(), 0);
    std::uint64_t n = 0;
    for (std::uint64_t r = 0; n < 30000; ++r)
    {
        auto const s = sampleSoup(g, ball(2), 0.0, 1.0, 16, deriveSeed(4, StreamDomain::soup, r), so);
        for (auto const& t : s.trajectories)
        {
            ++hist[static_cast<std::size_t>(table.indexOf(t->start))];
            ++n;
        }
    }
    std::vector<std::uint64_t> obs;
    std::vector<double> p;
    for (std::size_t i = 0; i < table.K.size(); ++i)
    {
        if (table.normEq[i] > 0)
        {
            obs.push_back(hist[i]);
            p.push_back(table.normEq[i]);
        }
        else
        {
            EXPECT_EQ(hist[i], 0u);
        }
    }
    EXPECT_TRUE(chiSquareGof(obs, p).passes());
}

TEST(Slice, Properties)
{
    auto const s = sampleSoup(green5(), ball(2), 0.0, 3.0, 16, 5);
    ASSERT_GT(s.size(), 20u);
    auto const all = slice(s, 0.0, 3.0);
    EXPECT_EQ(all.size(), s.size());
    EXPECT_EQ(slice(s, 1.5, 1.5).size(), 0u);
    auto const a = slice(s, 0.0, 1.2);
    auto const b = slice(s, 1.2, 3.0);
    EXPECT_EQ(a.size() + b.size(), s.size());
    EXPECT_EQ(slice(s, 0.5, 1.0).size() + slice(s, 1.0, 2.5).size(), slice(s, 0.5, 2.5).size());
    for (auto const& t : a.trajectories)
        EXPECT_LT(t->label, 1.2);
    EXPECT_THROW(slice(s, -1.0, 1.0), std::invalid_argument);
    EXPECT_THROW(slice(s, 2.0, 1.0), std::invalid_argument);
    EXPECT_THROW(slice(s, 0.0, 3.5), std::invalid_argument);
}

TEST(Slice, MonotoneInLevel)
{
    // Slicing a soup at a lower level keeps a subset of its trajectories.
    auto const s = sampleSoup(green5(), ball(1), 0.0, 2.0, 16, 6);
    auto const low = slice(s, 0.0, 1.0);
    for (auto const& t : low.trajectories)
        EXPECT_NE(std::find(s.trajectories.begin(), s.trajectories.end(), t), s.trajectories.end());
}

TEST(Slice, DisjointIntervalCountsUncorrelated)
{
    auto const& g = green5();
    SoupOptions so;
    so.buildTraces = false;
    std::vector<double> lo;
    std::vector<double> hi;
    for (std::uint64_t r = 0; r < 3000; ++r)
    {
        auto const s = sampleSoup(g, ball(1), 0.0, 2.0, 8, deriveSeed(7, StreamDomain::soup, r), so);
        lo.push_back(static_cast<double>(slice(s, 0.0, 1.0).size()));
        hi.push_back(static_cast<double>(slice(s, 1.0, 2.0).size()));
    }
    EXPECT_TRUE(pearson(lo, hi).withinSigma(3.0));
}

TEST(Interlacement, SetAndCounts)
{
    Lattice const lat(5);
    Soup empty;
    empty.d = 5;
    PointSet window = toPointSet(lat, ballPoints(Ball{Point::origin(5), 2}));
    EXPECT_TRUE(interlacementSet(empty, window).empty());
    EXPECT_EQ(countHitting(empty, window), 0u);

    auto const s = sampleSoup(green5(), ball(3), 0.0, 1.0, 24, 8);
    auto const I = interlacementSet(s, window);
    for (auto const& t : s.trajectories)
        if (window.contains(lat.pack(t->start)))
            EXPECT_TRUE(I.contains(lat.pack(t->start)));
    I.forEach([&](Lattice::Key k) { EXPECT_TRUE(window.contains(k)); });

    PointSet const K = toPointSet(lat, ball(3).materialize());
    EXPECT_EQ(countHitting(s, K), s.size());
    EXPECT_EQ(countHitting(s, PointSet{}), 0u);
    PointSet const small = toPointSet(lat, ballPoints(Ball{Point::origin(5), 1}));
    EXPECT_LE(countHitting(s, small), countHitting(s, window));
    EXPECT_LE(countHitting(s, window), countHitting(s, K));
}

TEST(Interlacement, HittingCountIsPoissonWithCapacity)
{
    // For A inside the base, the number of trajectories meeting A is
    // Poisson(u cap(A)).
    auto const& g = green5();
    Lattice const lat(5);
    std::vector<Point> const A{Point::origin(5), Point::unit(5, 0, 2)};
    PointSet const keys = toPointSet(lat, A);
    double const capA = capacity(A, g);
    std::vector<std::uint64_t> counts;
    for (std::uint64_t r = 0; r < 2000; ++r)
    {
        auto const s = sampleSoup(g, ball(3), 0.0, 1.0, 24, deriveSeed(9, StreamDomain::soup, r));
        counts.push_back(countHitting(s, keys));
    }
    EXPECT_TRUE(poissonGof(counts, capA).passes());
}
