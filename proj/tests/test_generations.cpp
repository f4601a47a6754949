#include <algorithm>
#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ri/experiments.hpp"
#include "ri/generations.hpp"

using namespace ri;

namespace {

GreenOracle const& green5()
{
    static GreenOracle const g(5);
    return g;
}

GenerationOptions small()
{
    GenerationOptions o;
    o.escapeRadius = 16;
    o.windowRadius = 4;
    return o;
}

}  // namespace

TEST(Generations, Invariants)
{
    Lattice const lat(5);
    for (std::uint64_t r = 0; r < 30; ++r)
    {
        auto const st = growGenerations(green5(), 0.5, 3, deriveSeed(1, StreamDomain::replica, r), small());
        ASSERT_TRUE(st.complete) << st.failure;
        ASSERT_EQ(st.depth(), 3);
        ASSERT_EQ(st.vSets.size(), 4u);
        ASSERT_EQ(st.discarded.size(), 4u);
        for (int k = 0; k <= 3; ++k)
        {
            auto const base = st.vSet(k - 1);
            auto const avoid = toPointSet(lat, st.vSet(k - 2));
            auto const here = st.vSet(k);
            // Nested V-sets inside the window.
            for (auto const& p : base)
                ASSERT_TRUE(std::binary_search(here.begin(), here.end(), p));
            for (auto const& p : here)
                ASSERT_LE(l1Norm(p), 4);
            for (auto const& t : st.generations[static_cast<std::size_t>(k)].trajectories)
            {
                ASSERT_TRUE(std::binary_search(base.begin(), base.end(), t->start));
                if (k >= 1)
                    ASSERT_FALSE(t->hits(avoid));
            }
        }
        EXPECT_TRUE(st.covered(Point::origin(5), 3) == !st.generations.front().empty());
    }
}

TEST(Generations, EmptyGenerationZeroStopsGrowth)
{
    // At small u most stacks start empty; V then never grows.
    int empties = 0;
    for (std::uint64_t r = 0; r < 40; ++r)
    {
        auto const st = growGenerations(green5(), 0.05, 3, deriveSeed(2, StreamDomain::replica, r), small());
        if (!st.generations.front().empty())
            continue;
        ++empties;
        for (auto const& g : st.generations)
            EXPECT_TRUE(g.empty());
        for (auto const& v : st.vSets)
            EXPECT_EQ(v, std::vector<Point>{Point::origin(5)});
        EXPECT_FALSE(st.covered(Point::origin(5), 3));
    }
    EXPECT_GT(empties, 20);
}

TEST(Generations, Deterministic)
{
    GenerationOptions two = small();
    two.threads = 2;
    auto const a = growGenerations(green5(), 1.0, 2, 5, small());
    auto const b = growGenerations(green5(), 1.0, 2, 5, two);
    EXPECT_EQ(a.vSets, b.vSets);
    EXPECT_EQ(a.discarded, b.discarded);
    EXPECT_EQ(a.seeds, b.seeds);
}

TEST(Generations, Errors)
{
    EXPECT_THROW(growGenerations(green5(), 1.0, 7, 1, small()), std::invalid_argument);
    EXPECT_THROW(growGenerations(green5(), 1.0, -1, 1, small()), std::invalid_argument);
    EXPECT_THROW(growGenerations(green5(), 0.0, 1, 1, small()), std::invalid_argument);
    auto const st = growGenerations(green5(), 1.0, 1, 1, small());
    EXPECT_THROW(conditionalCounts(st), std::invalid_argument);
    Point const o = Point::origin(5);
    EXPECT_THROW(reachProbability(green5(), 0, o, 1.0, 100, 1), std::invalid_argument);
    EXPECT_THROW(reachProbability(green5(), 5, o, 1.0, 100, 1), std::invalid_argument);
    EXPECT_THROW(reachProbability(green5(), 2, o, 1.0, 99, 1), std::invalid_argument);
}

TEST(Generations, SizeLimitMarksIncomplete)
{
    GenerationOptions o = small();
    o.windowRadius = 0;
    o.sizeLimit = 20;
    auto const st = growGenerations(green5(), 3.0, 3, 3, o);
    EXPECT_FALSE(st.complete);
    EXPECT_FALSE(st.failure.empty());
    EXPECT_LT(st.depth(), 3);
}

TEST(Generations, GenerationZeroIsPoisson)
{
    double const u = 2.0;
    GenerationOptions o = small();
    std::vector<std::uint64_t> counts;
    for (std::uint64_t r = 0; r < 10000; ++r)
        counts.push_back(growGenerations(green5(), u, 0, deriveSeed(4, StreamDomain::replica, r), o)
                             .generations.front()
                             .size());
    double const cap0 = 1.0 / green5()(Point::origin(5));
    EXPECT_TRUE(poissonGof(counts, u * cap0).passes());
}

TEST(Generations, ConditionalCountsMatchMeans)
{
    GenerationOptions o = small();
    o.windowRadius = 3;
    auto const res = generationCounts(green5(), 1.0, 2, o, 300, 6, 1);
    EXPECT_EQ(res.incomplete, 0u);
    ASSERT_EQ(res.rows.size(), 3u);
    EXPECT_TRUE(res.generationZeroGof.passes());
    for (auto const& row : res.rows)
    {
        EXPECT_LT(std::fabs(row.zScore), 4.0) << "k=" << row.k;
        if (row.k > 0)
            EXPECT_TRUE(row.keptVsDiscarded.withinSigma(3.0)) << "k=" << row.k;
    }
}

TEST(Reach, OriginMatchesOnePointFormula)
{
    double const u = 0.5;
    double const p = 1.0 - std::exp(-u / green5()(Point::origin(5)));
    ReachOptions o;
    o.generation = small();
    std::uint64_t const n = 4000;
    auto const est = reachProbability(green5(), 1, Point::origin(5), u, n, 7, o);
    EXPECT_LE(std::fabs(est.probability.estimate - p), 3 * std::sqrt(p * (1 - p) / n));
    // At x = 0 a longer chain adds nothing: generation 0 decides coverage.
    auto const two = reachProbability(green5(), 2, Point::origin(5), u, n, 8, o);
    EXPECT_LE(std::fabs(two.probability.estimate - p), 3 * std::sqrt(p * (1 - p) / n));
}

TEST(Reach, StackAndTargetRoutesAgree)
{
    ReachOptions stack;
    stack.generation = small();
    stack.method = ReachMethod::stack;
    ReachOptions target = stack;
    target.method = ReachMethod::target;
    Point const x = Point::unit(5, 0, 3);
    std::uint64_t const n = 3000;
    auto const a = reachProbability(green5(), 2, x, 1.0, n, 8, stack);
    auto const b = reachProbability(green5(), 2, x, 1.0, n, 9, target);
    double const p = 0.5 * (a.probability.estimate + b.probability.estimate);
    ASSERT_GT(p, 0.0);
    EXPECT_LE(std::fabs(a.probability.estimate - b.probability.estimate),
              3 * std::sqrt(2 * p * (1 - p) / n) + a.returnBound + b.returnBound);
}
