#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "ri/analysis.hpp"
#include "ri/experiments.hpp"
#include "ri/rng.hpp"

using namespace ri;

namespace {

/// Plain summation over a wide range; a check on the windowed version.
double directShiftDistance(double mu, double mu0, std::int64_t s)
{
    auto pmf = [](double k, double m) {
        if (k < 0)
            return 0.0;
        if (m == 0)
            return k == 0 ? 1.0 : 0.0;
        return std::exp(k * std::log(m) - m - std::lgamma(k + 1));
    };
    double sum = 0;
    auto const top = static_cast<std::int64_t>(mu + 40 * std::sqrt(mu) + 200 + s);
    for (std::int64_t t = 0; t <= top; ++t)
        sum += std::fabs(pmf(static_cast<double>(t - s), mu - mu0) - pmf(static_cast<double>(t), mu));
    return sum;
}

}  // namespace

TEST(Wilson, KnownValues)
{
    auto const ci = wilson(0, 10);
    EXPECT_EQ(ci.lo, 0.0);
    EXPECT_NEAR(ci.hi, 0.2775, 1e-4);
    auto const half = wilson(50, 100);
    EXPECT_NEAR(half.lo, 0.4038, 1e-4);
    EXPECT_NEAR(half.hi, 0.5962, 1e-4);
    EXPECT_THROW(wilson(1, 0), std::invalid_argument);
    EXPECT_THROW(wilson(3, 2), std::invalid_argument);
    auto const e = estimateProbability(30, 100);
    EXPECT_DOUBLE_EQ(e.estimate, 0.3);
    EXPECT_TRUE(e.ci.contains(0.3));
    EXPECT_EQ(e.method, "wilson-95");
}

TEST(Wilson, Coverage)
{
    Stream rng(1);
    int covered = 0;
    double const p = 0.07;
    for (int i = 0; i < 2000; ++i)
    {
        std::uint64_t k = 0;
        for (int j = 0; j < 300; ++j)
            k += rng.uniform() < p ? 1 : 0;
        covered += wilson(k, 300).contains(p) ? 1 : 0;
    }
    EXPECT_NEAR(covered / 2000.0, 0.95, 0.015);
}

TEST(Gof, NullRejectionRateIsCalibrated)
{
    Stream rng(2);
    int rejected = 0;
    int const trials = 1000;
    for (int i = 0; i < trials; ++i)
    {
        std::vector<std::uint64_t> v(500);
        for (auto& x : v)
            x = rng.poisson(3.0);
        rejected += poissonGof(v, 3.0).passes() ? 0 : 1;
    }
    EXPECT_NEAR(rejected / static_cast<double>(trials), kSignificance, 0.01);
}

TEST(Gof, DetectsWrongMean)
{
    Stream rng(3);
    std::vector<std::uint64_t> v(5000);
    for (auto& x : v)
        x = rng.poisson(3.0);
    EXPECT_FALSE(poissonGof(v, 3.3).passes());
}

TEST(Gof, IndependenceAndTwoSample)
{
    Stream rng(4);
    std::vector<std::vector<double>> indep(3, std::vector<double>(3, 0.0));
    std::vector<std::vector<double>> dep(3, std::vector<double>(3, 0.0));
    for (int i = 0; i < 20000; ++i)
    {
        auto const a = rng.below(3);
        auto const b = rng.below(3);
        indep[a][b] += 1;
        dep[a][rng.uniform() < 0.2 ? a : b] += 1;
    }
    EXPECT_TRUE(chiSquareIndependence(indep).passes());
    EXPECT_FALSE(chiSquareIndependence(dep).passes());

    std::vector<std::int64_t> x(3000);
    std::vector<std::int64_t> y(3000);
    std::vector<std::int64_t> z(3000);
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        x[i] = static_cast<std::int64_t>(rng.poisson(2.0));
        y[i] = static_cast<std::int64_t>(rng.poisson(2.0));
        z[i] = static_cast<std::int64_t>(rng.poisson(2.0)) + 1;
    }
    EXPECT_TRUE(twoSampleTest(x, y).passes());
    EXPECT_FALSE(twoSampleTest(x, z).passes());
    EXPECT_THROW(twoSampleTest({}, y), std::invalid_argument);
}

TEST(Correlation, Pearson)
{
    std::vector<double> const x{1, 2, 3, 4, 5};
    std::vector<double> const y{2, 4, 6, 8, 10};
    std::vector<double> const z{5, 4, 3, 2, 1};
    EXPECT_NEAR(pearson(x, y).r, 1.0, 1e-12);
    EXPECT_NEAR(pearson(x, z).r, -1.0, 1e-12);
    EXPECT_FALSE(pearson(x, y).withinSigma(3.0));
    std::vector<double> const three{1, 2, 3};
    EXPECT_THROW(pearson(three, three), std::invalid_argument);
}

TEST(ShiftDistance, MatchesDirectSum)
{
    for (double mu : {2.0, 10.0, 100.0, 1000.0})
    {
        for (double mu0 : {0.5, 1.0, 1.9})
        {
            for (std::int64_t s : {0, 1, 3})
            {
                auto const r = poissonShiftDistanceDetailed({mu, mu0, s});
                double const ref = directShiftDistance(mu, mu0, s);
                EXPECT_NEAR(r.value, ref, 1e-9 + r.errorBound) << mu << " " << mu0 << " " << s;
                EXPECT_LT(r.errorBound, 1e-12);
                EXPECT_GE(r.value, 0.0);
                EXPECT_LE(r.value, 2.0);
            }
        }
    }
}

TEST(ShiftDistance, ShiftByMeanGapIsBest)
{
    // With s close to mu0 the two laws nearly coincide for large mu.
    double const mu = 1e4;
    double const best = poissonShiftDistance({mu, 10.0, 10});
    EXPECT_LT(best, poissonShiftDistance({mu, 10.0, 0}));
    EXPECT_LT(best, poissonShiftDistance({mu, 10.0, 20}));
    EXPECT_LT(best, 1e-3);
}

TEST(ShiftDistance, DecreasesInMu)
{
    std::vector<double> v;
    for (double mu : {10.0, 100.0, 1e3, 1e4, 1e5})
        v.push_back(poissonShiftDistance({mu, 2.0, 0}));
    EXPECT_TRUE(strictlyDecreasing(v));
}

TEST(ShiftDistance, InvalidInput)
{
    EXPECT_THROW(poissonShiftDistance({1.0, 1.0, 0}), std::invalid_argument);
    EXPECT_THROW(poissonShiftDistance({1.0, -0.5, 0}), std::invalid_argument);
    EXPECT_THROW(poissonShiftDistance({10.0, 1.0, -1}), std::invalid_argument);
    EXPECT_THROW(poissonShiftDistance({INFINITY, 1.0, 0}), std::invalid_argument);
}

TEST(DecayFit, ExactPowerLaw)
{
    std::vector<double> x{2, 4, 8, 16};
    std::vector<double> y;
    for (double g : x)
        y.push_back(3.0 * std::pow(g, -2.5));
    auto const r = fitLogLog(x, y);
    EXPECT_NEAR(r.slope, -2.5, 1e-6);
    EXPECT_NEAR(r.intercept, std::log(3.0), 1e-6);

    std::vector<DecaySample> s;
    for (double g : x)
    {
        auto const n = static_cast<std::uint64_t>(1e9);
        s.push_back({g, static_cast<std::uint64_t>(std::llround(0.5 * std::pow(g, -2.5) * 1e9)), n});
    }
    EXPECT_NEAR(fitDecayExponent(s).slope, -2.5, 1e-4);
}

TEST(DecayFit, SlopeIntervalCoverage)
{
    Stream rng(5);
    int covered = 0;
    for (int rep = 0; rep < 100; ++rep)
    {
        std::vector<DecaySample> s;
        for (double g : {2.0, 4.0, 8.0, 16.0})
        {
            double const p = 0.8 * std::pow(g, -2.0);
            std::uint64_t const n = 20000;
            std::uint64_t k = 0;
            for (std::uint64_t i = 0; i < n; ++i)
                k += rng.uniform() < p ? 1 : 0;
            s.push_back({g, k, n});
        }
        covered += fitDecayExponent(s).slopeCI.contains(-2.0) ? 1 : 0;
    }
    EXPECT_GE(covered, 90);
}

TEST(DecayFit, Errors)
{
    std::vector<DecaySample> three{{1, 10, 100}, {2, 10, 100}, {3, 10, 100}};
    EXPECT_THROW(fitDecayExponent(three), std::invalid_argument);
    std::vector<DecaySample> dry{{1, 1, 100}, {2, 0, 100}, {3, 2, 100}, {4, 4, 100}};
    EXPECT_THROW(fitDecayExponent(dry), std::invalid_argument);
    std::vector<DecaySample> sparse{{1, 50, 100}, {2, 20, 100}, {3, 2, 100}, {4, 1, 100}};
    auto const r = fitDecayExponent(sparse);
    EXPECT_EQ(r.pointsUsed.size(), 2u);
    EXPECT_EQ(r.notes.size(), 2u);
}

TEST(Moments, SampleMeanAndMonotone)
{
    std::vector<int> const v{1, 2, 3, 4};
    auto const m = sampleMean(std::span<int const>(v));
    EXPECT_DOUBLE_EQ(m.mean, 2.5);
    EXPECT_NEAR(m.variance, 5.0 / 3, 1e-15);
    std::vector<double> const dec{3, 2, 1};
    std::vector<double> const flat{1, 1, 2};
    EXPECT_TRUE(strictlyDecreasing(dec));
    EXPECT_FALSE(strictlyDecreasing(flat));
    EXPECT_TRUE(nonDecreasing(flat));
    EXPECT_FALSE(nonDecreasing(dec));
}

TEST(NestedCounts, IdenticalSetsAreTrivial)
{
    // K = B: the difference is identically zero.
    Stream rng(6);
    std::vector<NestedCounts> v;
    for (int i = 0; i < 3000; ++i)
    {
        auto const k = rng.poisson(1.5);
        v.push_back({k, k});
    }
    auto const rep = nestedCountCheck(v);
    EXPECT_DOUBLE_EQ(rep.differenceMean, 0.0);
    ASSERT_FALSE(rep.notes.empty());
    for (auto const& row : rep.rows)
        EXPECT_NEAR(row.shiftIdentityTV, 0.0, 1e-12);
}

TEST(NestedCounts, IndependentPoissonData)
{
    Stream rng(7);
    std::vector<NestedCounts> v;
    for (int i = 0; i < 20000; ++i)
    {
        auto const k = rng.poisson(2.0);
        v.push_back({k, k + rng.poisson(3.0)});
    }
    auto const rep = nestedCountCheck(v, 3.0);
    EXPECT_TRUE(rep.independence.passes());
    EXPECT_TRUE(rep.differenceGof.passes());
    EXPECT_GE(rep.rows.size(), 4u);
    for (auto const& row : rep.rows)
    {
        EXPECT_GE(row.events, kMinConditioningEvents);
        EXPECT_TRUE(row.shiftIdentityTest.passes()) << "s=" << row.s;
    }
    std::vector<NestedCounts> bad{{3, 2}};
    EXPECT_THROW(nestedCountCheck(bad), std::invalid_argument);
    EXPECT_THROW(nestedCountCheck(std::span<NestedCounts const>{}), std::invalid_argument);
}

TEST(LineDensity, SyntheticIndicators)
{
    Stream rng(8);
    double const cap0 = 0.9;
    double const u = 0.5;
    double const p = 1.0 - std::exp(-u * cap0);
    auto make = [&](std::size_t replicas) {
        std::vector<std::vector<std::uint8_t>> ind(replicas, std::vector<std::uint8_t>(50));
        for (auto& row : ind)
            for (auto& b : row)
                b = rng.uniform() < p ? 1 : 0;
        return lineDensity(ind, u, cap0);
    };
    auto const a = make(500);
    auto const b = make(2000);
    EXPECT_DOUBLE_EQ(a.expected, p);
    EXPECT_LT(std::fabs(a.zScore), 3.0);
    EXPECT_LT(std::fabs(b.zScore), 3.0);
    EXPECT_TRUE(b.ci.contains(p));
    // Four times the replicas halves the interval.
    EXPECT_NEAR(a.ci.width() / b.ci.width(), 2.0, 0.4);
    EXPECT_EQ(a.runningAverage.size(), 50u);
    std::vector<std::vector<std::uint8_t>> ragged{{1, 0}, {1}};
    EXPECT_THROW(lineDensity(ragged, u, cap0), std::invalid_argument);
}

TEST(LineDensity, SparseAtLowLevel)
{
    GreenOracle const g(5);
    auto const r = rayDensity(g, 20, 1e-3, 24, 300, 9, 1);
    EXPECT_LT(r.terminal, 1e-2);
    EXPECT_LT(std::fabs(r.terminal - r.expected), 3 * r.standardError + 1e-3);
}
