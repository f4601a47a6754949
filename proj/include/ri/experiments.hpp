#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "generations.hpp"
#include "lattice.hpp"
#include "parallel.hpp"
#include "point_set.hpp"
#include "potential.hpp"
#include "relations.hpp"
#include "rng.hpp"
#include "soup.hpp"
#include "walk.hpp"

// Experiment drivers: each runs one study end to end from a seed and
// returns typed results. The harness turns them into reports; the
// acceptance binary reads the same results.

namespace ri {

namespace detail {

/// Canonical displacements (non-negative, ascending) with l1 norm <= r.
inline std::vector<Point> canonicalDisplacements(int d, std::int64_t r)
{
    std::vector<Point> out;
    forEachInBall(Ball{Point::origin(d), r}, [&](Point const& p) {
        for (int j = 0; j < d; ++j)
        {
            if (p.c[j] < 0 || (j > 0 && p.c[j] < p.c[j - 1]))
                return;
        }
        out.push_back(p);
    });
    return out;
}

/// Run a regression; a fit that cannot be made yields NaN with the reason.
template<class F>
RegressionResult safeFit(F&& fit)
{
    try
    {
        return fit();
    }
    catch (std::invalid_argument const& e)
    {
        RegressionResult r;
        r.slope = r.intercept = r.slopeSE = std::nan("");
        r.slopeCI = {std::nan(""), std::nan("")};
        r.notes.push_back(e.what());
        return r;
    }
}

}  // namespace detail

//---------------------------------------------------------------------------//
// Green cross-validation
//---------------------------------------------------------------------------//

struct GreenRow
{
    Point x;
    double timeIntegral = 0.0;
    double box = 0.0;
    double relativeDifference = 0.0;
    double harmonicResidual = 0.0;
};

struct GreenCrossCheck
{
    int d = 0;
    int boxRadius = 0;
    double boxChange = 0.0;
    std::vector<GreenRow> rows;
    double maxRelativeDifference = 0.0;
    double maxHarmonicResidual = 0.0;
};

/// Both oracles on every canonical displacement with |x| <= radius.
inline GreenCrossCheck greenCrossValidation(int d,
                                            std::int64_t radius,
                                            GreenOptions base = {})
{
    GreenOptions ti = base;
    ti.method = GreenMethod::time_integral;
    GreenOptions bx = base;
    bx.method = GreenMethod::absorbing_box;
    GreenOracle const a(d, ti);
    GreenOracle const b(d, bx);
    GreenCrossCheck out;
    out.d = d;
    auto const& box = b.box();
    out.boxRadius = box.radius();
    out.boxChange = b.boxChange();
    for (auto const& x : detail::canonicalDisplacements(d, radius))
    {
        GreenRow row;
        row.x = x;
        row.timeIntegral = a(x);
        row.box = b(x);
        row.relativeDifference
            = std::fabs(row.timeIntegral - row.box) / row.timeIntegral;
        row.harmonicResidual = box.harmonicResidual(x);
        out.maxRelativeDifference
            = std::max(out.maxRelativeDifference, row.relativeDifference);
        out.maxHarmonicResidual
            = std::max(out.maxHarmonicResidual, row.harmonicResidual);
        out.rows.push_back(row);
    }
    return out;
}

//---------------------------------------------------------------------------//
// Equilibrium measure against escape frequencies
//---------------------------------------------------------------------------//

struct EscapeRow
{
    Point x;
    double solver = 0.0;
    std::uint64_t escapes = 0;
    std::uint64_t walks = 0;
    double frequency = 0.0;
    double sigma = 0.0;
    /// |frequency - solver| / (3 sigma + bound); <= 1 passes.
    double ratio = 0.0;
};

struct EscapeCheck
{
    PotentialTable table;
    double truncationBound = 0.0;
    std::vector<EscapeRow> rows;
    bool allWithin() const
    {
        return std::all_of(rows.begin(), rows.end(), [](auto const& r) {
            return r.ratio <= 1.0;
        });
    }
};

/*!
 * Escape frequencies from every site of K against e_K. A walk escapes when
 * it leaves the escape ball before returning to K; the truncation bound
 * caps the chance of a return after that exit.
 */
inline EscapeCheck equilibriumMonteCarlo(GreenOracle const& green,
                                         std::vector<Point> K,
                                         std::uint64_t walksPerSite,
                                         std::int64_t escapeRadius,
                                         std::uint64_t seed,
                                         unsigned threads)
{
    int const d = green.dim();
    Lattice const lat(d);
    EscapeCheck out;
    out.table = equilibrium(K, green);
    Ball const escape{Point::origin(d), escapeRadius};
    out.truncationBound = truncationReturnBound(out.table, green, escape);
    PointSet const keys = toPointSet(lat, out.table.K);
    std::size_t const n = out.table.K.size();
    out.rows.resize(n);
    parallelFor(n, threads, [&](std::size_t i) {
        Stream rng = deriveStream(seed, StreamDomain::replica, i);
        EscapeRow row;
        row.x = out.table.K[i];
        row.solver = out.table.eq[i];
        row.walks = walksPerSite;
        for (std::uint64_t w = 0; w < walksPerSite; ++w)
            row.escapes += escapes(lat, row.x, keys, escape, rng) ? 1 : 0;
        row.frequency = static_cast<double>(row.escapes)
                        / static_cast<double>(walksPerSite);
        row.sigma = std::sqrt(row.solver * (1.0 - row.solver)
                              / static_cast<double>(walksPerSite));
        double const allowed = 3.0 * row.sigma + out.truncationBound;
        double const dev = std::fabs(row.frequency - row.solver);
        row.ratio = allowed > 0 ? dev / allowed : (dev == 0 ? 0.0 : INFINITY);
        out.rows[i] = row;
    });
    return out;
}

//---------------------------------------------------------------------------//
// Hitting probabilities
//---------------------------------------------------------------------------//

struct HittingExponent
{
    std::vector<std::int64_t> exactRadii;
    std::vector<double> exactValues;
    RegressionResult exact;
    std::vector<std::int64_t> mcRadii;
    std::vector<DecaySample> mcSamples;
    RegressionResult monteCarlo;
    double truncationBound = 0.0;
};

/*!
 * Decay of P_0[H_x < infinity] = G(x)/G(0) along the first axis: exact
 * oracle values on exactRadii and walk frequencies on mcRadii (one walk
 * per trial tests all targets). Regressions are on log |x|.
 */
inline HittingExponent hittingExponent(GreenOracle const& green,
                                       std::vector<std::int64_t> exactRadii,
                                       std::vector<std::int64_t> mcRadii,
                                       std::uint64_t walks,
                                       std::int64_t escapeRadius,
                                       std::uint64_t seed,
                                       unsigned threads)
{
    int const d = green.dim();
    Lattice const lat(d);
    HittingExponent out;
    out.exactRadii = exactRadii;
    double const g0 = green(Point::origin(d));
    std::vector<double> xs;
    for (auto r : exactRadii)
    {
        out.exactValues.push_back(green(Point::unit(d, 0, r)) / g0);
        xs.push_back(static_cast<double>(r));
    }
    out.exact = detail::safeFit([&] { return fitLogLog(xs, out.exactValues); });

    out.mcRadii = mcRadii;
    std::vector<Lattice::Key> targets;
    std::int64_t rmax = 0;
    for (auto r : mcRadii)
    {
        targets.push_back(lat.pack(Point::unit(d, 0, r)));
        rmax = std::max(rmax, r);
    }
    Ball const escape{Point::origin(d), escapeRadius};
    std::size_t const chunks = std::max<std::size_t>(1, threads) * 8;
    std::vector<std::vector<std::uint64_t>> hits(
        chunks, std::vector<std::uint64_t>(targets.size(), 0));
    parallelFor(chunks, threads, [&](std::size_t c) {
        std::uint64_t const lo = walks * c / chunks;
        std::uint64_t const hi = walks * (c + 1) / chunks;
        std::vector<char> seen(targets.size());
        for (std::uint64_t w = lo; w < hi; ++w)
        {
            Stream rng = deriveStream(seed, StreamDomain::replica, w);
            std::fill(seen.begin(), seen.end(), 0);
            walkFrom(lat,
                     lat.pack(Point::origin(d)),
                     escape,
                     rng,
                     [&](Lattice::Key k, std::uint64_t) {
                         for (std::size_t t = 0; t < targets.size(); ++t)
                             if (k == targets[t])
                                 seen[t] = 1;
                         return true;
                     });
            for (std::size_t t = 0; t < targets.size(); ++t)
                hits[c][t] += static_cast<std::uint64_t>(seen[t]);
        }
    });
    for (std::size_t t = 0; t < targets.size(); ++t)
    {
        DecaySample s;
        s.gauge = static_cast<double>(mcRadii[t]);
        s.trials = walks;
        for (auto const& h : hits)
            s.successes += h[t];
        out.mcSamples.push_back(s);
    }
    out.monteCarlo = detail::safeFit([&] { return fitDecayExponent(out.mcSamples); });
    // A walk leaving the ball returns to the target with at most this
    // probability.
    out.truncationBound = truncationReturnBound(
        1.0 / green(Point::origin(d)),
        std::vector<Point>{Point::unit(d, 0, rmax)},
        green,
        escape);
    return out;
}

//---------------------------------------------------------------------------//
// Soup structure
//---------------------------------------------------------------------------//

struct SoupStructure
{
    double cap = 0.0;
    double u = 0.0;
    std::uint64_t replicas = 0;
    std::vector<std::uint64_t> counts;
    TestResult countGof;
    MeanEstimate countMean;
    CorrelationResult halves;
    std::uint64_t startSamples = 0;
    TestResult startGof;
    double truncationBound = 0.0;
};

/*!
 * Replicated soups on a ball: Poisson law of the count, independence of
 * counts in the two label halves, and the start-point law against the
 * normalized equilibrium measure (first maxStarts trajectories).
 */
inline SoupStructure soupStructure(GreenOracle const& green,
                                   std::int64_t baseRadius,
                                   double u,
                                   std::int64_t escapeRadius,
                                   std::uint64_t replicas,
                                   std::uint64_t maxStarts,
                                   std::uint64_t seed,
                                   unsigned threads)
{
    int const d = green.dim();
    SoupBase const base = SoupBase::makeBall(Point::origin(d), baseRadius);
    auto const K = base.materialize();
    auto const table = equilibrium(K, green);
    SoupStructure out;
    out.cap = table.cap;
    out.u = u;
    out.replicas = replicas;
    out.counts.assign(replicas, 0);
    std::vector<double> low(replicas);
    std::vector<double> high(replicas);
    std::vector<std::vector<std::uint32_t>> starts(replicas);
    std::vector<double> bounds(replicas);
    SoupOptions so;
    so.mode = SamplerMode::equilibrium;
    so.table = &table;
    so.buildTraces = false;
    parallelFor(replicas, threads, [&](std::size_t r) {
        std::uint64_t n = 0;
        std::uint64_t lo = 0;
        auto const meta = streamSoup(
            green, base, 0.0, u, escapeRadius,
            deriveSeed(seed, StreamDomain::replica, r), so,
            [&](TrajectoryPtr const& t) {
                ++n;
                if (t->label < 0.5 * u)
                    ++lo;
                auto it = std::lower_bound(table.K.begin(), table.K.end(),
                                           t->start);
                starts[r].push_back(
                    static_cast<std::uint32_t>(it - table.K.begin()));
            });
        out.counts[r] = n;
        low[r] = static_cast<double>(lo);
        high[r] = static_cast<double>(n - lo);
        bounds[r] = meta.truncationBound(n);
    });
    out.countGof = poissonGof(out.counts, u * table.cap);
    out.countMean = sampleMean(std::span<std::uint64_t const>(out.counts));
    out.halves = pearson(low, high);
    std::vector<std::uint64_t> hist(K.size(), 0);
    for (auto const& row : starts)
    {
        for (auto s : row)
        {
            if (out.startSamples >= maxStarts)
                break;
            ++hist[s];
            ++out.startSamples;
        }
    }
    std::vector<std::uint64_t> obs;
    std::vector<double> prob;
    for (std::size_t i : table.support)
    {
        obs.push_back(hist[i]);
        prob.push_back(table.normEq[i]);
    }
    out.startGof = chiSquareGof(obs, prob, 0);
    out.truncationBound = *std::max_element(bounds.begin(), bounds.end());
    return out;
}

//---------------------------------------------------------------------------//
// Poisson lemmas
//---------------------------------------------------------------------------//

struct ShiftDistanceGrid
{
    std::vector<double> mus;
    /// values[(mu0, s)] along mus (NaN where mu0 >= mu).
    std::map<std::pair<int, int>, std::vector<double>> values;
    bool monotone = true;
    double worstAtLargest = 0.0;
    std::pair<int, int> worstCase{0, 0};
};

inline ShiftDistanceGrid shiftDistanceGrid(std::vector<double> mus,
                                           int maxMu0,
                                           int maxShift)
{
    ShiftDistanceGrid g;
    g.mus = mus;
    for (int mu0 = 0; mu0 <= maxMu0; ++mu0)
    {
        for (int s = 0; s <= maxShift; ++s)
        {
            std::vector<double> v;
            std::vector<double> valid;
            for (double mu : mus)
            {
                if (mu0 >= mu)
                {
                    v.push_back(std::nan(""));
                    continue;
                }
                double const x = poissonShiftDistance(
                    {mu, static_cast<double>(mu0), s});
                v.push_back(x);
                valid.push_back(x);
            }
            // Non-increasing, up to summation error.
            for (std::size_t i = 1; i < valid.size(); ++i)
                if (valid[i] > valid[i - 1] + 1e-10)
                    g.monotone = false;
            if (!valid.empty() && valid.back() > g.worstAtLargest)
            {
                g.worstAtLargest = valid.back();
                g.worstCase = {mu0, s};
            }
            g.values[{mu0, s}] = std::move(v);
        }
    }
    return g;
}

struct NestedRadius
{
    std::int64_t rho = 0;
    std::int64_t escapeRadius = 0;
    double capB = 0.0;
    double capK = 0.0;
    NestedCountReport report;
};

/*!
 * Nested counts for K = {0} inside B = ball(0, rho): per replica, the
 * number of trajectories of the soup on B and the number of those visiting
 * 0. Soups on B use the thinning sampler, so cap(B) is never needed for
 * sampling; it is solved only to supply the expected mean of the
 * difference when B is small enough.
 */
inline NestedRadius nestedCounts(GreenOracle const& green,
                                 std::int64_t rho,
                                 double u,
                                 std::int64_t escapeRadius,
                                 std::uint64_t replicas,
                                 std::uint64_t seed,
                                 unsigned threads)
{
    int const d = green.dim();
    Lattice const lat(d);
    NestedRadius out;
    out.rho = rho;
    out.escapeRadius = escapeRadius;
    SoupBase const base = SoupBase::makeBall(Point::origin(d), rho);
    out.capK = capacity(std::vector<Point>{Point::origin(d)}, green);
    out.capB = ballSize(d, rho) <= kMaxEquilibriumSize
                   ? capacity(base.materialize(), green)
                   : std::nan("");
    PointSet zero;
    zero.insert(lat.pack(Point::origin(d)));
    std::vector<NestedCounts> counts(replicas);
    SoupOptions so;
    so.mode = SamplerMode::thinning;
    so.buildTraces = false;
    parallelFor(replicas, threads, [&](std::size_t r) {
        NestedCounts c;
        streamSoup(green, base, 0.0, u, escapeRadius,
                   deriveSeed(seed, StreamDomain::replica, r), so,
                   [&](TrajectoryPtr const& t) {
                       ++c.etaB;
                       if (t->hits(zero))
                           ++c.etaK;
                   });
        counts[r] = c;
    });
    double const expected
        = std::isnan(out.capB) ? -1.0 : u * (out.capB - out.capK);
    out.report = nestedCountCheck(counts, expected);
    return out;
}

//---------------------------------------------------------------------------//
// One-point function
//---------------------------------------------------------------------------//

struct OnePointDensity
{
    double cap0 = 0.0;
    double expected = 0.0;
    MeanEstimate density;
    std::uint64_t windowSize = 0;
    double truncationBound = 0.0;
};

/// Fraction of window points covered, for soups on a ball containing it.
inline OnePointDensity onePointDensity(GreenOracle const& green,
                                       std::int64_t baseRadius,
                                       std::int64_t windowRadius,
                                       double u,
                                       std::int64_t escapeRadius,
                                       std::uint64_t replicas,
                                       std::uint64_t seed,
                                       unsigned threads)
{
    int const d = green.dim();
    Lattice const lat(d);
    if (windowRadius > baseRadius)
        throw std::invalid_argument("onePointDensity: window exceeds base");
    OnePointDensity out;
    out.cap0 = capacity(std::vector<Point>{Point::origin(d)}, green);
    out.expected = 1.0 - std::exp(-u * out.cap0);
    auto const window_pts = ballPoints(Ball{Point::origin(d), windowRadius});
    PointSet const window = toPointSet(lat, window_pts);
    out.windowSize = window.size();
    SoupBase const base = SoupBase::makeBall(Point::origin(d), baseRadius);
    std::optional<PotentialTable> table;
    SoupOptions so;
    if (ballSize(d, baseRadius) <= kMaxEquilibriumSize)
    {
        table = equilibrium(base.materialize(), green);
        so.table = &*table;
    }
    std::vector<double> frac(replicas);
    std::vector<double> bounds(replicas);
    parallelFor(replicas, threads, [&](std::size_t r) {
        Soup const s = sampleSoup(green, base, 0.0, u, escapeRadius,
                                  deriveSeed(seed, StreamDomain::replica, r), so);
        frac[r] = static_cast<double>(interlacementSet(s, window).size())
                  / static_cast<double>(window.size());
        bounds[r] = s.truncationBound();
    });
    out.density = sampleMean(std::span<double const>(frac));
    out.truncationBound = *std::max_element(bounds.begin(), bounds.end());
    return out;
}

/// Occupation indicators of x_n = n e1, n = 0..length-1, per replica.
inline LineDensityReport rayDensity(GreenOracle const& green,
                                    std::int64_t length,
                                    double u,
                                    std::int64_t escapeRadius,
                                    std::uint64_t replicas,
                                    std::uint64_t seed,
                                    unsigned threads)
{
    int const d = green.dim();
    Lattice const lat(d);
    std::vector<Point> ray;
    for (std::int64_t n = 0; n < length; ++n)
        ray.push_back(Point::unit(d, 0, n));
    SoupBase const base = SoupBase::makePoints(ray);
    std::vector<std::vector<std::uint8_t>> ind(replicas);
    parallelFor(replicas, threads, [&](std::size_t r) {
        Soup const s = sampleSoup(green, base, 0.0, u, escapeRadius,
                                  deriveSeed(seed, StreamDomain::replica, r));
        auto& row = ind[r];
        row.assign(ray.size(), 0);
        for (std::size_t n = 0; n < ray.size(); ++n)
        {
            auto const k = lat.pack(ray[n]);
            for (auto const& t : s.trajectories)
            {
                if (t->trace.contains(k))
                {
                    row[n] = 1;
                    break;
                }
            }
        }
    });
    double const cap0 = capacity(std::vector<Point>{Point::origin(d)}, green);
    return lineDensity(ind, u, cap0);
}

//---------------------------------------------------------------------------//
// Decay of two-point relations
//---------------------------------------------------------------------------//

struct SphereDecay
{
    std::vector<std::int64_t> radii;
    std::vector<MeanDecaySample> samples;
    std::vector<std::uint64_t> nonzero;
    RegressionResult fit;
    double truncationBound = 0.0;
};

namespace detail {

/// Per radius r: number of points of the set at l1 distance r from 0.
template<class ForEachKey>
std::vector<std::uint64_t> sphereHits(Lattice const& lat,
                                      std::span<std::int64_t const> radii,
                                      ForEachKey&& forEachKey)
{
    std::vector<std::uint64_t> c(radii.size(), 0);
    forEachKey([&](Lattice::Key k) {
        auto const n = lat.l1Norm(k);
        for (std::size_t i = 0; i < radii.size(); ++i)
            if (radii[i] == n)
                ++c[i];
    });
    return c;
}

inline SphereDecay finishSphereDecay(int d,
                                     std::vector<std::int64_t> radii,
                                     std::vector<std::vector<double>> const& frac)
{
    SphereDecay out;
    out.radii = radii;
    for (std::size_t i = 0; i < radii.size(); ++i)
    {
        std::vector<double> v;
        std::uint64_t nz = 0;
        for (auto const& row : frac)
        {
            v.push_back(row[i]);
            nz += row[i] > 0 ? 1 : 0;
        }
        out.samples.push_back(
            {static_cast<double>(radii[i] + 1), sampleMean(std::span<double const>(v))});
        out.nonzero.push_back(nz);
    }
    (void)d;
    out.fit = detail::safeFit([&] { return fitMeanDecay(out.samples, out.nonzero); });
    return out;
}

}  // namespace detail

/*!
 * P[0 M_{0,u} x] averaged over x uniform on the l1 sphere |x| = r, per r,
 * regressed on log gauge. A replica is one soup on {0}: its trajectories
 * are exactly those covering 0, and the covered fraction of the sphere is
 * an unbiased estimate of the averaged probability.
 */
inline SphereDecay relationMDecay(GreenOracle const& green,
                                  std::vector<std::int64_t> radii,
                                  double u,
                                  std::int64_t escapeRadius,
                                  std::uint64_t replicas,
                                  std::uint64_t seed,
                                  unsigned threads)
{
    int const d = green.dim();
    Lattice const lat(d);
    std::vector<double> sizes;
    for (auto r : radii)
        sizes.push_back(static_cast<double>(sphereSize(d, r)));
    std::vector<std::vector<double>> frac(replicas);
    std::vector<double> bounds(replicas);
    SoupOptions so;
    parallelFor(replicas, threads, [&](std::size_t r) {
        Soup const s = sampleSoup(green,
                                  std::vector<Point>{Point::origin(d)},
                                  0.0, u, escapeRadius,
                                  deriveSeed(seed, StreamDomain::replica, r), so);
        bounds[r] = s.truncationBound();
        PointSet all;
        for (auto const& t : s.trajectories)
            t->trace.forEach([&](Lattice::Key k) { all.insert(k); });
        auto const c = detail::sphereHits(lat, radii, [&](auto&& f) { all.forEach(f); });
        frac[r].resize(radii.size());
        for (std::size_t i = 0; i < radii.size(); ++i)
            frac[r][i] = static_cast<double>(c[i]) / sizes[i];
    });
    auto out = detail::finishSphereDecay(d, radii, frac);
    out.truncationBound = *std::max_element(bounds.begin(), bounds.end());
    return out;
}

/*!
 * P[0 L x] = P[x on range(w_0)] averaged over the l1 sphere |x| = r; with
 * mirrored arguments this is also P[x R 0].
 */
inline SphereDecay relationLDecay(GreenOracle const& green,
                                  std::vector<std::int64_t> radii,
                                  std::int64_t escapeRadius,
                                  std::uint64_t replicas,
                                  std::uint64_t seed,
                                  unsigned threads)
{
    int const d = green.dim();
    Lattice const lat(d);
    std::vector<double> sizes;
    for (auto r : radii)
        sizes.push_back(static_cast<double>(sphereSize(d, r)));
    std::vector<std::vector<double>> frac(replicas);
    parallelFor(replicas, threads, [&](std::size_t r) {
        VertexWalkFamily f(d, deriveSeed(seed, StreamDomain::replica, r),
                           escapeRadius);
        auto const& e = f.materialize(Point::origin(d));
        auto const c = detail::sphereHits(lat, radii, [&](auto&& g) { e.trace.forEach(g); });
        frac[r].resize(radii.size());
        for (std::size_t i = 0; i < radii.size(); ++i)
            frac[r][i] = static_cast<double>(c[i]) / sizes[i];
    });
    return detail::finishSphereDecay(d, radii, frac);
}

struct BernoulliDecay
{
    std::vector<std::int64_t> radii;
    std::vector<DecaySample> samples;
    RegressionResult fit;
};

/*!
 * P[0 R x] = P[0 on range(w_x)] for x uniform on the l1 sphere |x| = r,
 * one Bernoulli trial per replica and radius.
 */
inline BernoulliDecay relationRDecay(GreenOracle const& green,
                                     std::vector<std::int64_t> radii,
                                     std::int64_t escapeRadius,
                                     std::uint64_t replicas,
                                     std::uint64_t seed,
                                     unsigned threads)
{
    int const d = green.dim();
    BernoulliDecay out;
    out.radii = radii;
    for (std::size_t i = 0; i < radii.size(); ++i)
    {
        auto const sphere = spherePoints(Ball{Point::origin(d), radii[i]});
        auto const n = static_cast<std::uint32_t>(sphere.size());
        std::vector<char> hit(replicas, 0);
        auto const rseed = deriveSeed(seed, StreamDomain::replica, i);
        parallelFor(replicas, threads, [&](std::size_t r) {
            auto const fseed = deriveSeed(rseed, StreamDomain::replica, r);
            Stream pick = deriveStream(fseed, StreamDomain::replica, 0);
            Point const x = sphere[pick.below(n)];
            VertexWalkFamily f(d, fseed, escapeRadius);
            f.materialize(x);
            hit[r] = holdsR(f, Point::origin(d), x) ? 1 : 0;
        });
        DecaySample s;
        s.gauge = static_cast<double>(radii[i] + 1);
        s.trials = replicas;
        for (auto h : hit)
            s.successes += static_cast<std::uint64_t>(h);
        out.samples.push_back(s);
    }
    out.fit = detail::safeFit([&] { return fitDecayExponent(out.samples); });
    return out;
}

//---------------------------------------------------------------------------//
// Lower-bound surrogates
//---------------------------------------------------------------------------//

struct PairChainRow
{
    std::int64_t distance = 0;
    std::int64_t escapeRadius = 0;
    std::uint64_t replicas = 0;
    /// Replicas with both 0 and x covered.
    std::uint64_t bothCovered = 0;
    ProbabilityEstimate withinTwo;
    double truncationBound = 0.0;
};

struct PairChainDecay
{
    std::vector<PairChainRow> rows;
    std::vector<DecaySample> samples;
    RegressionResult fit;
    bool strictlyDecreasing = false;
};

/*!
 * P[T(0, x) <= 2 | 0, x in I^u] for x = r e1. Chains of at most two
 * trajectories from 0 to x only involve trajectories through 0 or x, so a
 * soup on {0, x} decides the event exactly.
 */
inline PairChainDecay pairChainDecay(GreenOracle const& green,
                                     std::vector<std::int64_t> distances,
                                     double u,
                                     std::int64_t escapeFactor,
                                     std::uint64_t replicas,
                                     std::uint64_t seed,
                                     unsigned threads)
{
    int const d = green.dim();
    PairChainDecay out;
    for (std::size_t di = 0; di < distances.size(); ++di)
    {
        auto const r = distances[di];
        PairChainRow row;
        row.distance = r;
        row.escapeRadius = escapeFactor * r;
        row.replicas = replicas;
        std::vector<Point> const K{Point::origin(d), Point::unit(d, 0, r)};
        std::vector<char> both(replicas, 0);
        std::vector<char> ok(replicas, 0);
        std::vector<double> bounds(replicas, 0.0);
        auto const table = equilibrium(K, green);
        SoupOptions so;
        so.table = &table;
        auto const dseed = deriveSeed(seed, StreamDomain::replica, di);
        parallelFor(replicas, threads, [&](std::size_t rep) {
            Soup const s = sampleSoup(green, SoupBase::makePoints(K), 0.0, u,
                                      row.escapeRadius,
                                      deriveSeed(dseed, StreamDomain::replica, rep),
                                      so);
            bounds[rep] = s.truncationBound();
            auto const g = buildIncidence(s);
            if (g.covering(K[0]).empty() || g.covering(K[1]).empty())
                return;
            both[rep] = 1;
            auto const dist = chainDistance(g, K[0], K[1]);
            ok[rep] = (dist && *dist <= 2) ? 1 : 0;
        });
        for (std::size_t rep = 0; rep < replicas; ++rep)
        {
            row.bothCovered += static_cast<std::uint64_t>(both[rep]);
            row.truncationBound = std::max(row.truncationBound, bounds[rep]);
        }
        std::uint64_t s = 0;
        for (auto v : ok)
            s += static_cast<std::uint64_t>(v);
        row.withinTwo = estimateProbability(s, std::max<std::uint64_t>(1, row.bothCovered));
        out.samples.push_back(
            {static_cast<double>(gauge(K[0], K[1])), s, row.bothCovered});
        out.rows.push_back(row);
    }
    std::vector<double> p;
    for (auto const& row : out.rows)
        p.push_back(row.withinTwo.estimate);
    out.strictlyDecreasing = strictlyDecreasing(p);
    out.fit = detail::safeFit([&] { return fitDecayExponent(out.samples); });
    return out;
}

struct ReachDecay
{
    int m = 0;
    std::vector<std::int64_t> distances;
    std::vector<ReachEstimate> estimates;
    std::vector<DecaySample> samples;
    RegressionResult fit;
};

/// reachProbability(m, r e1) over distances, regressed on log gauge.
inline ReachDecay reachDecay(GreenOracle const& green,
                             int m,
                             std::vector<std::int64_t> distances,
                             double u,
                             std::int64_t escapeFactor,
                             std::uint64_t replicas,
                             std::uint64_t seed,
                             unsigned threads,
                             ReachMethod method = ReachMethod::target)
{
    int const d = green.dim();
    ReachDecay out;
    out.m = m;
    out.distances = distances;
    for (std::size_t i = 0; i < distances.size(); ++i)
    {
        auto const r = distances[i];
        ReachOptions opt;
        opt.method = method;
        opt.generation.escapeRadius = escapeFactor * r;
        opt.generation.threads = threads;
        auto const x = Point::unit(d, 0, r);
        auto const est = reachProbability(
            green, m, x, u, replicas,
            deriveSeed(seed, StreamDomain::replica, i), opt);
        out.samples.push_back({static_cast<double>(1 + r),
                               est.probability.successes,
                               est.probability.trials});
        out.estimates.push_back(est);
    }
    out.fit = detail::safeFit([&] { return fitDecayExponent(out.samples); });
    return out;
}

//---------------------------------------------------------------------------//
// Conditional generation counts
//---------------------------------------------------------------------------//

struct GenerationCountRow
{
    int k = 0;
    std::uint64_t stacks = 0;
    double observed = 0.0;
    double expected = 0.0;
    /// (observed - expected) / sqrt(expected), summed over stacks.
    double zScore = 0.0;
    /// Correlation across stacks of kept and discarded counts, each minus
    /// its conditional mean given the stack's lower generations.
    CorrelationResult keptVsDiscarded;
};

struct GenerationCounts
{
    std::uint64_t stacks = 0;
    std::uint64_t incomplete = 0;
    std::vector<GenerationCountRow> rows;
    TestResult generationZeroGof;
    double truncationBound = 0.0;
};

/*!
 * Stacks of generations 0..maxK on windowed V-sets with capacities; for
 * each generation the total count is compared with the sum of its
 * conditional Poisson means.
 */
inline GenerationCounts generationCounts(GreenOracle const& green,
                                         double u,
                                         int maxK,
                                         GenerationOptions gopt,
                                         std::uint64_t stacks,
                                         std::uint64_t seed,
                                         unsigned threads,
                                         std::vector<GenerationStack>* keep = nullptr)
{
    gopt.capacities = true;
    gopt.threads = 1;
    std::vector<GenerationStack> st(stacks);
    parallelFor(stacks, threads, [&](std::size_t s) {
        st[s] = growGenerations(green, u, maxK,
                                deriveSeed(seed, StreamDomain::replica, s), gopt);
    });
    GenerationCounts out;
    out.stacks = stacks;
    std::vector<std::uint64_t> gen0;
    std::vector<std::vector<ConditionalCount>> cc;
    for (auto const& s : st)
    {
        out.truncationBound = std::max(out.truncationBound, s.returnBound);
        if (!s.complete)
        {
            ++out.incomplete;
            continue;
        }
        cc.push_back(conditionalCounts(s));
        gen0.push_back(s.generations.front().size());
    }
    double const cap0 = capacity(std::vector<Point>{Point::origin(green.dim())}, green);
    if (!gen0.empty())
        out.generationZeroGof = poissonGof(gen0, u * cap0);
    for (int k = 0; k <= maxK; ++k)
    {
        GenerationCountRow row;
        row.k = k;
        std::vector<double> kept;
        std::vector<double> dropped;
        for (auto const& c : cc)
        {
            auto const& e = c[static_cast<std::size_t>(k)];
            row.observed += static_cast<double>(e.count);
            row.expected += e.mean;
            ++row.stacks;
            // Stacks whose V-set did not grow skip sampling.
            if (e.mean <= 0)
                continue;
            kept.push_back(static_cast<double>(e.count) - e.mean);
            dropped.push_back(static_cast<double>(e.discarded) - e.discardedMean);
        }
        row.zScore = row.expected > 0
                         ? (row.observed - row.expected) / std::sqrt(row.expected)
                         : 0.0;
        if (k > 0 && kept.size() > 3)
            row.keptVsDiscarded = pearson(kept, dropped);
        out.rows.push_back(row);
    }
    if (keep)
        *keep = std::move(st);
    return out;
}

//---------------------------------------------------------------------------//
// Chain ladder
//---------------------------------------------------------------------------//

struct ChainLadder
{
    std::vector<std::int64_t> ladder;
    std::int64_t windowRadius = 0;
    std::int64_t escapeRadius = 0;
    std::vector<ChainLadderReplica> replicas;
    std::uint64_t pairs = 0;
    std::uint64_t occupied = 0;
    std::uint64_t within1 = 0;
    std::uint64_t within2 = 0;
    std::vector<std::uint64_t> within3;
    double truncationBound = 0.0;

    bool degenerate() const { return pairs == 0; }
    /// Pooled fraction of occupied pairs at chain distance <= 3 per rung.
    std::vector<double> fractions() const
    {
        std::vector<double> f;
        for (auto w : within3)
            f.push_back(pairs ? static_cast<double>(w) / static_cast<double>(pairs)
                              : 0.0);
        return f;
    }
};

/*!
 * Chain-distance fractions among occupied window pairs, each rung of the
 * ladder using the trajectories of the soup on its own ball. Replicas run
 * sequentially; each soup is sampled with the given worker count.
 */
inline ChainLadder chainLadder(GreenOracle const& green,
                               double u,
                               std::uint64_t replicas,
                               std::uint64_t seed,
                               ChainLadderOptions opt)
{
    ChainLadder out;
    out.ladder = opt.ladder;
    out.windowRadius = opt.windowRadius;
    out.escapeRadius = opt.escapeRadius > 0 ? opt.escapeRadius
                                            : 2 * opt.ladder.back();
    opt.escapeRadius = out.escapeRadius;
    out.within3.assign(opt.ladder.size(), 0);
    for (std::uint64_t r = 0; r < replicas; ++r)
    {
        auto rep = chainLadderReplica(
            green, u, deriveSeed(seed, StreamDomain::replica, r), opt);
        out.pairs += rep.pairs;
        out.occupied += rep.occupied;
        out.within1 += rep.within1;
        out.within2 += rep.within2;
        for (std::size_t i = 0; i < rep.within3.size(); ++i)
            out.within3[i] += rep.within3[i];
        out.truncationBound = std::max(out.truncationBound, rep.returnBound);
        out.replicas.push_back(std::move(rep));
    }
    return out;
}

//---------------------------------------------------------------------------//
// Compositions
//---------------------------------------------------------------------------//

struct CompositionDecay
{
    int n = 0;
    bool slabChain = false;
    std::vector<std::int64_t> distances;
    std::vector<CompositionEstimate> estimates;
    std::vector<DecaySample> samples;
    RegressionResult fit;
};

/*!
 * Composition frequencies at x = 0, y = r e1 for each r, all with the soup
 * on ball(0, baseFactor max r) so that the base does not grow with r. With
 * slabChain the m-slab chain between the points themselves is estimated
 * instead of C_n.
 */
inline CompositionDecay compositionDecay(GreenOracle const& green,
                                         int n,
                                         bool slabChain,
                                         std::vector<std::int64_t> distances,
                                         double u,
                                         std::int64_t baseFactor,
                                         std::int64_t escapeFactor,
                                         std::uint64_t replicas,
                                         std::uint64_t seed,
                                         unsigned threads)
{
    int const d = green.dim();
    CompositionDecay out;
    out.n = n;
    out.slabChain = slabChain;
    out.distances = distances;
    std::int64_t const top
        = baseFactor * *std::max_element(distances.begin(), distances.end());
    auto const base = SoupBase::makeBall(Point::origin(d), top);
    for (std::size_t i = 0; i < distances.size(); ++i)
    {
        auto const r = distances[i];
        auto const x = Point::origin(d);
        auto const y = Point::unit(d, 0, r);
        CompositionOptions opt;
        opt.escapeRadius = escapeFactor * top;
        opt.threads = threads;
        auto const s = deriveSeed(seed, StreamDomain::replica, i);
        auto est = slabChain
                       ? estimateSlabChain(green, n, x, y, u, base, replicas, s, opt)
                       : estimateComposition(green, n, x, y, u, base, replicas, s, opt);
        out.samples.push_back({static_cast<double>(gauge(x, y)),
                               est.probability.successes,
                               est.probability.trials});
        out.estimates.push_back(std::move(est));
    }
    out.fit = detail::safeFit([&] { return fitDecayExponent(out.samples); });
    return out;
}

}  // namespace ri
