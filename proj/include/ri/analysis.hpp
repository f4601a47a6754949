#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>

namespace ri {

/// Repo-wide significance level.
inline constexpr double kSignificance = 0.01;

struct Interval
{
    double lo = 0.0;
    double hi = 0.0;

    double width() const { return hi - lo; }
    bool contains(double v) const { return lo <= v && v <= hi; }
};

//---------------------------------------------------------------------------//
// Proportions
//---------------------------------------------------------------------------//

/// Two-sided standard normal quantile for confidence \p level.
inline double normalQuantile(double level)
{
    boost::math::normal_distribution<double> n;
    return boost::math::quantile(n, 0.5 + 0.5 * level);
}

/// Wilson score interval for a binomial proportion.
inline Interval
wilson(std::uint64_t successes, std::uint64_t trials, double level = 0.95)
{
    if (trials == 0)
    {
        throw std::invalid_argument("wilson: zero trials");
    }
    if (successes > trials)
    {
        throw std::invalid_argument("wilson: successes exceed trials");
    }
    double const z = normalQuantile(level);
    double const n = static_cast<double>(trials);
    double const p = successes / n;
    double const z2 = z * z;
    double const center = (p + z2 / (2 * n)) / (1 + z2 / n);
    double const half = z / (1 + z2 / n)
                        * std::sqrt(p * (1 - p) / n + z2 / (4 * n * n));
    return {std::max(0.0, center - half), std::min(1.0, center + half)};
}

/// Frequency with its Wilson interval.
struct ProbabilityEstimate
{
    std::uint64_t successes = 0;
    std::uint64_t trials = 0;
    double estimate = 0.0;
    Interval ci;
    std::string method = "wilson-95";
};

inline ProbabilityEstimate
estimateProbability(std::uint64_t successes, std::uint64_t trials)
{
    ProbabilityEstimate e;
    e.successes = successes;
    e.trials = trials;
    e.estimate = static_cast<double>(successes) / static_cast<double>(trials);
    e.ci = wilson(successes, trials);
    return e;
}

//---------------------------------------------------------------------------//
// Chi-square machinery
//---------------------------------------------------------------------------//

inline double chiSquareSurvival(double statistic, double dof)
{
    if (dof <= 0)
        return 1.0;
    if (statistic <= 0)
        return 1.0;
    return boost::math::gamma_q(0.5 * dof, 0.5 * statistic);
}

struct TestResult
{
    double statistic = 0.0;
    int dof = 0;
    double pValue = 1.0;
    /// Number of cells after pooling.
    int cells = 0;

    bool passes(double alpha = kSignificance) const
    {
        return pValue > alpha;
    }
};

namespace detail {
/// Merge consecutive bins until each expected count reaches \p minExpected;
/// a short remainder is merged into the last group.
inline void pool(std::vector<double>& observed,
                 std::vector<double>& expected,
                 double minExpected)
{
    std::vector<double> o;
    std::vector<double> e;
    double acc_o = 0;
    double acc_e = 0;
    for (std::size_t i = 0; i < expected.size(); ++i)
    {
        acc_o += observed[i];
        acc_e += expected[i];
        if (acc_e >= minExpected)
        {
            o.push_back(acc_o);
            e.push_back(acc_e);
            acc_o = acc_e = 0;
        }
    }
    if (acc_e > 0 || acc_o > 0)
    {
        if (e.empty())
        {
            o.push_back(acc_o);
            e.push_back(acc_e);
        }
        else
        {
            o.back() += acc_o;
            e.back() += acc_e;
        }
    }
    observed = std::move(o);
    expected = std::move(e);
}
}  // namespace detail

/*!
 * Pearson goodness of fit of counts against cell probabilities.
 *
 * Cells are taken in the given order and pooled until each expected count
 * is at least \p minExpected.
 */
inline TestResult chiSquareGof(std::span<std::uint64_t const> observed,
                               std::span<double const> probabilities,
                               int estimatedParameters = 0,
                               double minExpected = 5.0)
{
    if (observed.size() != probabilities.size() || observed.empty())
    {
        throw std::invalid_argument("chiSquareGof: size mismatch");
    }
    double const n = std::accumulate(observed.begin(), observed.end(), 0.0);
    double const psum
        = std::accumulate(probabilities.begin(), probabilities.end(), 0.0);
    std::vector<double> o(observed.begin(), observed.end());
    std::vector<double> e(probabilities.size());
    for (std::size_t i = 0; i < e.size(); ++i)
        e[i] = n * probabilities[i] / psum;
    detail::pool(o, e, minExpected);

    TestResult r;
    r.cells = static_cast<int>(e.size());
    for (std::size_t i = 0; i < e.size(); ++i)
        r.statistic += (o[i] - e[i]) * (o[i] - e[i]) / e[i];
    r.dof = r.cells - 1 - estimatedParameters;
    r.pValue = chiSquareSurvival(r.statistic, r.dof);
    return r;
}

inline double poissonLogPmf(double k, double mean)
{
    if (mean == 0.0)
        return k == 0.0 ? 0.0 : -std::numeric_limits<double>::infinity();
    return k * std::log(mean) - mean - std::lgamma(k + 1.0);
}

/// Goodness of fit of samples to Poisson(mean), upper tail pooled.
inline TestResult poissonGof(std::span<std::uint64_t const> samples,
                             double mean,
                             double minExpected = 5.0)
{
    if (samples.empty())
    {
        throw std::invalid_argument("poissonGof: no samples");
    }
    std::uint64_t kmax = *std::max_element(samples.begin(), samples.end());
    kmax = std::max<std::uint64_t>(
        kmax, static_cast<std::uint64_t>(mean + 10 * std::sqrt(mean) + 10));
    std::vector<std::uint64_t> counts(kmax + 2, 0);
    for (auto s : samples)
        ++counts[s];
    std::vector<double> probs(kmax + 2);
    double acc = 0.0;
    for (std::uint64_t k = 0; k <= kmax; ++k)
    {
        probs[k] = std::exp(poissonLogPmf(static_cast<double>(k), mean));
        acc += probs[k];
    }
    probs[kmax + 1] = std::max(0.0, 1.0 - acc);

    // Pool from both ends toward the mode so that tails are merged.
    std::vector<double> o(counts.begin(), counts.end());
    std::vector<double> e(probs.size());
    auto const n = static_cast<double>(samples.size());
    for (std::size_t i = 0; i < e.size(); ++i)
        e[i] = n * probs[i];
    auto const split = static_cast<std::ptrdiff_t>(std::floor(mean)) + 1;
    std::vector<double> lo_o(o.begin(), o.begin() + split);
    std::vector<double> lo_e(e.begin(), e.begin() + split);
    std::vector<double> hi_o(o.rbegin(), o.rend() - split);
    std::vector<double> hi_e(e.rbegin(), e.rend() - split);
    detail::pool(lo_o, lo_e, minExpected);
    detail::pool(hi_o, hi_e, minExpected);
    std::reverse(hi_o.begin(), hi_o.end());
    std::reverse(hi_e.begin(), hi_e.end());
    // A too-small first group on either side is merged into its neighbor.
    if (!hi_e.empty() && hi_e.front() < minExpected && !lo_e.empty())
    {
        lo_o.back() += hi_o.front();
        lo_e.back() += hi_e.front();
        hi_o.erase(hi_o.begin());
        hi_e.erase(hi_e.begin());
    }
    if (!lo_e.empty() && lo_e.back() < minExpected && !hi_e.empty())
    {
        hi_o.front() += lo_o.back();
        hi_e.front() += lo_e.back();
        lo_o.pop_back();
        lo_e.pop_back();
    }

    TestResult r;
    std::vector<double> all_o = lo_o;
    std::vector<double> all_e = lo_e;
    all_o.insert(all_o.end(), hi_o.begin(), hi_o.end());
    all_e.insert(all_e.end(), hi_e.begin(), hi_e.end());
    r.cells = static_cast<int>(all_e.size());
    for (std::size_t i = 0; i < all_e.size(); ++i)
    {
        if (all_e[i] > 0)
            r.statistic += (all_o[i] - all_e[i]) * (all_o[i] - all_e[i])
                           / all_e[i];
    }
    r.dof = r.cells - 1;
    r.pValue = chiSquareSurvival(r.statistic, r.dof);
    return r;
}

/*!
 * Pearson chi-square test of independence on a contingency table.
 *
 * While some expected cell is below \p minExpected, the row or column with
 * the smaller total among those holding it is merged into its smaller
 * adjacent neighbor (rows and columns are ordered categories).
 */
inline TestResult
chiSquareIndependence(std::vector<std::vector<double>> table,
                      double minExpected = 5.0)
{
    auto totals = [](auto const& t) {
        std::vector<double> rows(t.size(), 0.0);
        std::vector<double> cols(t.empty() ? 0 : t[0].size(), 0.0);
        for (std::size_t i = 0; i < t.size(); ++i)
            for (std::size_t j = 0; j < t[i].size(); ++j)
            {
                rows[i] += t[i][j];
                cols[j] += t[i][j];
            }
        return std::pair{rows, cols};
    };
    auto drop_empty = [&](auto& t) {
        auto [rows, cols] = totals(t);
        std::vector<std::vector<double>> out;
        for (std::size_t i = 0; i < t.size(); ++i)
        {
            if (rows[i] == 0)
                continue;
            std::vector<double> row;
            for (std::size_t j = 0; j < cols.size(); ++j)
                if (cols[j] > 0)
                    row.push_back(t[i][j]);
            out.push_back(std::move(row));
        }
        t = std::move(out);
    };
    drop_empty(table);

    for (;;)
    {
        if (table.size() < 2 || table[0].size() < 2)
            break;
        auto [rows, cols] = totals(table);
        double const n = std::accumulate(rows.begin(), rows.end(), 0.0);
        std::size_t const ri = static_cast<std::size_t>(
            std::min_element(rows.begin(), rows.end()) - rows.begin());
        std::size_t const cj = static_cast<std::size_t>(
            std::min_element(cols.begin(), cols.end()) - cols.begin());
        if (rows[ri] * cols[cj] / n >= minExpected)
            break;
        bool const merge_row = rows[ri] <= cols[cj];
        auto neighbor = [](std::vector<double> const& tot, std::size_t k) {
            if (k == 0)
                return std::size_t{1};
            if (k + 1 == tot.size())
                return k - 1;
            return tot[k - 1] <= tot[k + 1] ? k - 1 : k + 1;
        };
        if (merge_row)
        {
            std::size_t const nb = neighbor(rows, ri);
            for (std::size_t j = 0; j < table[ri].size(); ++j)
                table[nb][j] += table[ri][j];
            table.erase(table.begin() + static_cast<std::ptrdiff_t>(ri));
        }
        else
        {
            std::size_t const nb = neighbor(cols, cj);
            for (auto& row : table)
            {
                row[nb] += row[cj];
                row.erase(row.begin() + static_cast<std::ptrdiff_t>(cj));
            }
        }
    }

    TestResult r;
    if (table.size() < 2 || table[0].size() < 2)
    {
        r.cells = table.empty() ? 0 : static_cast<int>(table.size() * table[0].size());
        return r;
    }
    auto [rows, cols] = totals(table);
    double const n = std::accumulate(rows.begin(), rows.end(), 0.0);
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < cols.size(); ++j)
        {
            double const e = rows[i] * cols[j] / n;
            r.statistic += (table[i][j] - e) * (table[i][j] - e) / e;
        }
    r.cells = static_cast<int>(rows.size() * cols.size());
    r.dof = static_cast<int>((rows.size() - 1) * (cols.size() - 1));
    r.pValue = chiSquareSurvival(r.statistic, r.dof);
    return r;
}

/// Chi-square homogeneity test of two samples of non-negative integers.
inline TestResult twoSampleTest(std::span<std::int64_t const> a,
                                std::span<std::int64_t const> b)
{
    if (a.empty() || b.empty())
    {
        throw std::invalid_argument("twoSampleTest: empty sample");
    }
    std::map<std::int64_t, std::pair<double, double>> hist;
    for (auto v : a)
        hist[v].first += 1;
    for (auto v : b)
        hist[v].second += 1;
    std::vector<std::vector<double>> table(2);
    for (auto const& [v, c] : hist)
    {
        table[0].push_back(c.first);
        table[1].push_back(c.second);
    }
    return chiSquareIndependence(std::move(table));
}

//---------------------------------------------------------------------------//
// Correlation
//---------------------------------------------------------------------------//

struct CorrelationResult
{
    double r = 0.0;
    std::size_t n = 0;
    /// Fisher-transformed deviation from 0 in standard errors.
    double z = 0.0;

    bool withinSigma(double k = 3.0) const { return std::fabs(z) <= k; }
};

inline CorrelationResult pearson(std::span<double const> x,
                                 std::span<double const> y)
{
    if (x.size() != y.size() || x.size() < 4)
    {
        throw std::invalid_argument("pearson: need >= 4 paired values");
    }
    double const n = static_cast<double>(x.size());
    double const mx = std::accumulate(x.begin(), x.end(), 0.0) / n;
    double const my = std::accumulate(y.begin(), y.end(), 0.0) / n;
    double sxy = 0;
    double sxx = 0;
    double syy = 0;
    for (std::size_t i = 0; i < x.size(); ++i)
    {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    CorrelationResult c;
    c.n = x.size();
    c.r = (sxx > 0 && syy > 0) ? sxy / std::sqrt(sxx * syy) : 0.0;
    double const rc = std::clamp(c.r, -0.999999999, 0.999999999);
    c.z = std::atanh(rc) * std::sqrt(n - 3.0);
    return c;
}

//---------------------------------------------------------------------------//
// Poisson shift distance
//---------------------------------------------------------------------------//

struct PoissonPair
{
    double mu = 0.0;
    double mu0 = 0.0;
    std::int64_t s = 0;
};

struct ShiftDistance
{
    double value = 0.0;
    /// Bound on the summed mass outside the evaluated window.
    double errorBound = 0.0;
};

/*!
 * sum_t |P[X = t - s] - P[Y = t]| for X ~ Pois(mu - mu0), Y ~ Pois(mu),
 * with log-space pmfs. Terms are summed over a window of +-(12 sd + 30)
 * around both means; the mass outside is bounded by geometric tails.
 */
inline ShiftDistance poissonShiftDistanceDetailed(PoissonPair const& p)
{
    if (!(p.mu > p.mu0) || p.mu0 < 0 || p.s < 0 || !std::isfinite(p.mu))
    {
        throw std::invalid_argument(
            "poissonShiftDistance: need mu > mu0 >= 0 and s >= 0");
    }
    double const lx = p.mu - p.mu0;
    double const ly = p.mu;
    double const shift = static_cast<double>(p.s);
    double const spread = 12.0 * std::sqrt(ly) + 30.0;
    double const lo = std::max(0.0, std::floor(std::min(lx + shift, ly) - spread));
    double const hi = std::ceil(std::max(lx + shift, ly) + spread);

    auto pmf = [](double k, double mean) {
        return k < 0 ? 0.0 : std::exp(poissonLogPmf(k, mean));
    };
    ShiftDistance out;
    for (double t = lo; t <= hi; t += 1.0)
        out.value += std::fabs(pmf(t - shift, lx) - pmf(t, ly));

    // Upper tails: ratio of successive terms is mean/(k+1) < 1 past hi.
    auto upper = [&](double k, double mean) {
        double const r = mean / (k + 1.0);
        return pmf(k, mean) / (1.0 - r);
    };
    // Lower tails: ratio k/mean < 1 below the mean.
    auto lower = [&](double k, double mean) {
        if (k < 0)
            return 0.0;
        double const r = k / mean;
        return pmf(k, mean) / (1.0 - r);
    };
    out.errorBound = upper(hi + 1.0 - shift, lx) + upper(hi + 1.0, ly)
                     + lower(lo - 1.0 - shift, lx) + lower(lo - 1.0, ly);
    if (!(out.errorBound < 1e-10))
    {
        throw std::logic_error("poissonShiftDistance: tail bound too large");
    }
    return out;
}

inline double poissonShiftDistance(PoissonPair const& p)
{
    return poissonShiftDistanceDetailed(p).value;
}

//---------------------------------------------------------------------------//
// Exponent regression
//---------------------------------------------------------------------------//

struct DecaySample
{
    double gauge = 0.0;
    std::uint64_t successes = 0;
    std::uint64_t trials = 0;
};

struct RegressionPoint
{
    double logGauge = 0.0;
    double logProbability = 0.0;
    double weight = 0.0;
};

struct RegressionResult
{
    double slope = 0.0;
    double intercept = 0.0;
    Interval slopeCI;
    double slopeSE = 0.0;
    std::vector<RegressionPoint> pointsUsed;
    std::vector<std::string> notes;
};

/*!
 * Weighted least squares of y on x with known variances 1/w.
 *
 * The slope interval is the wider of the known-variance normal interval and
 * the t interval inflated by the Birge ratio sqrt(chi2/(n-2)).
 */
inline RegressionResult weightedFit(std::vector<RegressionPoint> pts,
                                    double level = 0.95)
{
    if (pts.size() < 2)
    {
        throw std::invalid_argument("weightedFit: need at least 2 points");
    }
    double sw = 0;
    double sx = 0;
    double sy = 0;
    for (auto const& p : pts)
    {
        sw += p.weight;
        sx += p.weight * p.logGauge;
        sy += p.weight * p.logProbability;
    }
    double const mx = sx / sw;
    double const my = sy / sw;
    double sxx = 0;
    double sxy = 0;
    for (auto const& p : pts)
    {
        sxx += p.weight * (p.logGauge - mx) * (p.logGauge - mx);
        sxy += p.weight * (p.logGauge - mx) * (p.logProbability - my);
    }
    if (!(sxx > 0))
    {
        throw std::invalid_argument("weightedFit: degenerate abscissae");
    }
    RegressionResult r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    double chi2 = 0;
    for (auto const& p : pts)
    {
        double const res = p.logProbability - r.intercept - r.slope * p.logGauge;
        chi2 += p.weight * res * res;
    }
    double const se = std::sqrt(1.0 / sxx);
    double half = normalQuantile(level) * se;
    r.slopeSE = se;
    if (pts.size() > 2)
    {
        double const dof = static_cast<double>(pts.size() - 2);
        double const birge = std::sqrt(chi2 / dof);
        boost::math::students_t t(dof);
        double const tq = boost::math::quantile(t, 0.5 + 0.5 * level);
        half = std::max(half, tq * se * birge);
        r.slopeSE = std::max(se, se * birge);
    }
    r.slopeCI = {r.slope - half, r.slope + half};
    r.pointsUsed = std::move(pts);
    return r;
}

/*!
 * Fit log p = a + slope log gauge to Monte Carlo frequencies; the slope
 * estimates minus the decay exponent. Weights are inverse variances of
 * log p derived from the Wilson interval.
 */
inline RegressionResult fitDecayExponent(std::span<DecaySample const> samples)
{
    std::vector<double> gauges;
    for (auto const& s : samples)
        gauges.push_back(s.gauge);
    std::sort(gauges.begin(), gauges.end());
    gauges.erase(std::unique(gauges.begin(), gauges.end()), gauges.end());
    if (gauges.size() < 4)
    {
        throw std::invalid_argument(
            "fitDecayExponent: need at least 4 distinct gauges");
    }
    std::vector<RegressionPoint> pts;
    std::vector<std::string> notes;
    for (auto const& s : samples)
    {
        if (s.successes < 5)
        {
            notes.push_back("gauge " + std::to_string(s.gauge) + " dropped: "
                            + std::to_string(s.successes)
                            + " successes < 5");
            continue;
        }
        auto const ci = wilson(s.successes, s.trials);
        double const p = static_cast<double>(s.successes)
                         / static_cast<double>(s.trials);
        double sd = (std::log(ci.hi) - std::log(ci.lo)) / (2.0 * normalQuantile(0.95));
        if (!(sd > 0))
            sd = 1e-12;
        pts.push_back({std::log(s.gauge), std::log(p), 1.0 / (sd * sd)});
    }
    if (pts.empty())
    {
        throw std::invalid_argument("fitDecayExponent: all points dropped");
    }
    if (pts.size() < 2)
    {
        throw std::invalid_argument(
            "fitDecayExponent: fewer than 2 points left after dropping");
    }
    auto r = weightedFit(std::move(pts));
    r.notes = std::move(notes);
    return r;
}

/// Unweighted log-log fit of exact values y(x).
inline RegressionResult fitLogLog(std::span<double const> x,
                                  std::span<double const> y)
{
    if (x.size() != y.size())
    {
        throw std::invalid_argument("fitLogLog: size mismatch");
    }
    std::vector<RegressionPoint> pts;
    for (std::size_t i = 0; i < x.size(); ++i)
        pts.push_back({std::log(x[i]), std::log(y[i]), 1.0});
    return weightedFit(std::move(pts));
}

//---------------------------------------------------------------------------//
// Sample moments
//---------------------------------------------------------------------------//

struct MeanEstimate
{
    double mean = 0.0;
    double variance = 0.0;
    std::size_t n = 0;

    double standardError() const
    {
        return n > 0 ? std::sqrt(variance / static_cast<double>(n)) : 0.0;
    }
    /// (mean - expected) in units of the standard error.
    double zScore(double expected) const
    {
        double const se = standardError();
        return se > 0 ? (mean - expected) / se : (mean == expected ? 0.0 : INFINITY);
    }
};

template<class T>
MeanEstimate sampleMean(std::span<T const> v)
{
    MeanEstimate m;
    m.n = v.size();
    if (v.empty())
        return m;
    double s = 0;
    for (auto x : v)
        s += static_cast<double>(x);
    m.mean = s / static_cast<double>(m.n);
    double ss = 0;
    for (auto x : v)
        ss += (static_cast<double>(x) - m.mean) * (static_cast<double>(x) - m.mean);
    m.variance = m.n > 1 ? ss / static_cast<double>(m.n - 1) : 0.0;
    return m;
}

struct MeanDecaySample
{
    double gauge = 0.0;
    MeanEstimate value;
};

/*!
 * Fit log m = a + slope log gauge to sample means m with standard errors;
 * weights are the delta-method inverse variances m^2 / se^2. Points with
 * fewer than 5 nonzero observations are dropped with a note.
 */
inline RegressionResult fitMeanDecay(std::span<MeanDecaySample const> samples,
                                     std::span<std::uint64_t const> nonzero)
{
    if (samples.size() != nonzero.size())
        throw std::invalid_argument("fitMeanDecay: size mismatch");
    std::vector<RegressionPoint> pts;
    std::vector<std::string> notes;
    for (std::size_t i = 0; i < samples.size(); ++i)
    {
        auto const& s = samples[i];
        double const se = s.value.standardError();
        if (nonzero[i] < 5 || !(s.value.mean > 0) || !(se > 0))
        {
            notes.push_back("gauge " + std::to_string(s.gauge)
                            + " dropped: too few nonzero observations");
            continue;
        }
        double const rel = se / s.value.mean;
        pts.push_back({std::log(s.gauge), std::log(s.value.mean), 1.0 / (rel * rel)});
    }
    if (pts.size() < 2)
    {
        throw std::invalid_argument(
            "fitMeanDecay: fewer than 2 points left after dropping");
    }
    auto r = weightedFit(std::move(pts));
    r.notes = std::move(notes);
    return r;
}

/// True if \p v is strictly decreasing.
inline bool strictlyDecreasing(std::span<double const> v)
{
    for (std::size_t i = 1; i < v.size(); ++i)
        if (!(v[i] < v[i - 1]))
            return false;
    return true;
}

/// True if \p v is non-decreasing.
inline bool nonDecreasing(std::span<double const> v)
{
    for (std::size_t i = 1; i < v.size(); ++i)
        if (v[i] < v[i - 1])
            return false;
    return true;
}

//---------------------------------------------------------------------------//
// Nested count check
//---------------------------------------------------------------------------//

/// One replica: counts of trajectories hitting K and hitting B (K in B).
struct NestedCounts
{
    std::uint64_t etaK = 0;
    std::uint64_t etaB = 0;
};

struct ShiftRow
{
    std::int64_t s = 0;
    std::uint64_t events = 0;
    /// sum_t |P^[eta_B = t | eta_K = s] - P^[eta_B - eta_K = t - s]|.
    double shiftIdentityTV = 0.0;
    /// Two-sample test of eta_B | eta_K = s against eta_B - eta_K + s.
    TestResult shiftIdentityTest;
    /// sum_t |P^[eta_B - eta_K = t - s] - P^[eta_B = t]|, the conditioned
    /// versus unconditioned distance via the shift identity.
    double lemmaTV = 0.0;
};

struct NestedCountReport
{
    std::size_t replicas = 0;
    TestResult independence;
    std::vector<ShiftRow> rows;
    /// Poisson fit of eta_B - eta_K (when an expected mean is supplied).
    TestResult differenceGof;
    double differenceMean = 0.0;
    std::vector<std::string> notes;

    /// Event-weighted mean of lemmaTV over the retained rows.
    double meanLemmaTV() const
    {
        double w = 0;
        double s = 0;
        for (auto const& r : rows)
        {
            w += static_cast<double>(r.events);
            s += static_cast<double>(r.events) * r.lemmaTV;
        }
        return w > 0 ? s / w : 0.0;
    }
};

inline constexpr std::uint64_t kMinConditioningEvents = 200;

/*!
 * Empirical checks of the conditional structure of nested hitting counts:
 * independence of eta_K and eta_B - eta_K, the shift identity for each s
 * with enough events, and the distance between conditioned and
 * unconditioned laws of eta_B.
 */
inline NestedCountReport
nestedCountCheck(std::span<NestedCounts const> replicas,
                 double expectedDifferenceMean = -1.0,
                 std::int64_t maxShift = 5)
{
    if (replicas.empty())
    {
        throw std::invalid_argument("nestedCountCheck: no replicas");
    }
    NestedCountReport rep;
    rep.replicas = replicas.size();
    std::uint64_t kmax = 0;
    std::uint64_t dmax = 0;
    std::vector<std::int64_t> diff;
    std::vector<std::uint64_t> diffu;
    for (auto const& r : replicas)
    {
        if (r.etaK > r.etaB)
        {
            throw std::invalid_argument(
                "nestedCountCheck: eta_K exceeds eta_B (K not inside B?)");
        }
        kmax = std::max(kmax, r.etaK);
        dmax = std::max(dmax, r.etaB - r.etaK);
        diff.push_back(static_cast<std::int64_t>(r.etaB - r.etaK));
        diffu.push_back(r.etaB - r.etaK);
    }
    auto const m = sampleMean(std::span<std::uint64_t const>(diffu));
    rep.differenceMean = m.mean;

    std::vector<std::vector<double>> table(kmax + 1,
                                           std::vector<double>(dmax + 1, 0.0));
    for (auto const& r : replicas)
        table[r.etaK][r.etaB - r.etaK] += 1.0;
    rep.independence = chiSquareIndependence(table);
    if (dmax == 0)
    {
        rep.notes.push_back("eta_B - eta_K is identically 0");
    }

    // Empirical pmfs of eta_B and of the difference.
    std::map<std::int64_t, double> pb;
    std::map<std::int64_t, double> pd;
    double const n = static_cast<double>(replicas.size());
    for (auto const& r : replicas)
    {
        pb[static_cast<std::int64_t>(r.etaB)] += 1.0 / n;
        pd[static_cast<std::int64_t>(r.etaB - r.etaK)] += 1.0 / n;
    }

    for (std::int64_t s = 0; s <= maxShift; ++s)
    {
        std::vector<std::int64_t> cond;
        for (auto const& r : replicas)
            if (static_cast<std::int64_t>(r.etaK) == s)
                cond.push_back(static_cast<std::int64_t>(r.etaB));
        if (cond.size() < kMinConditioningEvents)
        {
            rep.notes.push_back("s=" + std::to_string(s) + " dropped: "
                                + std::to_string(cond.size())
                                + " conditioning events < 200");
            continue;
        }
        ShiftRow row;
        row.s = s;
        row.events = cond.size();

        std::map<std::int64_t, double> pc;
        for (auto v : cond)
            pc[v] += 1.0 / static_cast<double>(cond.size());
        std::map<std::int64_t, double> merged;
        for (auto const& [t, p] : pc)
            merged[t] += p;
        for (auto const& [t, p] : pd)
            merged[t + s] -= p;
        for (auto const& [t, v] : merged)
            row.shiftIdentityTV += std::fabs(v);

        std::vector<std::int64_t> shifted(diff);
        for (auto& v : shifted)
            v += s;
        row.shiftIdentityTest = twoSampleTest(cond, shifted);

        std::map<std::int64_t, double> lemma;
        for (auto const& [t, p] : pd)
            lemma[t + s] += p;
        for (auto const& [t, p] : pb)
            lemma[t] -= p;
        for (auto const& [t, v] : lemma)
            row.lemmaTV += std::fabs(v);
        rep.rows.push_back(row);
    }

    if (expectedDifferenceMean >= 0.0 && dmax > 0)
    {
        rep.differenceGof
            = poissonGof(std::span<std::uint64_t const>(diffu), expectedDifferenceMean);
    }
    return rep;
}

//---------------------------------------------------------------------------//
// Density along a ray
//---------------------------------------------------------------------------//

struct LineDensityReport
{
    std::vector<double> runningAverage;
    double terminal = 0.0;
    double expected = 0.0;
    double standardError = 0.0;
    Interval ci;
    double zScore = 0.0;
    std::size_t replicas = 0;
};

/*!
 * Running averages of occupation indicators along a ray, averaged over
 * replicas, compared with 1 - exp(-u cap({0})).
 */
inline LineDensityReport lineDensity(
    std::span<std::vector<std::uint8_t> const> indicators, double u, double cap0)
{
    if (indicators.empty() || indicators.front().empty())
    {
        throw std::invalid_argument("lineDensity: no data");
    }
    std::size_t const len = indicators.front().size();
    LineDensityReport r;
    r.replicas = indicators.size();
    r.expected = 1.0 - std::exp(-u * cap0);
    r.runningAverage.assign(len, 0.0);
    std::vector<double> terminal;
    for (auto const& row : indicators)
    {
        if (row.size() != len)
        {
            throw std::invalid_argument("lineDensity: ragged replicas");
        }
        double acc = 0;
        for (std::size_t k = 0; k < len; ++k)
        {
            acc += row[k];
            r.runningAverage[k] += acc / static_cast<double>(k + 1);
        }
        terminal.push_back(acc / static_cast<double>(len));
    }
    for (double& v : r.runningAverage)
        v /= static_cast<double>(indicators.size());
    auto const m = sampleMean(std::span<double const>(terminal));
    r.terminal = m.mean;
    r.standardError = m.standardError();
    double const z = normalQuantile(0.95);
    r.ci = {m.mean - z * r.standardError, m.mean + z * r.standardError};
    r.zScore = r.standardError > 0 ? (m.mean - r.expected) / r.standardError
                                   : (m.mean == r.expected ? 0.0 : INFINITY);
    return r;
}

}  // namespace ri
