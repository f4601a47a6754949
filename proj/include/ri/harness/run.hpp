#pragma once

#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <string>
#include <vector>

#include "../experiments.hpp"
#include "config.hpp"
#include "persist.hpp"
#include "report.hpp"

namespace ri::harness {

/// A configured resource cap was hit; the partial report is still written.
class ResourceCapError : public std::runtime_error
{
  public:
    using std::runtime_error::runtime_error;
};

struct RunOptions
{
    std::filesystem::path out = "ri-out";
    /// Write files (report, tables, plots, soups); tests may skip this.
    bool write = true;
};

namespace detail {

inline std::string num(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

inline Json pointCell(Point const& p)
{
    return to_string(p);
}

inline Json fitJson(RegressionResult const& r)
{
    auto num = [](double x) { return std::isfinite(x) ? Json(x) : Json(nullptr); };
    Json j;
    j["slope"] = num(r.slope);
    j["intercept"] = num(r.intercept);
    j["slopeSE"] = num(r.slopeSE);
    j["slopeCI"] = {num(r.slopeCI.lo), num(r.slopeCI.hi)};
    j["points"] = r.pointsUsed.size();
    j["notes"] = r.notes;
    return j;
}

inline Json testJson(TestResult const& t)
{
    return {{"statistic", t.statistic}, {"dof", t.dof}, {"pValue", t.pValue}, {"cells", t.cells}};
}

inline bool slopeWithin(RegressionResult const& r, double target, double tol)
{
    return std::isfinite(r.slope) && std::fabs(r.slope - target) <= tol;
}

inline std::string slopeText(RegressionResult const& r)
{
    return "slope " + (std::isfinite(r.slope) ? num(r.slope) : std::string("n/a"));
}

inline unsigned workers(ExperimentConfig const& c)
{
    return std::max(1u, std::min(c.threads, defaultThreads()));
}

inline GreenOracle makeGreen(ExperimentConfig const& c)
{
    GreenOptions o;
    o.quadTolerance = c.quadTolerance;
    return GreenOracle(c.d, o);
}

inline SoupOptions soupOptions(ExperimentConfig const& c)
{
    SoupOptions so;
    so.mode = parseSamplerMode(c.mode);
    so.threads = workers(c);
    return so;
}

//---------------------------------------------------------------------------//
// Subcommands
//---------------------------------------------------------------------------//

inline void runGreen(ExperimentConfig const& c, Report& rep)
{
    GreenOptions o;
    o.quadTolerance = c.quadTolerance;
    auto const g = greenCrossValidation(c.d, c.radius, o);
    auto& t = rep.table("green", {"x", "time_integral", "box", "relative_difference",
                                  "harmonic_residual"});
    for (auto const& r : g.rows)
        t.add({pointCell(r.x), r.timeIntegral, r.box, r.relativeDifference, r.harmonicResidual});
    rep.summary["boxRadius"] = g.boxRadius;
    rep.summary["boxChange"] = g.boxChange;
    rep.summary["maxRelativeDifference"] = g.maxRelativeDifference;
    rep.summary["maxHarmonicResidual"] = g.maxHarmonicResidual;
    rep.accounting["displacements"] = g.rows.size();
    rep.verdict("oracles agree to 1e-4", g.maxRelativeDifference <= 1e-4,
                "max relative difference " + num(g.maxRelativeDifference));
    rep.verdict("harmonic residual below 1e-8", g.maxHarmonicResidual < 1e-8,
                "max residual " + num(g.maxHarmonicResidual));
}

inline void runCapacity(ExperimentConfig const& c, Report& rep)
{
    auto const green = makeGreen(c);
    auto const K = ballPoints(Ball{Point::origin(c.d), c.baseRadius});
    auto const e = equilibriumMonteCarlo(green, K, c.walks, c.escapeRadius, c.seed, workers(c));
    auto cols = std::vector<std::string>{"x", "solver_eq"};
    for (auto const& k : probabilityColumns())
        cols.push_back(k);
    cols.push_back("sigma");
    cols.push_back("deviation_ratio");
    auto& t = rep.table("equilibrium", cols);
    for (auto const& r : e.rows)
    {
        std::vector<Json> row{pointCell(r.x), r.solver};
        for (auto& v : probabilityCells(estimateProbability(r.escapes, r.walks)))
            row.push_back(v);
        row.push_back(r.sigma);
        row.push_back(r.ratio);
        t.add(row);
    }
    rep.summary["cap"] = e.table.cap;
    rep.summary["solver"] = e.table.solver;
    rep.summary["solverResidual"] = e.table.residual;
    rep.summary["conditionEstimate"] = e.table.conditionEstimate;
    rep.summary["warnings"] = e.table.warnings;
    rep.accounting["sites"] = e.rows.size();
    rep.accounting["walksPerSite"] = c.walks;
    rep.bound("escape frequency per walk", e.truncationBound);
    rep.verdict("escape frequencies within 3 sigma plus truncation bound", e.allWithin(),
                "sites " + std::to_string(e.rows.size()));
}

inline void runSampleSoup(ExperimentConfig const& c, RunOptions const& ro, Report& rep)
{
    auto const green = makeGreen(c);
    auto const base = SoupBase::makeBall(Point::origin(c.d), c.baseRadius);
    auto so = soupOptions(c);
    std::optional<PotentialTable> table;
    if (ballSize(c.d, c.baseRadius) <= kMaxEquilibriumSize)
    {
        table = equilibrium(base.materialize(), green);
        if (so.mode != SamplerMode::thinning)
            so.table = &*table;
    }
    auto& t = rep.table("soups", {"replica", "seed", "trajectories", "mode", "cap_used",
                                  "label_low_half", "truncation_bound"});
    std::vector<std::uint64_t> counts;
    std::vector<double> low;
    std::vector<double> high;
    std::vector<std::uint64_t> startHist(table ? table->K.size() : 0, 0);
    std::uint64_t total = 0;
    double worst = 0.0;
    for (std::uint64_t r = 0; r < c.replicas; ++r)
    {
        auto const seed = deriveSeed(c.seed, StreamDomain::replica, r);
        std::vector<TrajectoryPtr> trajs;
        Soup s = streamSoup(green, base, c.uLow, c.uHigh, c.escapeRadius, seed, so,
                            [&](TrajectoryPtr tp) {
                                if (++total > c.maxTrajectories)
                                    throw ResourceCapError(
                                        "maxTrajectories exceeded while sampling replica "
                                        + std::to_string(r));
                                trajs.push_back(std::move(tp));
                            });
        s.trajectories = std::move(trajs);
        std::uint64_t lo = 0;
        double const mid = 0.5 * (c.uLow + c.uHigh);
        for (auto const& tp : s.trajectories)
        {
            lo += tp->label < mid ? 1 : 0;
            if (table)
                if (auto i = table->indexOf(tp->start); i >= 0)
                    ++startHist[static_cast<std::size_t>(i)];
        }
        counts.push_back(s.size());
        low.push_back(static_cast<double>(lo));
        high.push_back(static_cast<double>(s.size() - lo));
        worst = std::max(worst, s.truncationBound());
        t.add({r, seed, s.size(), std::string(to_string(s.mode)),
               std::isnan(s.capK) ? Json(nullptr) : Json(s.capK), lo,
               std::isnan(s.truncationBound()) ? Json(nullptr) : Json(s.truncationBound())});
        if (c.persist && ro.write)
        {
            std::filesystem::create_directories(ro.out);
            std::ofstream f(ro.out / ("soup-" + std::to_string(r) + ".jsonl"),
                            std::ios::binary);
            writeSoup(f, s);
        }
    }
    rep.bound("any discarded tail returns (per soup, max)", worst);
    rep.accounting["trajectories"] = total;
    if (table)
    {
        double const mean = (c.uHigh - c.uLow) * table->cap;
        rep.summary["cap"] = table->cap;
        rep.summary["expectedCount"] = mean;
        if (c.replicas >= 20)
        {
            auto const gof = poissonGof(counts, mean);
            rep.summary["countGof"] = testJson(gof);
            rep.verdict("soup count Poisson with mean (uHigh-uLow) cap(K)", gof.passes(),
                        "p = " + num(gof.pValue));
            auto const corr = pearson(low, high);
            rep.summary["labelHalvesCorrelation"] = corr.r;
            rep.verdict("label-half counts uncorrelated", corr.withinSigma(3.0),
                        "z = " + num(corr.z));
            std::vector<std::uint64_t> obs;
            std::vector<double> prob;
            for (std::size_t i : table->support)
            {
                obs.push_back(startHist[i]);
                prob.push_back(table->normEq[i]);
            }
            auto const sg = chiSquareGof(obs, prob, 0);
            rep.summary["startGof"] = testJson(sg);
            rep.verdict("start points follow the normalized equilibrium measure", sg.passes(),
                        "p = " + num(sg.pValue));
        }
    }
}

/// Connectivity counts of one persisted soup, one incidence graph per rung.
inline ChainLadderReplica ladderFromSoup(Soup const& s,
                                         std::vector<std::int64_t> const& ladder,
                                         std::int64_t windowRadius)
{
    Lattice const lat(s.d);
    ChainLadderReplica out;
    out.trajectories = s.size();
    out.returnBound = s.returnBound;
    std::vector<std::int64_t> mins;
    for (auto const& t : s.trajectories)
        mins.push_back(t->minDistance(lat, Point::origin(s.d)));
    auto const window = ballPoints(Ball{Point::origin(s.d), windowRadius});
    for (std::size_t k = 0; k < ladder.size(); ++k)
    {
        std::vector<TrajectoryPtr> sub;
        for (std::size_t i = 0; i < s.size(); ++i)
            if (mins[i] <= ladder[k])
                sub.push_back(s.trajectories[i]);
        IncidenceGraph const g(s.d, sub);
        auto const pc = pairConnectivity(g, window, 3);
        if (k == 0)
        {
            out.occupied = pc.occupied;
            out.pairs = pc.pairs;
            out.within1 = pc.within[0];
            out.within2 = pc.within[1];
            for (auto m : mins)
                out.windowTrajectories += m <= windowRadius ? 1 : 0;
        }
        out.within3.push_back(pc.within[2]);
    }
    return out;
}

inline void runConnectivity(ExperimentConfig const& c, Report& rep)
{
    ChainLadder lad;
    lad.ladder = c.ladder;
    lad.windowRadius = c.windowRadius;
    lad.escapeRadius = c.escapeRadius;
    if (!c.input.empty())
    {
        std::ifstream in(c.input);
        if (!in)
            throw ConfigError({"input: cannot read '" + c.input + "'"});
        auto const soups = readSoups(in);
        lad.within3.assign(c.ladder.size(), 0);
        for (auto const& s : soups)
        {
            if (s.d != c.d || s.base.kind != SoupBase::Kind::ball
                || s.base.ball.radius != c.ladder.back() || !(s.base.ball.center == Point::origin(c.d)))
                throw ConfigError({"input: soup base must be ball(0, " + std::to_string(c.ladder.back())
                                   + ") in dimension " + std::to_string(c.d)});
            auto r = ladderFromSoup(s, c.ladder, c.windowRadius);
            lad.pairs += r.pairs;
            lad.occupied += r.occupied;
            lad.within1 += r.within1;
            lad.within2 += r.within2;
            for (std::size_t i = 0; i < r.within3.size(); ++i)
                lad.within3[i] += r.within3[i];
            lad.truncationBound = std::max(lad.truncationBound, r.returnBound);
            lad.replicas.push_back(std::move(r));
        }
        rep.summary["source"] = "persisted soups";
    }
    else
    {
        auto const green = makeGreen(c);
        ChainLadderOptions o;
        o.windowRadius = c.windowRadius;
        o.ladder = c.ladder;
        o.escapeRadius = c.escapeRadius;
        o.threads = workers(c);
        lad = chainLadder(green, c.u, c.replicas, c.seed, o);
        rep.summary["source"] = "streamed";
    }
    auto& t = rep.table("ladder", {"base_radius", "fraction_within_3", "pairs_within_3",
                                   "pairs", "replicas", "ci_method"});
    auto const f = lad.fractions();
    for (std::size_t k = 0; k < lad.ladder.size(); ++k)
        t.add({lad.ladder[k], lad.pairs ? Json(f[k]) : Json(nullptr), lad.within3[k], lad.pairs,
               lad.replicas.size(), "pooled-pair-fraction"});
    auto& pr = rep.table("replicas", {"replica", "trajectories", "window_trajectories",
                                      "occupied", "pairs", "within_1", "within_2",
                                      "within_3_top"});
    for (std::size_t r = 0; r < lad.replicas.size(); ++r)
    {
        auto const& x = lad.replicas[r];
        pr.add({r, x.trajectories, x.windowTrajectories, x.occupied, x.pairs, x.within1,
                x.within2, x.within3.empty() ? 0 : x.within3.back()});
    }
    rep.summary["occupied"] = lad.occupied;
    rep.summary["pairs"] = lad.pairs;
    rep.summary["within1"] = lad.within1;
    rep.summary["within2"] = lad.within2;
    rep.accounting["replicas"] = lad.replicas.size();
    rep.bound("a discarded tail returns to the base (per tail)", lad.truncationBound);
    if (lad.degenerate())
    {
        rep.verdicts.push_back({"chain distance <= 3 along the ladder",
                                "insufficient occupied pairs",
                                "interlacement window holds fewer than two points"});
        return;
    }
    rep.verdict("fraction within 3 non-decreasing along the ladder", nonDecreasing(f),
                "fractions along ladder");
    rep.verdict("fraction within 3 at the top rung >= 0.95", f.back() >= 0.95,
                "top fraction " + num(f.back()));
    Plot p;
    p.name = "ladder";
    p.title = "chain distance <= 3 among occupied window pairs";
    p.xLabel = "base radius";
    p.yLabel = "fraction";
    Series s{"fraction within 3", {}, f, true};
    for (auto r : lad.ladder)
        s.x.push_back(static_cast<double>(r));
    p.series.push_back(s);
    rep.plots.push_back(p);
}

inline void addDecayTable(Report& rep,
                          std::string const& name,
                          std::vector<std::int64_t> const& radii,
                          std::vector<DecaySample> const& samples)
{
    auto cols = std::vector<std::string>{"distance", "gauge"};
    for (auto const& k : probabilityColumns())
        cols.push_back(k);
    auto& t = rep.table(name, cols);
    for (std::size_t i = 0; i < samples.size(); ++i)
    {
        std::vector<Json> row{radii[i], samples[i].gauge};
        for (auto& v : probabilityCells(
                 estimateProbability(samples[i].successes, samples[i].trials)))
            row.push_back(v);
        t.add(row);
    }
}

inline void runDimension(ExperimentConfig const& c, Report& rep)
{
    auto const green = makeGreen(c);
    unsigned const th = workers(c);
    double const target = -(c.d - 2.0);
    auto has = [&](char const* s) {
        return std::find(c.relations.begin(), c.relations.end(), s) != c.relations.end();
    };
    auto plotFit = [&](std::string name, std::string title, std::vector<double> g,
                       std::vector<double> v, RegressionResult const& fit) {
        rep.plots.push_back(fitPlot(std::move(name), std::move(title), g, v, fit));
    };
    std::vector<std::uint64_t> seeds;
    for (std::uint64_t i = 0; i < 6; ++i)
        seeds.push_back(deriveSeed(c.seed, StreamDomain::replica, i));

    if (has("hit"))
    {
        auto const h = hittingExponent(green, c.distances, c.distances, c.walks,
                                       c.escapeRadius, seeds[0], th);
        auto& t = rep.table("hitting_exact", {"distance", "probability"});
        for (std::size_t i = 0; i < h.exactRadii.size(); ++i)
            t.add({h.exactRadii[i], h.exactValues[i]});
        addDecayTable(rep, "hitting_mc", h.mcRadii, h.mcSamples);
        rep.summary["hittingExact"] = fitJson(h.exact);
        rep.summary["hittingMonteCarlo"] = fitJson(h.monteCarlo);
        rep.bound("hitting frequency per walk", h.truncationBound);
        rep.verdict("exact hitting slope within 0.2 of -(d-2)", slopeWithin(h.exact, target, 0.2),
                    slopeText(h.exact));
        rep.verdict("Monte Carlo hitting slope within 0.5 of -(d-2)",
                    slopeWithin(h.monteCarlo, target, 0.5), slopeText(h.monteCarlo));
    }
    std::vector<MeanDecaySample> lSamples;
    if (has("M") || has("L"))
    {
        for (char const* which : {"M", "L"})
        {
            if (!has(which))
                continue;
            bool const m = std::string(which) == "M";
            auto const s = m ? relationMDecay(green, c.distances, c.u, c.escapeRadius,
                                              c.replicas, seeds[1], th)
                             : relationLDecay(green, c.distances, c.escapeRadius, c.replicas,
                                              seeds[2], th);
            auto cols = std::vector<std::string>{"distance", "gauge"};
            for (auto const& k : meanColumns())
                cols.push_back(k);
            cols.push_back("nonzero");
            auto& t = rep.table(std::string("relation_") + which, cols);
            std::vector<double> g;
            std::vector<double> v;
            for (std::size_t i = 0; i < s.samples.size(); ++i)
            {
                std::vector<Json> row{s.radii[i], s.samples[i].gauge};
                for (auto& x : meanCells(s.samples[i].value))
                    row.push_back(x);
                row.push_back(s.nonzero[i]);
                t.add(row);
                g.push_back(s.samples[i].gauge);
                v.push_back(s.samples[i].value.mean);
            }
            rep.summary[std::string("relation") + which] = fitJson(s.fit);
            if (m)
                rep.bound("relation M soup (max over replicas)", s.truncationBound);
            else
                lSamples = s.samples;
            rep.verdict(std::string("relation ") + which + " slope within 0.5 of -(d-2)",
                        slopeWithin(s.fit, target, 0.5), slopeText(s.fit));
            plotFit(std::string("relation_") + which, std::string("relation ") + which, g, v,
                    s.fit);
        }
    }
    if (has("R"))
    {
        auto const r = relationRDecay(green, c.distances, c.escapeRadius, c.walks, seeds[3], th);
        addDecayTable(rep, "relation_R", r.radii, r.samples);
        rep.summary["relationR"] = fitJson(r.fit);
        rep.verdict("relation R slope within 0.5 of -(d-2)", slopeWithin(r.fit, target, 0.5),
                    slopeText(r.fit));
        if (!lSamples.empty())
        {
            bool agree = true;
            for (std::size_t i = 0; i < lSamples.size(); ++i)
            {
                double const p = static_cast<double>(r.samples[i].successes)
                                 / static_cast<double>(r.samples[i].trials);
                double const se = std::hypot(lSamples[i].value.standardError(),
                                             std::sqrt(p * (1 - p) / r.samples[i].trials));
                agree = agree && std::fabs(p - lSamples[i].value.mean) <= 3 * se;
            }
            rep.verdict("relations L and R agree within joint 3 sigma", agree,
                        "per distance");
        }
    }
    for (char const* which : {"C", "S"})
    {
        if (!has(which))
            continue;
        bool const slab = std::string(which) == "S";
        int const n = slab ? 2 : (c.d + 1) / 2;
        auto const cd = compositionDecay(green, n, slab, c.compositionDistances, c.u, 3, 2,
                                         c.compositionReplicas,
                                         seeds[slab ? 5 : 4], th);
        addDecayTable(rep, slab ? "slab_chain" : "composition", cd.distances, cd.samples);
        rep.summary[slab ? "slabChain" : "composition"] = fitJson(cd.fit);
        double worst = 0.0;
        for (auto const& e : cd.estimates)
            worst = std::max(worst, e.returnBound);
        rep.bound(slab ? "slab chain layer tail (max)" : "composition layer tail (max)", worst);
        if (slab)
            rep.verdict("two-slab chain slope within 0.6 of -(d-4)",
                        slopeWithin(cd.fit, -(c.d - 4.0), 0.6), slopeText(cd.fit));
        else
            rep.verdict("composition C_n, n = ceil(d/2): slope CI contains 0",
                        std::isfinite(cd.fit.slope) && cd.fit.slopeCI.contains(0.0),
                        slopeText(cd.fit));
    }
}

inline void runGenerations(ExperimentConfig const& c, RunOptions const& ro, Report& rep)
{
    auto const green = makeGreen(c);
    GenerationOptions g;
    g.escapeRadius = c.escapeRadius;
    g.windowRadius = c.windowRadius;
    g.sizeLimit = c.sizeLimit;
    std::vector<GenerationStack> stacks;
    auto const gc = generationCounts(green, c.u, c.depth, g, c.replicas, c.seed, workers(c),
                                     &stacks);
    auto& t = rep.table("generation_counts", {"k", "stacks", "observed", "expected", "z",
                                              "kept_discarded_r", "ci_method"});
    for (auto const& r : gc.rows)
        t.add({r.k, r.stacks, r.observed, r.expected, r.zScore,
               r.keptVsDiscarded.n ? Json(r.keptVsDiscarded.r) : Json(nullptr),
               "poisson-sum-z"});
    rep.summary["generationZeroGof"] = testJson(gc.generationZeroGof);
    rep.accounting["stacks"] = gc.stacks;
    rep.accounting["incompleteStacks"] = gc.incomplete;
    rep.bound("generation trajectory tail (max over stacks)", gc.truncationBound);
    if (gc.incomplete > 0)
        rep.markIncomplete(std::to_string(gc.incomplete) + " stacks exceeded sizeLimit");
    for (auto const& r : gc.rows)
    {
        if (r.k > 2)
            break;
        rep.verdict("generation " + std::to_string(r.k) + " count within 3 sigma",
                    std::fabs(r.zScore) <= 3.0, "z = " + num(r.zScore));
        if (r.k > 0 && r.keptVsDiscarded.n > 3)
            rep.verdict("generation " + std::to_string(r.k)
                            + " kept and discarded counts uncorrelated",
                        r.keptVsDiscarded.withinSigma(3.0),
                        "z = " + num(r.keptVsDiscarded.z));
    }
    if (c.persist && ro.write)
    {
        std::filesystem::create_directories(ro.out);
        std::ofstream f(ro.out / "soup-stacks.jsonl", std::ios::binary);
        for (auto const& st : stacks)
            for (std::size_t k = 0; k < st.generations.size(); ++k)
                writeSoup(f, st.generations[k], static_cast<int>(k));
    }
    if (!c.distances.empty())
    {
        auto const rd = reachDecay(green, 2, c.distances, c.u, 4, c.replicas,
                                   deriveSeed(c.seed, StreamDomain::replica, 1u << 20),
                                   workers(c));
        std::vector<DecaySample> s = rd.samples;
        addDecayTable(rep, "reach", rd.distances, s);
        rep.summary["reach"] = fitJson(rd.fit);
        double worst = 0;
        for (auto const& e : rd.estimates)
            worst = std::max(worst, e.returnBound);
        rep.bound("reach generation tail (max)", worst);
        rep.verdict("reach(2, x) slope within 0.6 of -1", slopeWithin(rd.fit, -1.0, 0.6),
                    slopeText(rd.fit));
    }
}

inline void runPoissonChecks(ExperimentConfig const& c, Report& rep)
{
    auto const grid = shiftDistanceGrid({10, 1e2, 1e3, 1e4}, 10, 5);
    auto& t = rep.table("shift_distance", {"mu", "mu0", "s", "distance"});
    for (auto const& [key, vals] : grid.values)
        for (std::size_t i = 0; i < grid.mus.size(); ++i)
            if (!std::isnan(vals[i]))
                t.add({grid.mus[i], key.first, key.second, vals[i]});
    rep.summary["shiftDistanceWorstAtLargestMu"] = grid.worstAtLargest;
    rep.summary["shiftDistanceWorstCase"] = {grid.worstCase.first, grid.worstCase.second};
    rep.verdict("shift distance monotone in mu", grid.monotone, "grid mu0 <= 10, s <= 5");
    rep.verdict("shift distance < 0.05 at mu = 1e4", grid.worstAtLargest < 0.05,
                "worst " + num(grid.worstAtLargest) + " at mu0 = "
                    + std::to_string(grid.worstCase.first) + ", s = "
                    + std::to_string(grid.worstCase.second));
    Plot p;
    p.name = "shift_distance";
    p.title = "Poisson shift distance";
    p.xLabel = "mu";
    p.yLabel = "distance";
    p.logX = p.logY = true;
    for (auto const& [key, vals] : grid.values)
        if (key.second == 5 && (key.first == 1 || key.first == 10))
            p.series.push_back({"mu0 " + std::to_string(key.first) + ", s 5", grid.mus, vals, true});
    rep.plots.push_back(p);

    auto const green = makeGreen(c);
    double const factor = static_cast<double>(c.escapeRadius)
                          / static_cast<double>(std::max<std::int64_t>(1, c.baseRadius));
    auto& nt = rep.table("nested", {"rho", "escape_radius", "replicas", "mean_lemma_tv",
                                    "independence_p", "difference_mean", "cap_B", "cap_K"});
    auto& st = rep.table("shift_identity", {"rho", "s", "events", "shift_identity_tv",
                                            "two_sample_p", "lemma_tv"});
    std::vector<double> tvs;
    bool allPass = true;
    for (std::size_t i = 0; i < c.distances.size(); ++i)
    {
        auto const rho = c.distances[i];
        auto const esc = static_cast<std::int64_t>(std::llround(factor * static_cast<double>(rho)));
        auto const n = nestedCounts(green, rho, c.u, esc, c.replicas,
                                    deriveSeed(c.seed, StreamDomain::replica, i), workers(c));
        double const tv = n.report.meanLemmaTV();
        tvs.push_back(tv);
        nt.add({rho, esc, n.report.replicas, tv, n.report.independence.pValue,
                n.report.differenceMean, std::isnan(n.capB) ? Json(nullptr) : Json(n.capB),
                n.capK});
        for (auto const& r : n.report.rows)
        {
            st.add({rho, r.s, r.events, r.shiftIdentityTV, r.shiftIdentityTest.pValue,
                    r.lemmaTV});
            allPass = allPass && r.shiftIdentityTest.passes();
        }
    }
    rep.accounting["replicasPerRadius"] = c.replicas;
    rep.verdict("nested-count lemma distance decreasing in rho", strictlyDecreasing(tvs),
                "mean lemma TV per rho");
    rep.verdict("shift identity two-sample tests p > 0.01", allPass, "all retained rows");
}

inline void runDensity(ExperimentConfig const& c, Report& rep)
{
    auto const green = makeGreen(c);
    auto const o = onePointDensity(green, c.baseRadius, c.windowRadius, c.u, c.escapeRadius,
                                   c.replicas, c.seed, workers(c));
    auto cols = std::vector<std::string>{"window_radius", "expected"};
    for (auto const& k : meanColumns())
        cols.push_back(k);
    cols.push_back("z");
    auto& t = rep.table("density", cols);
    std::vector<Json> row{c.windowRadius, o.expected};
    for (auto& x : meanCells(o.density))
        row.push_back(x);
    row.push_back(o.density.zScore(o.expected));
    t.add(row);
    rep.summary["cap0"] = o.cap0;
    rep.summary["expected"] = o.expected;
    rep.summary["density"] = o.density.mean;
    rep.bound("window soup (max over replicas)", o.truncationBound);
    rep.verdict("window density within 3 sigma of 1 - exp(-u cap({0}))",
                std::fabs(o.density.zScore(o.expected)) <= 3.0,
                "z = " + num(o.density.zScore(o.expected)));
    if (!c.distances.empty())
    {
        auto const len = c.distances.front();
        auto const ld = rayDensity(green, len, c.u, std::max(c.escapeRadius, 2 * len),
                                   c.replicas, deriveSeed(c.seed, StreamDomain::replica, 1u << 20),
                                   workers(c));
        auto& rt = rep.table("ray", {"n", "running_average", "replicas", "ci_method"});
        for (std::size_t i = 0; i < ld.runningAverage.size(); ++i)
            rt.add({i + 1, ld.runningAverage[i], ld.replicas, "normal-mean-se"});
        rep.summary["rayTerminal"] = ld.terminal;
        rep.summary["rayCI"] = {ld.ci.lo, ld.ci.hi};
        rep.verdict("ray running average within 3 sigma", std::fabs(ld.zScore) <= 3.0,
                    "z = " + num(ld.zScore));
        Plot p;
        p.name = "ray_density";
        p.title = "running occupation average along a ray";
        p.xLabel = "n";
        p.yLabel = "average";
        Series s{"running average", {}, ld.runningAverage, true};
        for (std::size_t i = 0; i < ld.runningAverage.size(); ++i)
            s.x.push_back(static_cast<double>(i + 1));
        p.series.push_back(s);
        p.series.push_back({"1 - exp(-u cap0)", {1.0, static_cast<double>(len)},
                            {ld.expected, ld.expected}, true});
        rep.plots.push_back(p);
    }
}

}  // namespace detail

//---------------------------------------------------------------------------//
/*!
 * Run one subcommand. The report (and any persisted soups) are written
 * under ro.out; wall-clock time goes to timing.json so that report.json
 * depends on the configuration alone. A resource cap leaves a partial
 * report flagged incomplete.
 */
inline Report run(ExperimentConfig const& c, RunOptions const& ro = {})
{
    Report rep;
    rep.subcommand = c.subcommand;
    for (auto const& [k, v] : c.values)
        rep.config[k] = v;
    rep.accounting["replicas"] = c.replicas;
    auto const t0 = std::chrono::steady_clock::now();
    try
    {
        auto const& s = c.subcommand;
        if (s == "green")
            detail::runGreen(c, rep);
        else if (s == "capacity")
            detail::runCapacity(c, rep);
        else if (s == "sample-soup")
            detail::runSampleSoup(c, ro, rep);
        else if (s == "connectivity")
            detail::runConnectivity(c, rep);
        else if (s == "dimension")
            detail::runDimension(c, rep);
        else if (s == "generations")
            detail::runGenerations(c, ro, rep);
        else if (s == "poisson-checks")
            detail::runPoissonChecks(c, rep);
        else if (s == "density")
            detail::runDensity(c, rep);
    }
    catch (ResourceCapError const& e)
    {
        rep.markIncomplete(e.what());
    }
    catch (RunawayWalkError const& e)
    {
        rep.markIncomplete(e.what());
    }
    double const seconds
        = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    if (ro.write)
    {
        rep.write(ro.out, c.plots);
        std::ofstream f(ro.out / "timing.json", std::ios::binary);
        f << Json{{"subcommand", c.subcommand}, {"wallClockSeconds", seconds}}.dump(2) << "\n";
    }
    return rep;
}

}  // namespace ri::harness
