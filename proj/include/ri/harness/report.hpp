#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <filesystem>
#include <fstream>
#include <limits>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "../analysis.hpp"

namespace ri::harness {

using Json = nlohmann::ordered_json;

enum class ExitCode
{
    ok = 0,
    config = 2,
    resource = 3,
    check = 4,
};

/// Rows of one CSV table; cells are JSON scalars.
struct Table
{
    std::string name;
    std::vector<std::string> columns;
    std::vector<std::vector<Json>> rows;

    void add(std::vector<Json> row)
    {
        if (row.size() != columns.size())
            throw std::logic_error("table " + name + ": row width mismatch");
        rows.push_back(std::move(row));
    }
};

/// Columns appended to every probability row.
inline std::vector<std::string> probabilityColumns()
{
    return {"estimate", "ci_low", "ci_high", "successes", "trials", "ci_method"};
}

inline std::vector<Json> probabilityCells(ProbabilityEstimate const& p)
{
    return {p.estimate, p.ci.lo, p.ci.hi, p.successes, p.trials, p.method};
}

/// Columns appended to every sample-mean row.
inline std::vector<std::string> meanColumns()
{
    return {"mean", "standard_error", "replicas", "ci_method"};
}

inline std::vector<Json> meanCells(MeanEstimate const& m)
{
    return {m.mean, m.standardError(), m.n, "normal-mean-se"};
}

struct Series
{
    std::string label;
    std::vector<double> x;
    std::vector<double> y;
    /// Join points with a line instead of drawing markers.
    bool line = false;
};

struct Plot
{
    std::string name;
    std::string title;
    std::string xLabel;
    std::string yLabel;
    bool logX = false;
    bool logY = false;
    std::vector<Series> series;
};

struct Verdict
{
    std::string check;
    /// "pass", "fail" or a reason the check could not be decided.
    std::string status;
    std::string detail;

    bool failed() const { return status == "fail"; }
};

namespace detail {

inline std::string csvCell(Json const& v)
{
    if (v.is_string())
    {
        auto s = v.get<std::string>();
        if (s.find_first_of(",\"\n") == std::string::npos)
            return s;
        std::string q = "\"";
        for (char c : s)
            q += (c == '"') ? std::string("\"\"") : std::string(1, c);
        return q + "\"";
    }
    if (v.is_null())
        return "";
    return v.dump();
}

inline std::string fmt(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.2f", x);
    return buf;
}

inline std::string fmtTick(double x)
{
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3g", x);
    return buf;
}

inline std::string escapeXml(std::string const& s)
{
    std::string o;
    for (char c : s)
    {
        switch (c)
        {
            case '<': o += "&lt;"; break;
            case '>': o += "&gt;"; break;
            case '&': o += "&amp;"; break;
            default: o += c;
        }
    }
    return o;
}

}  // namespace detail

inline std::string renderCsv(Table const& t)
{
    std::string s;
    for (std::size_t i = 0; i < t.columns.size(); ++i)
        s += (i ? "," : "") + t.columns[i];
    s += '\n';
    for (auto const& row : t.rows)
    {
        for (std::size_t i = 0; i < row.size(); ++i)
            s += (i ? "," : "") + detail::csvCell(row[i]);
        s += '\n';
    }
    return s;
}

/// Static SVG scatter/line chart; non-positive values are skipped on log axes.
inline std::string renderSvg(Plot const& p)
{
    constexpr double W = 640, H = 420, L = 70, R = 150, T = 40, B = 50;
    auto tx = [&](double v) { return p.logX ? std::log10(v) : v; };
    auto ty = [&](double v) { return p.logY ? std::log10(v) : v; };
    auto usable = [&](double x, double y) {
        return std::isfinite(x) && std::isfinite(y) && (!p.logX || x > 0)
               && (!p.logY || y > 0);
    };
    double x0 = std::numeric_limits<double>::infinity(), x1 = -x0, y0 = x0, y1 = -x0;
    for (auto const& s : p.series)
        for (std::size_t i = 0; i < s.x.size(); ++i)
            if (usable(s.x[i], s.y[i]))
            {
                x0 = std::min(x0, tx(s.x[i]));
                x1 = std::max(x1, tx(s.x[i]));
                y0 = std::min(y0, ty(s.y[i]));
                y1 = std::max(y1, ty(s.y[i]));
            }
    if (!std::isfinite(x0))
    {
        x0 = y0 = 0;
        x1 = y1 = 1;
    }
    if (x1 - x0 < 1e-12)
        x1 = x0 + 1;
    if (y1 - y0 < 1e-12)
        y1 = y0 + 1;
    double const padx = 0.05 * (x1 - x0), pady = 0.05 * (y1 - y0);
    x0 -= padx, x1 += padx, y0 -= pady, y1 += pady;
    auto px = [&](double v) { return L + (tx(v) - x0) / (x1 - x0) * (W - L - R); };
    auto py = [&](double v) { return H - B - (ty(v) - y0) / (y1 - y0) * (H - T - B); };

    static char const* const colors[]
        = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"};
    std::string s = "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"640\" height=\"420\" "
                    "font-family=\"sans-serif\" font-size=\"12\">\n";
    s += "<rect width=\"640\" height=\"420\" fill=\"white\"/>\n";
    s += "<text x=\"" + detail::fmt(L) + "\" y=\"24\" font-size=\"14\">"
         + detail::escapeXml(p.title) + "</text>\n";
    s += "<rect x=\"" + detail::fmt(L) + "\" y=\"" + detail::fmt(T) + "\" width=\""
         + detail::fmt(W - L - R) + "\" height=\"" + detail::fmt(H - T - B)
         + "\" fill=\"none\" stroke=\"black\"/>\n";
    for (int i = 0; i <= 4; ++i)
    {
        double const fx = x0 + (x1 - x0) * i / 4.0;
        double const fy = y0 + (y1 - y0) * i / 4.0;
        double const vx = p.logX ? std::pow(10.0, fx) : fx;
        double const vy = p.logY ? std::pow(10.0, fy) : fy;
        s += "<text x=\"" + detail::fmt(px(vx)) + "\" y=\"" + detail::fmt(H - B + 16)
             + "\" text-anchor=\"middle\">" + detail::fmtTick(vx) + "</text>\n";
        s += "<text x=\"" + detail::fmt(L - 6) + "\" y=\"" + detail::fmt(py(vy) + 4)
             + "\" text-anchor=\"end\">" + detail::fmtTick(vy) + "</text>\n";
    }
    s += "<text x=\"" + detail::fmt(L + (W - L - R) / 2) + "\" y=\"" + detail::fmt(H - 12)
         + "\" text-anchor=\"middle\">" + detail::escapeXml(p.xLabel) + "</text>\n";
    s += "<text x=\"16\" y=\"" + detail::fmt(T + (H - T - B) / 2)
         + "\" transform=\"rotate(-90 16 " + detail::fmt(T + (H - T - B) / 2)
         + ")\" text-anchor=\"middle\">" + detail::escapeXml(p.yLabel) + "</text>\n";
    for (std::size_t k = 0; k < p.series.size(); ++k)
    {
        auto const& ser = p.series[k];
        std::string const c = colors[k % 6];
        if (ser.line)
        {
            std::string pts;
            for (std::size_t i = 0; i < ser.x.size(); ++i)
                if (usable(ser.x[i], ser.y[i]))
                    pts += detail::fmt(px(ser.x[i])) + "," + detail::fmt(py(ser.y[i])) + " ";
            s += "<polyline fill=\"none\" stroke=\"" + c + "\" points=\"" + pts + "\"/>\n";
        }
        else
        {
            for (std::size_t i = 0; i < ser.x.size(); ++i)
                if (usable(ser.x[i], ser.y[i]))
                    s += "<circle cx=\"" + detail::fmt(px(ser.x[i])) + "\" cy=\""
                         + detail::fmt(py(ser.y[i])) + "\" r=\"3\" fill=\"" + c + "\"/>\n";
        }
        double const ly = T + 14 + 18.0 * static_cast<double>(k);
        s += "<rect x=\"" + detail::fmt(W - R + 10) + "\" y=\"" + detail::fmt(ly - 9)
             + "\" width=\"10\" height=\"10\" fill=\"" + c + "\"/>\n";
        s += "<text x=\"" + detail::fmt(W - R + 26) + "\" y=\"" + detail::fmt(ly) + "\">"
             + detail::escapeXml(ser.label) + "</text>\n";
    }
    s += "</svg>\n";
    return s;
}

/// Scatter of the data and the fitted power law a * gauge^slope.
inline Plot fitPlot(std::string name,
                    std::string title,
                    std::vector<double> const& gauges,
                    std::vector<double> const& values,
                    RegressionResult const& fit)
{
    Plot p;
    p.name = std::move(name);
    p.title = std::move(title);
    p.xLabel = "gauge";
    p.yLabel = "estimate";
    p.logX = p.logY = true;
    p.series.push_back({"estimate", gauges, values, false});
    if (!gauges.empty() && std::isfinite(fit.slope))
    {
        auto const [lo, hi] = std::minmax_element(gauges.begin(), gauges.end());
        Series f{"fit slope " + detail::fmtTick(fit.slope), {}, {}, true};
        for (double g : {*lo, *hi})
        {
            f.x.push_back(g);
            f.y.push_back(std::exp(fit.intercept + fit.slope * std::log(g)));
        }
        p.series.push_back(f);
    }
    return p;
}

//---------------------------------------------------------------------------//
/*!
 * Experiment report: config echo, summary metrics, tables, truncation
 * ledger, verdicts and replica accounting. Its JSON form contains no
 * timing, so identical runs produce identical bytes.
 */
class Report
{
  public:
    std::string subcommand;
    Json config = Json::object();
    Json summary = Json::object();
    Json accounting = Json::object();
    std::deque<Table> tables;  // stable references from table()
    std::vector<Plot> plots;
    std::vector<Verdict> verdicts;
    /// quantity -> bound on the probability that truncation changed it.
    std::vector<std::pair<std::string, double>> truncation;
    bool incomplete = false;
    std::string incompleteReason;

    Table& table(std::string name, std::vector<std::string> columns)
    {
        tables.push_back({std::move(name), std::move(columns), {}});
        return tables.back();
    }

    void verdict(std::string check, bool ok, std::string detail)
    {
        verdicts.push_back({std::move(check), ok ? "pass" : "fail", std::move(detail)});
    }

    void bound(std::string quantity, double b)
    {
        truncation.emplace_back(std::move(quantity), b);
    }

    void markIncomplete(std::string reason)
    {
        incomplete = true;
        if (!incompleteReason.empty())
            incompleteReason += "; ";
        incompleteReason += reason;
    }

    ExitCode exitCode() const
    {
        if (incomplete)
            return ExitCode::resource;
        for (auto const& v : verdicts)
            if (v.failed())
                return ExitCode::check;
        return ExitCode::ok;
    }

    Json toJson() const
    {
        Json j;
        j["subcommand"] = subcommand;
        j["config"] = config;
        j["summary"] = summary;
        Json tl = Json::array();
        for (auto const& [q, b] : truncation)
            tl.push_back({{"quantity", q}, {"bound", std::isnan(b) ? Json(nullptr) : Json(b)}});
        j["truncation"] = tl;
        Json vs = Json::array();
        for (auto const& v : verdicts)
            vs.push_back({{"check", v.check}, {"status", v.status}, {"detail", v.detail}});
        j["verdicts"] = vs;
        j["accounting"] = accounting;
        Json ts = Json::object();
        for (auto const& t : tables)
        {
            Json rows = Json::array();
            for (auto const& r : t.rows)
            {
                Json o;
                for (std::size_t i = 0; i < r.size(); ++i)
                    o[t.columns[i]] = r[i];
                rows.push_back(o);
            }
            ts[t.name] = rows;
        }
        j["tables"] = ts;
        j["complete"] = !incomplete;
        if (incomplete)
            j["incompleteReason"] = incompleteReason;
        return j;
    }

    /// report.json, one CSV per table and (optionally) one SVG per plot.
    void write(std::filesystem::path const& dir, bool withPlots = true) const
    {
        std::filesystem::create_directories(dir);
        auto put = [&](std::string const& name, std::string const& body) {
            std::ofstream f(dir / name, std::ios::binary);
            if (!f)
                throw std::runtime_error("cannot write " + (dir / name).string());
            f << body;
        };
        put("report.json", toJson().dump(2) + "\n");
        for (auto const& t : tables)
            put(t.name + ".csv", renderCsv(t));
        if (withPlots)
            for (auto const& p : plots)
                put(p.name + ".svg", renderSvg(p));
    }
};

}  // namespace ri::harness
