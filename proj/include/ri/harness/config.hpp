#pragma once

#include <algorithm>
#include <charconv>
#include <cstdint>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "../lattice.hpp"

namespace ri::harness {

/// Invalid configuration; the message lists one diagnostic per field.
class ConfigError : public std::runtime_error
{
  public:
    explicit ConfigError(std::vector<std::string> diagnostics)
        : std::runtime_error(join(diagnostics)), diagnostics_{std::move(diagnostics)}
    {
    }

    std::vector<std::string> const& diagnostics() const { return diagnostics_; }

  private:
    static std::string join(std::vector<std::string> const& v)
    {
        std::string s = "invalid configuration:";
        for (auto const& d : v)
            s += "\n  " + d;
        return s;
    }

    std::vector<std::string> diagnostics_;
};

inline std::vector<std::string> const& subcommands()
{
    static std::vector<std::string> const names{"green",
                                                "capacity",
                                                "sample-soup",
                                                "connectivity",
                                                "dimension",
                                                "generations",
                                                "poisson-checks",
                                                "density"};
    return names;
}

//---------------------------------------------------------------------------//
/*!
 * Flat key=value configuration.
 *
 * Values start from per-subcommand defaults, then a file, then command-line
 * overrides; parse() converts and validates everything at once.
 */
struct ExperimentConfig
{
    std::string subcommand;

    int d = 5;
    double u = 1.0;
    double uLow = 0.0;
    double uHigh = 1.0;
    std::int64_t baseRadius = 3;
    std::int64_t windowRadius = 3;
    std::int64_t escapeRadius = 24;
    std::uint64_t replicas = 100;
    std::uint64_t seed = 1;
    unsigned threads = 1;

    /// Displacement l1 radius (green).
    std::int64_t radius = 5;
    /// Walks per site or per estimate (capacity, dimension).
    std::uint64_t walks = 10000;
    std::vector<std::int64_t> distances;
    std::vector<std::int64_t> ladder;
    int depth = 2;
    double quadTolerance = 1e-10;
    std::string mode = "automatic";
    std::string input;
    bool persist = false;
    bool plots = true;
    std::uint64_t maxTrajectories = 10'000'000;
    std::uint64_t sizeLimit = 5000;
    /// Studies run by dimension: hit, M, L, R, C (C_n, n = ceil(d/2)) and
    /// S (two-slab chain).
    std::vector<std::string> relations;
    std::vector<std::int64_t> compositionDistances;
    std::uint64_t compositionReplicas = 100;

    /// Effective key=value pairs in key order (the config echo).
    std::map<std::string, std::string> values;

    static std::map<std::string, std::string> defaults(std::string const& sub);
    static ExperimentConfig parse(std::string const& sub,
                                  std::map<std::string, std::string> values);
};

namespace detail {

inline std::string trim(std::string_view s)
{
    auto const b = s.find_first_not_of(" \t\r");
    if (b == std::string_view::npos)
        return {};
    auto const e = s.find_last_not_of(" \t\r");
    return std::string(s.substr(b, e - b + 1));
}

/// Split "key=value"; false if there is no '=' or the key is empty.
inline bool splitAssignment(std::string_view line, std::string& key, std::string& value)
{
    auto const eq = line.find('=');
    if (eq == std::string_view::npos)
        return false;
    key = trim(line.substr(0, eq));
    value = trim(line.substr(eq + 1));
    return !key.empty();
}

template<class T>
bool parseNumber(std::string const& s, T& out)
{
    if constexpr (std::is_floating_point_v<T>)
    {
        try
        {
            std::size_t pos = 0;
            out = static_cast<T>(std::stod(s, &pos));
            return pos == s.size();
        }
        catch (std::exception const&)
        {
            return false;
        }
    }
    else
    {
        auto const* end = s.data() + s.size();
        auto [p, ec] = std::from_chars(s.data(), end, out);
        return ec == std::errc{} && p == end;
    }
}

}  // namespace detail

/// Read a config file: one key=value per line, '#' starts a comment.
inline std::map<std::string, std::string> readConfigFile(std::string const& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError({"config: cannot read file '" + path + "'"});
    std::map<std::string, std::string> out;
    std::vector<std::string> errors;
    std::string line;
    int n = 0;
    while (std::getline(in, line))
    {
        ++n;
        if (auto const h = line.find('#'); h != std::string::npos)
            line.erase(h);
        if (detail::trim(line).empty())
            continue;
        std::string k;
        std::string v;
        if (!detail::splitAssignment(line, k, v))
        {
            errors.push_back(path + ":" + std::to_string(n)
                             + ": expected key=value");
            continue;
        }
        out[k] = v;
    }
    if (!errors.empty())
        throw ConfigError(errors);
    return out;
}

/// Parse command-line "key=value" overrides.
inline std::map<std::string, std::string>
parseOverrides(std::vector<std::string> const& args)
{
    std::map<std::string, std::string> out;
    std::vector<std::string> errors;
    for (auto const& a : args)
    {
        std::string k;
        std::string v;
        if (!detail::splitAssignment(a, k, v))
            errors.push_back("override '" + a + "': expected key=value");
        else
            out[k] = v;
    }
    if (!errors.empty())
        throw ConfigError(errors);
    return out;
}

inline std::map<std::string, std::string>
ExperimentConfig::defaults(std::string const& sub)
{
    std::map<std::string, std::string> v{
        {"d", "5"},
        {"u", "1"},
        {"uLow", "0"},
        {"replicas", "100"},
        {"seed", "1"},
        {"threads", "1"},
        {"quadTolerance", "1e-10"},
        {"plots", "true"},
        {"persist", "false"},
    };
    auto set = [&](std::initializer_list<std::pair<char const*, char const*>> kv) {
        for (auto const& [k, x] : kv)
            v[k] = x;
    };
    if (sub == "green")
        set({{"radius", "5"}, {"baseRadius", "5"}, {"windowRadius", "0"}, {"escapeRadius", "10"}});
    else if (sub == "capacity")
        set({{"baseRadius", "2"}, {"windowRadius", "0"}, {"escapeRadius", "64"}, {"walks", "10000"}});
    else if (sub == "sample-soup")
        set({{"baseRadius", "3"}, {"windowRadius", "0"}, {"escapeRadius", "24"},
             {"replicas", "1"}, {"persist", "true"}, {"mode", "automatic"}});
    else if (sub == "connectivity")
        set({{"baseRadius", "20"}, {"windowRadius", "3"}, {"escapeRadius", "40"},
             {"replicas", "1"}});
    else if (sub == "dimension")
        set({{"baseRadius", "1"}, {"windowRadius", "0"}, {"escapeRadius", "96"},
             {"replicas", "1000"}, {"distances", "4,8,12,16"}, {"walks", "100000"},
             {"relations", "hit,M,L,R,C,S"}, {"compositionDistances", "1,2,3,4"},
             {"compositionReplicas", "100"}});
    else if (sub == "generations")
        set({{"baseRadius", "3"}, {"windowRadius", "3"}, {"escapeRadius", "24"},
             {"replicas", "100"}, {"depth", "2"}});
    else if (sub == "poisson-checks")
        set({{"baseRadius", "4"}, {"windowRadius", "0"}, {"escapeRadius", "16"},
             {"replicas", "2000"}, {"distances", "2,4"}});
    else if (sub == "density")
        set({{"baseRadius", "4"}, {"windowRadius", "4"}, {"escapeRadius", "32"},
             {"replicas", "200"}, {"distances", "16"}});
    return v;
}

/*!
 * Convert and validate; every problem is reported, each prefixed by its
 * field. Requires windowRadius <= baseRadius <= escapeRadius / 2 and
 * replicas >= 1.
 */
inline ExperimentConfig
ExperimentConfig::parse(std::string const& sub, std::map<std::string, std::string> given)
{
    std::vector<std::string> errors;
    auto const& names = subcommands();
    if (std::find(names.begin(), names.end(), sub) == names.end())
        throw ConfigError({"subcommand: unknown '" + sub + "'"});

    ExperimentConfig c;
    c.subcommand = sub;
    c.values = defaults(sub);
    for (auto const& [k, v] : given)
        c.values[k] = v;
    if (!given.count("uHigh"))
        c.values["uHigh"] = c.values["u"];
    if (given.count("baseRadius") && !given.count("escapeRadius"))
    {
        std::int64_t b = 0;
        if (detail::parseNumber(c.values["baseRadius"], b))
            c.values["escapeRadius"] = std::to_string(8 * std::max<std::int64_t>(1, b));
    }
    if (!c.values.count("ladder") && sub == "connectivity")
    {
        std::int64_t b = 0;
        if (detail::parseNumber(c.values["baseRadius"], b) && b >= 4)
            c.values["ladder"] = std::to_string(b / 4) + "," + std::to_string(b / 2)
                                 + "," + std::to_string(b);
    }

    std::map<std::string, bool> used;
    auto field = [&](char const* key, auto& out) {
        used[key] = true;
        auto it = c.values.find(key);
        if (it == c.values.end())
            return;
        if (!detail::parseNumber(it->second, out))
            errors.push_back(std::string(key) + ": cannot parse '" + it->second
                             + "' as a number");
    };
    auto list = [&](char const* key, std::vector<std::int64_t>& out) {
        used[key] = true;
        auto it = c.values.find(key);
        if (it == c.values.end() || it->second.empty())
            return;
        std::stringstream ss(it->second);
        std::string item;
        while (std::getline(ss, item, ','))
        {
            std::int64_t x = 0;
            if (!detail::parseNumber(detail::trim(item), x) || x <= 0)
            {
                errors.push_back(std::string(key) + ": '" + item
                                 + "' is not a positive integer");
                return;
            }
            out.push_back(x);
        }
    };
    auto flag = [&](char const* key, bool& out) {
        used[key] = true;
        auto it = c.values.find(key);
        if (it == c.values.end())
            return;
        if (it->second == "true" || it->second == "1")
            out = true;
        else if (it->second == "false" || it->second == "0")
            out = false;
        else
            errors.push_back(std::string(key) + ": expected true or false");
    };
    auto text = [&](char const* key, std::string& out) {
        used[key] = true;
        if (auto it = c.values.find(key); it != c.values.end())
            out = it->second;
    };

    field("d", c.d);
    field("u", c.u);
    field("uLow", c.uLow);
    field("uHigh", c.uHigh);
    field("baseRadius", c.baseRadius);
    field("windowRadius", c.windowRadius);
    field("escapeRadius", c.escapeRadius);
    field("replicas", c.replicas);
    field("seed", c.seed);
    field("threads", c.threads);
    field("radius", c.radius);
    field("walks", c.walks);
    field("depth", c.depth);
    field("quadTolerance", c.quadTolerance);
    field("maxTrajectories", c.maxTrajectories);
    field("sizeLimit", c.sizeLimit);
    list("distances", c.distances);
    list("ladder", c.ladder);
    list("compositionDistances", c.compositionDistances);
    field("compositionReplicas", c.compositionReplicas);
    {
        used["relations"] = true;
        std::stringstream ss(c.values.count("relations") ? c.values["relations"] : "");
        std::string item;
        while (std::getline(ss, item, ','))
        {
            item = detail::trim(item);
            if (item == "hit" || item == "M" || item == "L" || item == "R"
                || item == "C" || item == "S")
                c.relations.push_back(item);
            else if (!item.empty())
                errors.push_back("relations: unknown study '" + item + "'");
        }
    }
    text("mode", c.mode);
    text("input", c.input);
    flag("persist", c.persist);
    flag("plots", c.plots);

    for (auto const& [k, v] : c.values)
        if (!used.count(k))
            errors.push_back(k + ": unknown key");

    if (c.d < kMinDim || c.d > kMaxDim)
        errors.push_back("d: must be in 3..8");
    if (!(c.u > 0))
        errors.push_back("u: must be positive");
    if (!(c.uLow >= 0) || !(c.uHigh > c.uLow))
        errors.push_back("uLow/uHigh: need 0 <= uLow < uHigh");
    if (c.windowRadius < 0)
        errors.push_back("windowRadius: must be >= 0");
    if (c.windowRadius > c.baseRadius)
        errors.push_back("windowRadius: must not exceed baseRadius");
    if (2 * c.baseRadius > c.escapeRadius)
        errors.push_back("baseRadius: must not exceed escapeRadius / 2");
    if (c.replicas < 1)
        errors.push_back("replicas: must be >= 1");
    if (c.threads < 1)
        errors.push_back("threads: must be >= 1");
    if (!(c.quadTolerance > 0))
        errors.push_back("quadTolerance: must be positive");
    if (c.depth < 0 || c.depth > 5)
        errors.push_back("depth: must be in 0..5");
    if (c.mode != "automatic" && c.mode != "equilibrium" && c.mode != "thinning")
        errors.push_back("mode: expected automatic, equilibrium or thinning");
    if (sub == "connectivity")
    {
        if (c.ladder.empty())
            errors.push_back("ladder: required (baseRadius >= 4 gives a default)");
        else if (!std::is_sorted(c.ladder.begin(), c.ladder.end())
                 || c.ladder.back() != c.baseRadius
                 || c.ladder.front() < c.windowRadius)
            errors.push_back("ladder: must increase from at least windowRadius "
                             "up to baseRadius");
    }
    if (c.compositionReplicas < 100)
        errors.push_back("compositionReplicas: must be >= 100");
    if ((sub == "dimension" || sub == "poisson-checks") && c.distances.empty())
        errors.push_back("distances: required");
    if (!errors.empty())
        throw ConfigError(errors);
    return c;
}

}  // namespace ri::harness
