#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include <gtest/gtest.h>

#include "ri/harness/config.hpp"
#include "ri/harness/persist.hpp"
#include "ri/harness/run.hpp"

using namespace ri;
using namespace ri::harness;
namespace fs = std::filesystem;

namespace {

/// Fresh scratch directory, removed on destruction.
struct Scratch
{
    fs::path dir;

    explicit Scratch(std::string const& name)
        : dir(fs::temp_directory_path() / ("ri-test-" + name + "-" + std::to_string(::getpid())))
    {
        fs::remove_all(dir);
        fs::create_directories(dir);
    }
    ~Scratch() { fs::remove_all(dir); }
};

std::string slurp(fs::path const& p)
{
    std::ifstream f(p, std::ios::binary);
    std::stringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

int runCli(std::string const& args)
{
    std::string const cmd = std::string(RI_BINARY) + " " + args + " >/dev/null 2>&1";
    int const status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

ExperimentConfig config(std::string const& sub, std::map<std::string, std::string> v)
{
    return ExperimentConfig::parse(sub, std::move(v));
}

}  // namespace

TEST(Config, Defaults)
{
    auto const c = config("sample-soup", {});
    EXPECT_EQ(c.d, 5);
    EXPECT_EQ(c.baseRadius, 3);
    EXPECT_EQ(c.escapeRadius, 24);
    EXPECT_TRUE(c.persist);
    // A larger base moves the default escape radius with it.
    EXPECT_EQ(config("sample-soup", {{"baseRadius", "4"}}).escapeRadius, 32);
    EXPECT_EQ(config("connectivity", {}).ladder, (std::vector<std::int64_t>{5, 10, 20}));
}

TEST(Config, Errors)
{
    EXPECT_THROW(config("nope", {}), ConfigError);
    EXPECT_THROW(config("green", {{"d", "2"}}), ConfigError);
    EXPECT_THROW(config("green", {{"d", "x"}}), ConfigError);
    EXPECT_THROW(config("green", {{"colour", "red"}}), ConfigError);
    EXPECT_THROW(config("sample-soup", {{"u", "-1"}}), ConfigError);
    EXPECT_THROW(config("sample-soup", {{"uLow", "2"}, {"uHigh", "1"}}), ConfigError);
    EXPECT_THROW(config("sample-soup", {{"mode", "fast"}}), ConfigError);
    EXPECT_THROW(config("sample-soup", {{"baseRadius", "10"}, {"escapeRadius", "12"}}), ConfigError);
    EXPECT_THROW(config("connectivity", {{"ladder", "5,10"}}), ConfigError);
    EXPECT_THROW(config("dimension", {{"relations", "hit,Q"}}), ConfigError);
    EXPECT_THROW(config("dimension", {{"compositionReplicas", "50"}}), ConfigError);
    EXPECT_THROW(parseOverrides({"novalue"}), ConfigError);
    try
    {
        config("green", {{"d", "9"}, {"replicas", "0"}});
        FAIL();
    }
    catch (ConfigError const& e)
    {
        // Every problem is listed, not only the first.
        EXPECT_EQ(e.diagnostics().size(), 2u);
    }
}

TEST(Config, File)
{
    Scratch s("config");
    {
        std::ofstream f(s.dir / "a.conf");
        f << "# comment\nd = 4\n\nu=2.5\n";
    }
    auto const v = readConfigFile((s.dir / "a.conf").string());
    EXPECT_EQ(v.at("d"), "4");
    EXPECT_EQ(v.at("u"), "2.5");
    {
        std::ofstream f(s.dir / "b.conf");
        f << "d 4\n";
    }
    EXPECT_THROW(readConfigFile((s.dir / "b.conf").string()), ConfigError);
    EXPECT_THROW(readConfigFile((s.dir / "missing.conf").string()), ConfigError);
}

TEST(Cli, ExitCodes)
{
    Scratch s("cli");
    std::string const out = " --out " + (s.dir / "o").string();
    EXPECT_EQ(runCli("bogus" + out), 2);
    EXPECT_EQ(runCli("green d=2" + out), 2);
    EXPECT_EQ(runCli("green" + out + " --seed"), 2);
    EXPECT_EQ(runCli("green radius=2" + out), 0);
    EXPECT_TRUE(fs::exists(s.dir / "o" / "report.json"));
    EXPECT_EQ(runCli("sample-soup baseRadius=2 maxTrajectories=5 u=5" + out), 3);
    auto const rep = Json::parse(slurp(s.dir / "o" / "report.json"));
    EXPECT_FALSE(rep["complete"].get<bool>());
    // Sparse ladder at low level: pairs exist but rarely connect.
    EXPECT_EQ(runCli("connectivity baseRadius=8 windowRadius=2 escapeRadius=16 ladder=2,4,8 u=0.3" + out), 4);
}

TEST(Run, ByteIdenticalReports)
{
    Scratch s("repro");
    auto const c = config("sample-soup", {{"replicas", "25"}, {"baseRadius", "2"}, {"persist", "true"}});
    RunOptions a{s.dir / "a", true};
    RunOptions b{s.dir / "b", true};
    run(c, a);
    run(c, b);
    EXPECT_EQ(slurp(s.dir / "a" / "report.json"), slurp(s.dir / "b" / "report.json"));
    EXPECT_EQ(slurp(s.dir / "a" / "soups.csv"), slurp(s.dir / "b" / "soups.csv"));
    EXPECT_EQ(slurp(s.dir / "a" / "soup-3.jsonl"), slurp(s.dir / "b" / "soup-3.jsonl"));
    // Wall-clock time lives outside the report.
    EXPECT_TRUE(fs::exists(s.dir / "a" / "timing.json"));
    EXPECT_EQ(slurp(s.dir / "a" / "report.json").find("Seconds"), std::string::npos);
}

TEST(Run, ThreadCountDoesNotChangeResults)
{
    auto const c1 = config("generations", {{"replicas", "30"}, {"threads", "1"}, {"plots", "false"}});
    auto const c2 = config("generations", {{"replicas", "30"}, {"threads", "2"}, {"plots", "false"}});
    auto j1 = run(c1, {"", false}).toJson();
    auto j2 = run(c2, {"", false}).toJson();
    j1.erase("config");
    j2.erase("config");
    EXPECT_EQ(j1.dump(), j2.dump());
}

TEST(Run, ProbabilityTablesCarryIntervalColumns)
{
    auto const rep = run(config("capacity", {{"walks", "2000"}, {"baseRadius", "1"}, {"escapeRadius", "16"}}),
                         {"", false});
    ASSERT_FALSE(rep.tables.empty());
    auto const& t = rep.tables.front();
    for (auto const& col : probabilityColumns())
        EXPECT_NE(std::find(t.columns.begin(), t.columns.end(), col), t.columns.end()) << col;
    auto const csv = renderCsv(t);
    EXPECT_NE(csv.find("wilson-95"), std::string::npos);
}

TEST(Run, DegenerateConnectivity)
{
    auto const rep = run(config("connectivity", {{"baseRadius", "8"}, {"windowRadius", "0"},
                                                 {"escapeRadius", "16"}, {"ladder", "2,4,8"},
                                                 {"u", "0.01"}}),
                         {"", false});
    ASSERT_EQ(rep.verdicts.size(), 1u);
    EXPECT_EQ(rep.verdicts[0].status, "insufficient occupied pairs");
    EXPECT_EQ(rep.exitCode(), ExitCode::ok);
}

TEST(Run, ReingestMatchesStreamed)
{
    Scratch s("reingest");
    std::map<std::string, std::string> const common{{"baseRadius", "8"}, {"windowRadius", "2"},
                                                    {"escapeRadius", "16"}, {"seed", "17"}};
    auto soupCfg = common;
    soupCfg["mode"] = "thinning";
    soupCfg["persist"] = "true";
    run(config("sample-soup", soupCfg), {s.dir, true});
    auto streamedCfg = common;
    streamedCfg["ladder"] = "2,4,8";
    auto ingestCfg = streamedCfg;
    ingestCfg["input"] = (s.dir / "soup-0.jsonl").string();
    auto const a = run(config("connectivity", streamedCfg), {"", false});
    auto const b = run(config("connectivity", ingestCfg), {"", false});
    EXPECT_EQ(a.summary["source"], "streamed");
    EXPECT_EQ(b.summary["source"], "persisted soups");
    for (char const* key : {"occupied", "pairs", "within1", "within2"})
        EXPECT_EQ(a.summary[key], b.summary[key]) << key;
    EXPECT_EQ(a.tables.front().rows, b.tables.front().rows);
}

TEST(Persist, RoundTripAndMalformedInput)
{
    GreenOracle const g(4);
    auto const s = sampleSoup(g, SoupBase::makeBall(Point::origin(4), 2), 0.25, 1.5, 12, 9);
    std::stringstream ss;
    writeSoup(ss, s);
    writeSoup(ss, s, 2);
    auto const back = readSoups(ss);
    ASSERT_EQ(back.size(), 2u);
    ASSERT_EQ(back[0].size(), s.size());
    EXPECT_EQ(back[0].uLow, s.uLow);
    EXPECT_EQ(back[0].uHigh, s.uHigh);
    EXPECT_EQ(back[0].seed, s.seed);
    EXPECT_TRUE(back[0].base == s.base);
    for (std::size_t i = 0; i < s.size(); ++i)
    {
        EXPECT_EQ(back[0].trajectories[i]->label, s.trajectories[i]->label);
        EXPECT_EQ(back[0].trajectories[i]->forward.points, s.trajectories[i]->forward.points);
        EXPECT_EQ(back[0].trajectories[i]->backward.points, s.trajectories[i]->backward.points);
    }
    EXPECT_EQ(back[1].size(), s.size());
    EXPECT_EQ(back[1].trajectories[0]->generation, s.trajectories[0]->generation);

    for (std::string bad : {"not json\n", "{\"kind\":\"trajectory\"}\n", "[1,2]\n"})
    {
        std::stringstream in(bad);
        EXPECT_THROW(readSoups(in), PersistError) << bad;
    }
    std::stringstream whole;
    writeSoup(whole, s);
    std::string text = whole.str();
    text.resize(text.size() / 2);
    std::stringstream cut(text);
    EXPECT_THROW(readSoups(cut), PersistError);
}

TEST(Threads, EnvironmentCap)
{
    ::setenv("RI_THREADS", "1", 1);
    EXPECT_EQ(defaultThreads(), 1u);
    ::setenv("RI_THREADS", "junk", 1);
    EXPECT_GE(defaultThreads(), 1u);
    ::unsetenv("RI_THREADS");
    auto const c = config("green", {{"threads", "64"}});
    EXPECT_LE(harness::detail::workers(c), defaultThreads());
}
