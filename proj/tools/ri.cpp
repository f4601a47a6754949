#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ri/harness/run.hpp"

namespace {

std::string subcommandList()
{
    std::string s;
    for (auto const& n : ri::harness::subcommands())
        s += (s.empty() ? "" : ", ") + n;
    return s;
}

}  // namespace

int main(int argc, char** argv)
{
    using namespace ri::harness;

    CLI::App app{"Random interlacement simulation lab"};
    app.usage("ri <subcommand> [--config FILE] [--seed N] [--out DIR] [key=value ...]");
    std::string sub;
    std::string configFile;
    std::optional<std::uint64_t> seed;
    std::string out = "ri-out";
    std::vector<std::string> overrides;
    app.add_option("subcommand", sub, "One of: " + subcommandList())->required();
    app.add_option("overrides", overrides, "key=value configuration overrides");
    app.add_option("--config", configFile, "Flat key=value configuration file");
    app.add_option("--seed", seed, "Master seed (overrides the seed key)");
    app.add_option("--out", out, "Output directory");

    try
    {
        app.parse(argc, argv);
    }
    catch (CLI::ParseError const& e)
    {
        int const code = app.exit(e);
        return code == 0 ? 0 : static_cast<int>(ExitCode::config);
    }

    try
    {
        std::map<std::string, std::string> values;
        if (!configFile.empty())
            values = readConfigFile(configFile);
        for (auto const& [k, v] : parseOverrides(overrides))
            values[k] = v;
        if (seed)
            values["seed"] = std::to_string(*seed);
        auto const config = ExperimentConfig::parse(sub, values);
        RunOptions ro;
        ro.out = out;
        auto const rep = run(config, ro);
        for (auto const& v : rep.verdicts)
            std::cout << v.status << ": " << v.check << " (" << v.detail << ")\n";
        if (rep.incomplete)
            std::cout << "incomplete: " << rep.incompleteReason << "\n";
        std::cout << "report: " << (ro.out / "report.json").string() << "\n";
        return static_cast<int>(rep.exitCode());
    }
    catch (ConfigError const& e)
    {
        std::cerr << "ri: " << e.what() << "\n" << app.get_usage() << "\n";
        return static_cast<int>(ExitCode::config);
    }
    catch (std::exception const& e)
    {
        std::cerr << "ri: error: " << e.what() << "\n";
        return 1;
    }
}
