#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikecal/pipeline.hpp"

int main(int argc, char** argv)
{
    CLI::App app{"Convert small ANNs to spiking networks and tune their firing, compression and exit policies"};
    app.set_version_flag("--version", SPIKECAL_VERSION);
    std::string task, config_path;
    std::vector<std::string> overrides;
    app.add_option("task", task, "train | convert | search-phi | search-rho | fit-exit | eval | simulate")
        ->required()
        ->check(CLI::IsMember(spikecal::kTasks));
    app.add_option("--config", config_path, "key = value config file")->required();
    app.add_option("--set", overrides, "override a config key (key=value), repeatable");
    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : spikecal::kExitConfig;
    }

    spikecal::RunConfig config;
    try {
        config = spikecal::load_config(config_path, overrides, task);
    } catch (const spikecal::Error& e) {
        std::cerr << "spikecal: " << e.what() << "\n";
        return spikecal::exit_code(e.kind());
    }

    const spikecal::RunOutcome outcome = spikecal::run(config);
    const auto& r = outcome.report;
    if (r.at("status") == "ok") {
        std::cout << task << ": ok, report in " << (config.out_dir / (task + "_report.json")).string() << "\n";
    } else {
        std::cerr << "spikecal " << task << " failed: " << r.at("error").at("message").get<std::string>() << "\n";
    }
    return outcome.exit_code;
}
