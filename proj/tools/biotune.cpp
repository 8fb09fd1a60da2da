#include <cstdlib>
#include <iostream>
#include <optional>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <biotune/app/commands.hpp>

namespace {
    enum ExitCode {
        kOk = 0,
        kInternal = 1,
        kConfig = 2,
        kBackend = 3,
    };

    void setup_logging()
    {
        auto logger = spdlog::stderr_color_mt("biotune");
        spdlog::set_default_logger(logger);
        spdlog::set_level(spdlog::level::info);
        if (const char* lvl = std::getenv("BIOTUNE_LOG")) {
            const auto level = spdlog::level::from_str(lvl);
            // from_str maps unknown names to off
            if (level == spdlog::level::off && std::string_view(lvl) != "off")
                spdlog::warn("BIOTUNE_LOG='{}' is not a level (trace, debug, info, warn, error, critical, off); using info", lvl);
            else
                spdlog::set_level(level);
        }
    }
} // namespace

int main(int argc, char** argv)
{
    setup_logging();

    CLI::App app{"Evolutionary search for selective fine-tuning configurations"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out_dir = "biotune-out";
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::string axis;

    const auto common = [&](CLI::App* sub) {
        sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out_dir, "output directory")->capture_default_str();
        sub->add_option("--seed", seed, "master seed (overrides the config)");
        sub->add_option("--workers", workers, "parallel evaluations (overrides the config)")->check(CLI::PositiveNumber);
    };
    auto* search = app.add_subcommand("search", "run one search and retrain the top genomes");
    auto* baselines = app.add_subcommand("baselines", "compare the fine-tuning baselines with the searched configuration");
    auto* compare = app.add_subcommand("compare", "convergence of BioTune against GA, DE and PSO");
    auto* sweep = app.add_subcommand("sweep", "one search per grid point along an axis");
    for (auto* sub : {search, baselines, compare, sweep})
        common(sub);
    sweep->add_option("--axis", axis, "population, elites, data_fraction, weight_function or fitness_variant")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        auto config = biotune::app::load_config(config_path);
        if (seed)
            config.seed = *seed;
        if (workers)
            config.workers = *workers;
        const std::size_t w = config.workers;

        if (*search)
            biotune::app::cmd_search(config, out_dir, w);
        else if (*baselines)
            biotune::app::cmd_baselines(config, out_dir, w);
        else if (*compare)
            biotune::app::cmd_compare(config, out_dir, w);
        else
            biotune::app::cmd_sweep(config, biotune::app::sweep_axis_from_string(axis), out_dir, w);
        spdlog::info("outputs written to {}", out_dir);
        return kOk;
    }
    catch (const biotune::ConfigError& e) {
        spdlog::error("configuration error: {}", e.what());
        return kConfig;
    }
    catch (const biotune::UsageError& e) {
        spdlog::error("usage error: {}", e.what());
        return kConfig;
    }
    catch (const biotune::Error& e) {
        spdlog::error("backend error: {}", e.what());
        return kBackend;
    }
    catch (const std::exception& e) {
        spdlog::error("internal error: {}", e.what());
        return kInternal;
    }
}
