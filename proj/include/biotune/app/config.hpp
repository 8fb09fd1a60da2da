#ifndef BIOTUNE_APP_CONFIG_HPP
#define BIOTUNE_APP_CONFIG_HPP

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include <biotune/baselines.hpp>
#include <biotune/evolution.hpp>
#include <biotune/extproto.hpp>
#include <biotune/fitness.hpp>
#include <biotune/landscape.hpp>
#include <biotune/toy/trainer.hpp>

namespace biotune::app {

    enum class BackendKind {
        Toy,
        Landscape,
        External
    };

    std::string_view to_string(BackendKind k);

    struct SweepAxes {
        std::vector<std::size_t> population;
        std::vector<std::size_t> elites;
        std::vector<double> data_fraction;
        std::vector<WeightFunction> weight_function;
        std::vector<FitnessVariant> fitness_variant;
    };

    /// Everything a command needs. Every field has a default; an empty JSON
    /// object gives the reference setup on the toy backend.
    struct RunConfig {
        std::uint64_t seed = 0;
        std::size_t workers = 1;

        BackendKind backend = BackendKind::Toy;
        LandscapeKind landscape = LandscapeKind::BlockImportance;
        Eigen::Index landscape_blocks = 6;
        ext::SessionOptions external;
        /// Parameter count per block for the external backend; empty counts blocks.
        std::vector<std::size_t> external_block_params;

        toy::ToyConfig toy;
        /// Seeds source pretraining; fixed so every search shares one pretrained model.
        std::uint64_t pretrain_seed = 1;
        /// Load the task from this directory instead of generating it.
        std::optional<std::filesystem::path> task_path;

        EvolutionParams evolution;
        FitnessSpec fitness;
        WeightFunction weight_function = WeightFunction::Exponential;
        std::size_t top_k = 5;

        OptimizerSpec optimizer;
        std::vector<std::string> optimizers{"BioTune", "GA", "DE-rand-1", "DE-best-1", "DE-rand-2", "DE-best-2", "PSO"};
        bool match_budget = false;

        std::size_t baseline_runs = 3;

        SweepAxes sweep;
    };

    /// Reads and validates a config file. Parse errors carry line and column,
    /// field errors the dotted field path. Throws ConfigError.
    RunConfig load_config(const std::filesystem::path& path);
    RunConfig parse_config(const nlohmann::json& j, const std::string& source = "config");
    nlohmann::ordered_json to_json(const RunConfig& c);

    /// Checks cross-field constraints and that referenced files exist.
    void validate(const RunConfig& c);

} // namespace biotune::app

#endif
