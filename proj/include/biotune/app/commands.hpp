#ifndef BIOTUNE_APP_COMMANDS_HPP
#define BIOTUNE_APP_COMMANDS_HPP

#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <biotune/app/config.hpp>

namespace biotune::app {

    /// The backend a config describes, built once per command.
    struct Problem {
        RunConfig config;
        Eigen::Index num_blocks = 0;
        std::shared_ptr<const toy::ToyProblem> toy;
        std::optional<Landscape> landscape;

        static Problem build(const RunConfig& config);

        /// External backends get a fresh session per evaluator.
        Evaluator evaluator(const FitnessSpec& fitness, WeightFunction weights, std::uint64_t data_seed) const;
        /// Trainable-parameter count per block (block counts of 1 when unknown).
        std::vector<std::size_t> block_params() const;
        /// True when a test split exists for retraining.
        bool can_retrain() const { return toy != nullptr; }
        /// Fine-tunes the decoded genome on the full training set.
        toy::TrainResult retrain(const Genome& g, WeightFunction weights, std::uint64_t seed) const;
    };

    /// Fraction of parameters in blocks the genome leaves trainable.
    double trainable_fraction(const Genome& g, const std::vector<std::size_t>& block_params);

    struct RetrainedGenome {
        EvaluatedGenome genome;
        std::optional<double> test_accuracy;
        std::optional<double> val_accuracy;
    };

    struct SearchOutcome {
        SearchResult result;
        std::vector<RetrainedGenome> top;
        /// Highest test accuracy among the retrained top genomes.
        std::optional<double> best_test_accuracy;
        double trainable_fraction = 0.0;
        double wall_clock_s = 0.0;
    };

    /// One BioTune search plus retraining of the top-k genomes.
    SearchOutcome search(const Problem& problem, const RunConfig& config, std::size_t workers, const std::function<void(const GenerationStats&)>& on_generation = {});

    struct BaselineRow {
        std::string method;
        std::vector<double> test_accuracy;
        double mean = 0.0;
        /// Sample standard deviation over runs divided by sqrt(runs).
        double std_error = 0.0;
        /// (mean - mean_FT) / mean_FT.
        double relative_to_ft = 0.0;
    };

    struct BaselinesOutcome {
        std::vector<BaselineRow> rows; // FT, LP, L1SP, L2SP, G-LF, G-FL, AutoRGN, BioTune
        /// One independent search per run; the BioTune row holds each run's best top-k test accuracy.
        std::vector<SearchOutcome> searches;
    };

    /// Run r of every method uses seed derive_seed(config.seed, 0xBA5E, r).
    BaselinesOutcome baselines(const Problem& problem, const RunConfig& config, std::size_t workers);

    struct ConvergenceRun {
        std::string optimizer;
        SearchResult result;
    };

    /// Every optimizer starts from the same population (same seed).
    std::vector<ConvergenceRun> compare(const Problem& problem, const RunConfig& config, std::size_t workers);

    enum class SweepAxis {
        Population,
        Elites,
        DataFraction,
        WeightFunction,
        FitnessVariant
    };

    std::string_view to_string(SweepAxis a);
    SweepAxis sweep_axis_from_string(std::string_view name);

    struct SweepPoint {
        std::size_t pop_size = 0;
        std::size_t elites = 0;
        double data_fraction = 1.0;
        WeightFunction weight_function = WeightFunction::Exponential;
        FitnessVariant fitness_variant = FitnessVariant::Acc;
        SearchOutcome outcome;
    };

    /// population and elites both sweep the population x elites grid.
    std::vector<SweepPoint> sweep(const Problem& problem, const RunConfig& config, SweepAxis axis, std::size_t workers);

    // Commands: run, then write their files into out_dir. Wall-clock data in
    // report.json sits under "wall_clock"; everything else is a function of
    // config and seed.
    void cmd_search(const RunConfig& config, const std::filesystem::path& out_dir, std::size_t workers);
    void cmd_baselines(const RunConfig& config, const std::filesystem::path& out_dir, std::size_t workers);
    void cmd_compare(const RunConfig& config, const std::filesystem::path& out_dir, std::size_t workers);
    void cmd_sweep(const RunConfig& config, SweepAxis axis, const std::filesystem::path& out_dir, std::size_t workers);

} // namespace biotune::app

#endif
