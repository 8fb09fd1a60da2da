#ifndef BIOTUNE_FITNESS_HPP
#define BIOTUNE_FITNESS_HPP

#include <cstdint>
#include <functional>
#include <span>
#include <string_view>
#include <vector>

#include <biotune/genome.hpp>

namespace biotune {

    enum class FitnessVariant {
        Acc,
        AccStd,
        Loss
    };

    std::string_view to_string(FitnessVariant v);
    FitnessVariant fitness_variant_from_string(std::string_view name);

    struct FitnessSpec {
        FitnessVariant variant = FitnessVariant::Acc;
        std::size_t seeds_per_eval = 3;
        double data_fraction = 1.0;
        std::size_t num_folds = 3;
    };

    /// What an evaluator needs to know besides the genome.
    struct EvalContext {
        std::size_t generation = 0;
        std::size_t fold_index = 0;
        std::vector<std::uint64_t> seeds{0};
    };

    /// Validation metrics of one training run.
    struct SeedOutcome {
        double accuracy = 0.0;
        double loss = 0.0;
    };

    /// Trains one configuration once per seed in the context. Must be safe to
    /// call concurrently. Throws EvaluationError on failure.
    using Backend = std::function<std::vector<SeedOutcome>(const Genome&, const EvalContext&)>;

    /// Scalar fitness (lower is better). Must be safe to call concurrently.
    using Evaluator = std::function<double(const Genome&, const EvalContext&)>;

    /// Fold rotation: generation g evaluates on fold g mod F.
    constexpr std::size_t fold_schedule(std::size_t generation, std::size_t num_folds)
    {
        return num_folds == 0 ? 0 : generation % num_folds;
    }

    /// Per-run evaluation schedule: fixed seed list, rotating fold.
    struct SearchSchedule {
        std::size_t num_folds = 1;
        std::vector<std::uint64_t> seeds{0};

        static SearchSchedule make(const FitnessSpec& spec, std::uint64_t master_seed);

        EvalContext context(std::size_t generation) const
        {
            return {generation, fold_schedule(generation, num_folds), seeds};
        }
    };

    /// Collapse per-seed outcomes into a fitness value.
    /// Acc: 1 - mean(acc). AccStd: Acc + population std of acc. Loss: min(mean(loss), 1).
    double aggregate_fitness(FitnessVariant variant, std::span<const SeedOutcome> outcomes);

    double evaluate(const Genome& genome, const EvalContext& ctx, const Backend& backend, FitnessVariant variant);

    Evaluator make_evaluator(Backend backend, FitnessVariant variant);

    struct FoldPlan {
        std::vector<std::vector<std::size_t>> folds;
        /// class_counts[f][c]: samples of class c in fold f.
        std::vector<std::vector<std::size_t>> class_counts;
        /// Some class had fewer samples than folds; its samples were still dealt round-robin.
        bool degraded = false;

        std::size_t num_folds() const { return folds.size(); }
    };

    /// Class-stratified partition of indices [0, labels.size()) into num_folds folds.
    FoldPlan stratified_folds(std::span<const int> labels, std::size_t num_folds, Rng& rng);

    /// Class-stratified subset holding round(fraction * n_c) samples (at least one) of each class c.
    std::vector<std::size_t> stratified_subset(std::span<const int> labels, double fraction, Rng& rng);

} // namespace biotune

#endif
