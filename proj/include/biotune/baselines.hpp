#ifndef BIOTUNE_BASELINES_HPP
#define BIOTUNE_BASELINES_HPP

#include <cstdint>
#include <functional>
#include <optional>
#include <string_view>
#include <vector>

#include <biotune/evolution.hpp>
#include <biotune/fitness.hpp>
#include <biotune/search_result.hpp>

namespace biotune {

    enum class OptimizerKind {
        GA,
        DERand1,
        DEBest1,
        DERand2,
        DEBest2,
        PSO
    };

    std::string_view to_string(OptimizerKind k);
    OptimizerKind optimizer_kind_from_string(std::string_view name);
    inline constexpr OptimizerKind all_optimizers[] = {OptimizerKind::GA, OptimizerKind::DERand1, OptimizerKind::DEBest1, OptimizerKind::DERand2, OptimizerKind::DEBest2, OptimizerKind::PSO};

    /// Textbook optimizers over the genome box.
    ///   GA: size-2 tournaments, blend (BLX-0.5) crossover, per-gene Gaussian
    ///     mutation, the best `ga_elites` carried over unchanged.
    ///   DE: mutant from a random or the best base plus one or two scaled
    ///     differences, binomial crossover, greedy replacement (trial <= target).
    ///   PSO: global best, per-dimension random coefficients, velocity clamped
    ///     to +-velocity_clamp, zero initial velocity.
    struct OptimizerSpec {
        OptimizerKind kind = OptimizerKind::GA;
        std::size_t pop_size = 10;
        std::size_t max_generations = 10;
        /// Stop once this many evaluations were spent (the last generation is
        /// truncated); 0 means no limit besides max_generations.
        std::size_t max_evaluations = 0;

        double crossover_prob = 0.9;
        double mutation_prob = 0.2;
        double mutation_sigma = 0.1;
        double blend_alpha = 0.5;
        std::size_t ga_elites = 1;

        double differential_weight = 0.5;
        double crossover_rate = 0.9;

        double inertia = 0.7;
        double cognitive = 1.5;
        double social = 1.5;
        double velocity_clamp = 0.5;

        void validate() const;
    };

    struct OptimizerOptions {
        std::size_t workers = 1;
        /// Generation-0 genomes; by default seeded_population(pop_size, num_blocks, seed).
        std::optional<std::vector<Genome>> initial;
        std::function<void(const GenerationStats&)> on_generation;
    };

    SearchResult run_optimizer(const OptimizerSpec& spec, Eigen::Index num_blocks, const Evaluator& evaluator, const SearchSchedule& schedule,
        std::uint64_t seed, const OptimizerOptions& options = {});

} // namespace biotune

#endif
