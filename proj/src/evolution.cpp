#include <biotune/evolution.hpp>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <string>

#include <spdlog/spdlog.h>

#include <biotune/parallel.hpp>

namespace biotune {

    namespace {
        // Stream ids passed as the slot argument of derive_seed; slots
        // 0..pop_size-1 are per-individual streams.
        constexpr std::uint64_t kInitStream = 0xFFFF0001;
        constexpr std::uint64_t kSelectionStream = 0xFFFF0002;

        struct Outcome {
            std::optional<double> fitness;
            std::string error;
        };

        std::vector<Outcome> evaluate_all(const std::vector<const Genome*>& genomes, const Evaluator& evaluator, const EvalContext& ctx, std::size_t workers)
        {
            std::vector<Outcome> out(genomes.size());
            parallel_for(genomes.size(), workers, [&](std::size_t i) {
                try {
                    const double f = evaluator(*genomes[i], ctx);
                    if (!std::isfinite(f))
                        out[i].error = "non-finite fitness";
                    else
                        out[i].fitness = std::clamp(f, 0.0, 1.0);
                }
                catch (const std::exception& e) {
                    out[i].error = e.what();
                }
            });
            return out;
        }
    } // namespace

    void Population::sort()
    {
        std::stable_sort(members.begin(), members.end(), [](const Individual& a, const Individual& b) {
            if (a.evaluated() != b.evaluated())
                return a.evaluated();
            return a.fitness_or_worst() < b.fitness_or_worst();
        });
    }

    double Population::mean_fitness() const
    {
        if (members.empty())
            return 1.0;
        double sum = 0.0;
        for (const auto& m : members)
            sum += m.fitness_or_worst();
        return sum / static_cast<double>(members.size());
    }

    void EvolutionParams::validate() const
    {
        if (pop_size < 1)
            throw ConfigError("pop_size must be positive");
        if (elites >= pop_size)
            throw ConfigError("elites must be smaller than pop_size");
        if (max_generations < 1)
            throw ConfigError("max_generations must be positive");
        if (seeds_per_eval < 1)
            throw ConfigError("seeds_per_eval must be positive");
        if (!(perturbation > 0.0))
            throw ConfigError("perturbation must be positive");
        if (stall_generations < 1)
            throw ConfigError("stall_generations must be positive");
        if (!(convergence_eps > 0.0))
            throw ConfigError("convergence_eps must be positive");
    }

    Population initialize_population(const EvolutionParams& params, Eigen::Index num_blocks, Rng& rng)
    {
        Population pop;
        pop.members.reserve(params.pop_size);
        for (std::size_t s = 0; s < params.pop_size; ++s)
            pop.members.push_back(Individual::from_genome(random_genome(num_blocks, rng)));
        return pop;
    }

    std::vector<double> extinction_factors(Population& pop)
    {
        const std::size_t n = pop.size();
        std::vector<double> zeta(n, 0.0);
        if (n == 0)
            return zeta;
        if (n > 1) {
            const double phi_min = pop.members.front().fitness_or_worst();
            const double phi_max = pop.members.back().fitness_or_worst();
            for (std::size_t s = 0; s < n; ++s) {
                const double rank = static_cast<double>(s) / static_cast<double>(n - 1);
                if (phi_max > 0.0)
                    zeta[s] = (pop.members[s].fitness_or_worst() + phi_min * (rank - 1.0)) / phi_max;
                else
                    zeta[s] = rank; // all members perfect
            }
        }
        for (std::size_t s = 0; s < n; ++s)
            pop.members[s].extinction = zeta[s];
        return zeta;
    }

    double mutation_rate(double extinction_a, double extinction_b, std::size_t num_genes)
    {
        const double mean = 0.5 * (extinction_a + extinction_b);
        const double genes = static_cast<double>(num_genes);
        return (mean * (genes - 1.0) + 1.0) / genes;
    }

    MatingPool::MatingPool(const Population& pop) : _pop_size(pop.size())
    {
        _entries.reserve(pop.size());
        for (std::size_t r = 0; r < pop.size(); ++r)
            _entries.push_back({pop.members[r], r});
    }

    void evaluate_population(Population& pop, const Evaluator& evaluator, const SearchSchedule& schedule, std::size_t workers,
        std::vector<EvaluatedGenome>* audit, const char* origin)
    {
        std::vector<std::size_t> todo;
        std::vector<const Genome*> genomes;
        for (std::size_t s = 0; s < pop.size(); ++s)
            if (!pop.members[s].evaluated()) {
                todo.push_back(s);
                genomes.push_back(&pop.members[s].genome);
            }

        const auto ctx = schedule.context(pop.generation);
        const auto results = evaluate_all(genomes, evaluator, ctx, workers);
        std::size_t failures = 0;
        for (std::size_t i = 0; i < todo.size(); ++i) {
            auto& m = pop.members[todo[i]];
            const bool failed = !results[i].fitness;
            if (failed) {
                ++failures;
                spdlog::warn("generation {}: evaluation failed ({}); assigning fitness 1.0", pop.generation, results[i].error);
            }
            m.fitness = results[i].fitness.value_or(1.0);
            if (audit)
                audit->push_back({pop.generation, m.genome, *m.fitness, origin, failed});
        }
        if (!todo.empty() && failures == todo.size())
            throw AbortedRunError("every evaluation of generation " + std::to_string(pop.generation) + " failed");

        pop.sort();
        extinction_factors(pop);
    }

    Population step_generation(const Population& pop, const EvolutionParams& params, const Evaluator& evaluator, const SearchSchedule& schedule,
        const StepOptions& options, std::vector<EvaluatedGenome>* audit)
    {
        const std::size_t n = pop.size();
        const std::size_t n_elite = std::min(params.elites, n);
        const std::size_t gen = pop.generation + 1;
        const Eigen::Index num_blocks = n > 0 ? genome_blocks(pop.members.front().genome) : 0;

        // Prototypes come from the elites; without elitism the incumbent best stands in.
        const std::span<const Individual> elite_set(pop.members.data(), std::max<std::size_t>(n_elite, std::min<std::size_t>(1, n)));

        MatingPool pool(pop);
        Rng selection_rng(derive_seed(options.seed, gen, kSelectionStream));

        std::vector<Individual> candidates(n);
        std::vector<const char*> origins(n, "offspring");
        for (std::size_t s = 0; s < n_elite; ++s) {
            Rng rng(derive_seed(options.seed, gen, s));
            candidates[s] = exploit_candidate(pop.members[s], params.perturbation, rng);
            origins[s] = "exploit";
        }
        for (std::size_t s = n_elite; s < n; ++s) {
            auto parents = select_parents(pool, elite_set, selection_rng);
            Rng rng(derive_seed(options.seed, gen, s));
            if (parents) {
                const auto& [pa, pb, proto] = *parents;
                Individual child = crossover(pa, pb, rng);
                const double magnitude = 0.5 * (pa.extinction + pb.extinction);
                const double rate = mutation_rate(pa.extinction, pb.extinction, static_cast<std::size_t>(child.genome.size()));
                child = mutate(child, magnitude, rate, rng);
                child = adopt(child, pa, pb, proto, rng);
                clip_genes(child.genome);
                candidates[s] = std::move(child);
            }
            else {
                candidates[s] = Individual::from_genome(random_genome(num_blocks, rng));
                origins[s] = "random";
            }
        }

        std::vector<const Genome*> genomes;
        for (const auto& c : candidates)
            genomes.push_back(&c.genome);
        const auto results = evaluate_all(genomes, evaluator, schedule.context(gen), options.workers);

        Population next;
        next.generation = gen;
        next.members.reserve(n);
        std::size_t offspring_failures = 0;
        for (std::size_t s = 0; s < n; ++s) {
            const bool failed = !results[s].fitness;
            if (failed)
                spdlog::warn("generation {} slot {}: evaluation failed ({})", gen, s, results[s].error);
            if (audit)
                audit->push_back({gen, candidates[s].genome, results[s].fitness.value_or(1.0), origins[s], failed});
            if (s < n_elite) {
                if (!failed && *results[s].fitness < pop.members[s].fitness_or_worst()) {
                    candidates[s].fitness = results[s].fitness;
                    next.members.push_back(std::move(candidates[s]));
                }
                else {
                    next.members.push_back(pop.members[s]);
                }
            }
            else {
                if (failed)
                    ++offspring_failures;
                candidates[s].fitness = results[s].fitness.value_or(1.0);
                next.members.push_back(std::move(candidates[s]));
            }
        }
        if (n > n_elite && offspring_failures == n - n_elite)
            throw AbortedRunError("every offspring evaluation of generation " + std::to_string(gen) + " failed");

        next.sort();
        extinction_factors(next);
        return next;
    }

    SearchResult run(const EvolutionParams& params, Eigen::Index num_blocks, const Evaluator& evaluator, const SearchSchedule& schedule,
        std::uint64_t seed, const RunOptions& options)
    {
        params.validate();
        using clock = std::chrono::steady_clock;

        SearchResult result;
        auto t0 = clock::now();

        Population pop;
        if (options.initial) {
            pop = *options.initial;
            pop.generation = 0;
        }
        else {
            pop = seeded_population(params.pop_size, num_blocks, seed);
        }
        evaluate_population(pop, evaluator, schedule, options.workers, &result.evaluated, "init");

        std::size_t seen = 0;
        auto absorb = [&](std::size_t generation) {
            for (; seen < result.evaluated.size(); ++seen) {
                const auto& e = result.evaluated[seen];
                if (result.best_genome.size() == 0 || e.fitness < result.best_fitness) {
                    result.best_fitness = e.fitness;
                    result.best_genome = e.genome;
                }
            }
            GenerationStats st{generation, result.evaluated.size(), result.best_fitness, pop.mean_fitness()};
            result.history.push_back(st);
            result.wall_clock_s.push_back(std::chrono::duration<double>(clock::now() - t0).count());
            t0 = clock::now();
            spdlog::info("generation {}: best {:.6f} mean {:.6f} evaluations {}", st.generation, st.best, st.mean, st.evaluations);
            if (options.on_generation)
                options.on_generation(st);
        };
        absorb(0);

        for (std::size_t g = 1; g <= params.max_generations; ++g) {
            pop = step_generation(pop, params, evaluator, schedule, {options.workers, seed}, &result.evaluated);
            absorb(g);
            if (g >= params.stall_generations) {
                const double drift = std::abs(result.history[g].best - result.history[g - params.stall_generations].best);
                if (drift < params.convergence_eps) {
                    spdlog::info("stalled for {} generations; stopping", params.stall_generations);
                    break;
                }
            }
        }
        result.evaluations = result.evaluated.size();
        return result;
    }

    std::vector<std::optional<double>> evaluate_genomes(std::span<const Genome> genomes, const Evaluator& evaluator, const EvalContext& ctx, std::size_t workers)
    {
        std::vector<const Genome*> ptrs;
        for (const auto& g : genomes)
            ptrs.push_back(&g);
        std::vector<std::optional<double>> out;
        for (auto& r : evaluate_all(ptrs, evaluator, ctx, workers)) {
            if (!r.fitness)
                spdlog::warn("generation {}: evaluation failed ({}); assigning fitness 1.0", ctx.generation, r.error);
            out.push_back(r.fitness);
        }
        return out;
    }

    Population seeded_population(std::size_t pop_size, Eigen::Index num_blocks, std::uint64_t seed)
    {
        EvolutionParams params;
        params.pop_size = pop_size;
        Rng rng(derive_seed(seed, 0, kInitStream));
        return initialize_population(params, num_blocks, rng);
    }

    std::vector<EvaluatedGenome> top_k(const SearchResult& r, std::size_t k)
    {
        std::vector<std::size_t> order(r.evaluated.size());
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return r.evaluated[a].fitness < r.evaluated[b].fitness; });
        std::vector<EvaluatedGenome> out;
        for (std::size_t i : order) {
            if (out.size() == k)
                break;
            const auto& e = r.evaluated[i];
            if (e.failed)
                continue;
            const bool dup = std::any_of(out.begin(), out.end(), [&](const EvaluatedGenome& o) { return o.genome == e.genome; });
            if (!dup)
                out.push_back(e);
        }
        return out;
    }

} // namespace biotune
