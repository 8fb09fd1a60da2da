#ifndef BIOTUNE_EVOLUTION_HPP
#define BIOTUNE_EVOLUTION_HPP

#include <algorithm>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include <biotune/fitness.hpp>
#include <biotune/genome.hpp>
#include <biotune/random.hpp>
#include <biotune/search_result.hpp>

namespace biotune {

    struct Individual {
        Genome genome;
        Vector momentum;
        std::optional<double> fitness;
        double extinction = 0.0;

        static Individual from_genome(Genome g)
        {
            Individual ind;
            ind.momentum = Vector::Zero(g.size());
            ind.genome = std::move(g);
            return ind;
        }

        bool evaluated() const { return fitness.has_value(); }
        double fitness_or_worst() const { return fitness.value_or(1.0); }
    };

    struct Population {
        std::vector<Individual> members;
        std::size_t generation = 0;

        std::size_t size() const { return members.size(); }

        /// Stable ascending sort by fitness; unevaluated members go last.
        void sort();
        double mean_fitness() const;
    };

    struct EvolutionParams {
        std::size_t pop_size = 10;
        std::size_t elites = 3;
        std::size_t max_generations = 10;
        std::size_t seeds_per_eval = 3;
        double perturbation = 0.25;
        std::size_t stall_generations = 3;
        double convergence_eps = 1e-4;

        void validate() const;
    };

    Population initialize_population(const EvolutionParams& params, Eigen::Index num_blocks, Rng& rng);

    /// Extinction factor of each member of a sorted population; also stored on the members.
    std::vector<double> extinction_factors(Population& pop);

    /// Mutation rate from the two parents' extinction factors: ((mean * (B+1)) + 1) / (B+2).
    double mutation_rate(double extinction_a, double extinction_b, std::size_t num_genes);

    // Stochastic operators. `R` is any source with uniform() in [0,1),
    // symmetric() in [-1,1) and index(n) in [0,n); tests substitute scripted
    // sources. The draw order is part of each operator's contract.

    /// Perturbs one gene (draws: index, symmetric) by up to +-delta; the
    /// momentum at that gene moves by the same amount. Fitness is cleared.
    template <typename R>
    Individual exploit_candidate(const Individual& ind, double delta, R& rng)
    {
        Individual out = ind;
        const auto b = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(ind.genome.size())));
        const double before = out.genome(b);
        out.genome(b) = std::clamp(before + rng.symmetric() * delta, 0.0, 1.0);
        out.momentum(b) += out.genome(b) - before;
        out.fitness.reset();
        return out;
    }

    /// Perturb, evaluate, and keep the perturbed individual only if its fitness
    /// is strictly lower. An evaluation failure keeps the original.
    template <typename R>
    Individual exploit_elite(const Individual& ind, double delta, const Evaluator& evaluator, const EvalContext& ctx, R& rng)
    {
        Individual cand = exploit_candidate(ind, delta, rng);
        try {
            cand.fitness = evaluator(cand.genome, ctx);
        }
        catch (const EvaluationError&) {
            return ind;
        }
        if (*cand.fitness < ind.fitness_or_worst())
            return cand;
        return ind;
    }

    /// Interpolating crossover with inherited momentum. Per gene draws
    /// (u_a, u_b, alpha): g = u_a g_a + u_b g_b; nu = alpha nu_a + (1 - alpha) nu_b + g.
    template <typename R>
    Individual crossover(const Individual& pa, const Individual& pb, R& rng)
    {
        if (pa.genome.size() != pb.genome.size() || pa.momentum.size() != pa.genome.size() || pb.momentum.size() != pb.genome.size())
            throw InvalidPairingError("crossover: parents differ in genome length");
        const Eigen::Index n = pa.genome.size();
        Individual child;
        child.genome.resize(n);
        child.momentum.resize(n);
        for (Eigen::Index b = 0; b < n; ++b) {
            const double ua = rng.uniform();
            const double ub = rng.uniform();
            const double alpha = rng.uniform();
            child.momentum(b) = ua * pa.momentum(b) + ub * pb.momentum(b);
            child.genome(b) = std::clamp(alpha * pa.genome(b) + (1.0 - alpha) * pb.genome(b) + child.momentum(b), 0.0, 1.0);
        }
        return child;
    }

    /// Each gene mutates with probability `rate` (draw: uniform, then symmetric
    /// if mutating) by up to +-magnitude, where magnitude is the mean parental
    /// extinction factor.
    template <typename R>
    Individual mutate(const Individual& ind, double magnitude, double rate, R& rng)
    {
        Individual out = ind;
        for (Eigen::Index b = 0; b < out.genome.size(); ++b) {
            if (rng.uniform() >= rate)
                continue;
            const double before = out.genome(b);
            out.genome(b) = std::clamp(before + magnitude * rng.symmetric(), 0.0, 1.0);
            out.momentum(b) += out.genome(b) - before;
        }
        return out;
    }

    /// Pulls each gene toward the parents' midpoint and the prototype. Per gene
    /// draws (alpha, u1, u2): nu += alpha u1 (mid - nu) + (1 - alpha) u2 (proto - nu).
    template <typename R>
    Individual adopt(const Individual& ind, const Individual& pa, const Individual& pb, const Individual& proto, R& rng)
    {
        const Eigen::Index n = ind.genome.size();
        if (pa.genome.size() != n || pb.genome.size() != n || proto.genome.size() != n)
            throw InvalidPairingError("adopt: genome length mismatch");
        Individual out = ind;
        for (Eigen::Index b = 0; b < n; ++b) {
            const double alpha = rng.uniform();
            const double u1 = rng.uniform();
            const double u2 = rng.uniform();
            const double nu = out.genome(b);
            const double toward_parents = u1 * (0.5 * (pa.genome(b) + pb.genome(b)) - nu);
            const double toward_proto = u2 * (proto.genome(b) - nu);
            out.genome(b) = std::clamp(nu + alpha * toward_parents + (1.0 - alpha) * toward_proto, 0.0, 1.0);
            out.momentum(b) += out.genome(b) - nu;
        }
        return out;
    }

    /// Copy of the population available for reproduction. Entries keep the
    /// rank they had in the sorted population.
    class MatingPool {
    public:
        struct Entry {
            Individual individual;
            std::size_t rank;
        };

        explicit MatingPool(const Population& pop);

        std::size_t size() const { return _entries.size(); }
        bool empty() const { return _entries.empty(); }
        const std::vector<Entry>& entries() const { return _entries; }

        /// Removes and returns one entry, weighted by (population size - rank).
        template <typename R>
        Entry draw(R& rng)
        {
            double total = 0.0;
            for (const auto& e : _entries)
                total += _weight(e);
            double r = rng.uniform() * total;
            std::size_t pick = _entries.size() - 1;
            for (std::size_t i = 0; i < _entries.size(); ++i) {
                r -= _weight(_entries[i]);
                if (r < 0.0) {
                    pick = i;
                    break;
                }
            }
            Entry e = std::move(_entries[pick]);
            _entries.erase(_entries.begin() + static_cast<std::ptrdiff_t>(pick));
            return e;
        }

    private:
        double _weight(const Entry& e) const { return static_cast<double>(_pop_size - e.rank); }

        std::vector<Entry> _entries;
        std::size_t _pop_size;
    };

    struct ParentSelection {
        Individual pa;
        Individual pb;
        Individual prototype;
    };

    /// Two rank-weighted parents drawn without replacement, plus a prototype
    /// drawn uniformly (not removed) from `elites`. Empty when fewer than two
    /// pool entries remain.
    template <typename R>
    std::optional<ParentSelection> select_parents(MatingPool& pool, std::span<const Individual> elites, R& rng)
    {
        if (pool.size() < 2 || elites.empty())
            return std::nullopt;
        auto a = pool.draw(rng);
        auto b = pool.draw(rng);
        const auto& proto = elites[rng.index(elites.size())];
        return ParentSelection{std::move(a.individual), std::move(b.individual), proto};
    }

    struct StepOptions {
        std::size_t workers = 1;
        std::uint64_t seed = 0;
    };

    /// One generation: exploit the elites, breed the rest (random individuals
    /// once the pool is exhausted), merge, sort, recompute extinction factors.
    /// Every evaluation is appended to `audit`.
    Population step_generation(const Population& pop, const EvolutionParams& params, const Evaluator& evaluator, const SearchSchedule& schedule,
        const StepOptions& options, std::vector<EvaluatedGenome>* audit = nullptr);

    /// Evaluates every member that has no fitness yet (failures get 1.0), then
    /// sorts and computes extinction factors. Throws AbortedRunError if every
    /// evaluation failed.
    void evaluate_population(Population& pop, const Evaluator& evaluator, const SearchSchedule& schedule, std::size_t workers,
        std::vector<EvaluatedGenome>* audit = nullptr, const char* origin = "init");

    /// Evaluates genomes concurrently. A failed evaluation (exception or
    /// non-finite value) comes back empty and is logged; others are clamped to [0,1].
    std::vector<std::optional<double>> evaluate_genomes(std::span<const Genome> genomes, const Evaluator& evaluator, const EvalContext& ctx, std::size_t workers);

    /// The random initial population a run with this seed starts from.
    /// Baseline optimizers use it too, so equal seeds mean equal starts.
    Population seeded_population(std::size_t pop_size, Eigen::Index num_blocks, std::uint64_t seed);

    struct RunOptions {
        std::size_t workers = 1;
        /// Start from this population instead of a random one (evaluated if needed).
        std::optional<Population> initial;
        std::function<void(const GenerationStats&)> on_generation;
    };

    /// Full search until max_generations or stall.
    SearchResult run(const EvolutionParams& params, Eigen::Index num_blocks, const Evaluator& evaluator, const SearchSchedule& schedule,
        std::uint64_t seed, const RunOptions& options = {});

} // namespace biotune

#endif
