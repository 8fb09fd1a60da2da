#include <biotune/baselines.hpp>

#include <algorithm>
#include <chrono>
#include <numeric>

#include <spdlog/spdlog.h>

namespace biotune {

    std::string_view to_string(OptimizerKind k)
    {
        switch (k) {
        case OptimizerKind::GA:
            return "GA";
        case OptimizerKind::DERand1:
            return "DE-rand-1";
        case OptimizerKind::DEBest1:
            return "DE-best-1";
        case OptimizerKind::DERand2:
            return "DE-rand-2";
        case OptimizerKind::DEBest2:
            return "DE-best-2";
        case OptimizerKind::PSO:
            return "PSO";
        }
        return "GA";
    }

    OptimizerKind optimizer_kind_from_string(std::string_view name)
    {
        for (auto k : all_optimizers)
            if (name == to_string(k))
                return k;
        throw UsageError("unknown optimizer '" + std::string(name) + "' (expected GA, DE-rand-1, DE-best-1, DE-rand-2, DE-best-2 or PSO)");
    }

    namespace {
        std::size_t de_partners(OptimizerKind k)
        {
            switch (k) {
            case OptimizerKind::DERand1:
                return 3;
            case OptimizerKind::DEBest1:
                return 2;
            case OptimizerKind::DERand2:
                return 5;
            case OptimizerKind::DEBest2:
                return 4;
            default:
                return 0;
            }
        }
    } // namespace

    void OptimizerSpec::validate() const
    {
        const auto prob = [](double p, const char* name) {
            if (!(p >= 0.0 && p <= 1.0))
                throw ConfigError(std::string("optimizer.") + name + " must lie in [0,1]");
        };
        if (pop_size < 2)
            throw ConfigError("optimizer.pop_size must be at least 2");
        if (max_generations < 1)
            throw ConfigError("optimizer.max_generations must be at least 1");
        if (max_evaluations != 0 && max_evaluations < pop_size)
            throw ConfigError("optimizer.max_evaluations must cover the initial population");
        prob(crossover_prob, "crossover_prob");
        prob(mutation_prob, "mutation_prob");
        prob(crossover_rate, "crossover_rate");
        if (mutation_sigma < 0.0 || blend_alpha < 0.0)
            throw ConfigError("optimizer.mutation_sigma and optimizer.blend_alpha must be non-negative");
        if (ga_elites >= pop_size)
            throw ConfigError("optimizer.ga_elites must be smaller than pop_size");
        if (!(differential_weight > 0.0 && differential_weight <= 2.0))
            throw ConfigError("optimizer.differential_weight must lie in (0,2]");
        if (inertia < 0.0 || cognitive < 0.0 || social < 0.0 || velocity_clamp < 0.0)
            throw ConfigError("optimizer PSO coefficients must be non-negative");
        if (pop_size < de_partners(kind) + 1)
            throw ConfigError(std::string("optimizer.pop_size too small for ") + std::string(to_string(kind)));
    }

    namespace {
        constexpr std::uint64_t kOptimizerStream = 0xFFFF0100;

        class Tracker {
        public:
            Tracker(SearchResult& r, const OptimizerSpec& spec, const Evaluator& evaluator, const SearchSchedule& schedule, const OptimizerOptions& options)
                : _r(r), _spec(spec), _evaluator(evaluator), _schedule(schedule), _options(options), _t0(std::chrono::steady_clock::now())
            {
            }

            bool exhausted() const { return _spec.max_evaluations != 0 && _r.evaluated.size() >= _spec.max_evaluations; }

            /// Fitness of the leading candidates that fit in the budget; failures are 1.0.
            std::vector<double> evaluate(const std::vector<Genome>& candidates, std::size_t generation, const char* origin)
            {
                std::size_t n = candidates.size();
                if (_spec.max_evaluations != 0)
                    n = std::min(n, _spec.max_evaluations - _r.evaluated.size());
                const std::span<const Genome> batch(candidates.data(), n);
                const auto out = evaluate_genomes(batch, _evaluator, _schedule.context(generation), _options.workers);
                std::vector<double> fit;
                std::size_t failures = 0;
                for (std::size_t i = 0; i < n; ++i) {
                    failures += !out[i];
                    fit.push_back(out[i].value_or(1.0));
                    _r.evaluated.push_back({generation, candidates[i], fit.back(), origin, !out[i]});
                    if (_r.best_genome.size() == 0 || fit.back() < _r.best_fitness) {
                        _r.best_fitness = fit.back();
                        _r.best_genome = candidates[i];
                    }
                }
                if (n > 0 && failures == n)
                    throw AbortedRunError("every evaluation of generation " + std::to_string(generation) + " failed");
                return fit;
            }

            void record(std::size_t generation, const std::vector<double>& population_fitness)
            {
                const double mean = std::accumulate(population_fitness.begin(), population_fitness.end(), 0.0) / static_cast<double>(population_fitness.size());
                GenerationStats st{generation, _r.evaluated.size(), _r.best_fitness, mean};
                _r.history.push_back(st);
                const auto now = std::chrono::steady_clock::now();
                _r.wall_clock_s.push_back(std::chrono::duration<double>(now - _t0).count());
                _t0 = now;
                spdlog::info("{} generation {}: best {:.6f} mean {:.6f} evaluations {}", to_string(_spec.kind), generation, st.best, st.mean, st.evaluations);
                if (_options.on_generation)
                    _options.on_generation(st);
            }

        private:
            SearchResult& _r;
            const OptimizerSpec& _spec;
            const Evaluator& _evaluator;
            const SearchSchedule& _schedule;
            const OptimizerOptions& _options;
            std::chrono::steady_clock::time_point _t0;
        };

        std::size_t argmin(const std::vector<double>& v)
        {
            return static_cast<std::size_t>(std::min_element(v.begin(), v.end()) - v.begin());
        }

        void run_ga(const OptimizerSpec& spec, std::vector<Genome> pop, std::vector<double> fit, Tracker& t, std::uint64_t seed)
        {
            const std::size_t n = pop.size();
            for (std::size_t gen = 1; gen <= spec.max_generations && !t.exhausted(); ++gen) {
                Rng rng(derive_seed(seed, gen, kOptimizerStream));
                std::vector<std::size_t> order(n);
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return fit[a] < fit[b]; });

                const auto tournament = [&] {
                    const std::size_t i = rng.index(n);
                    const std::size_t j = rng.index(n);
                    return fit[i] <= fit[j] ? i : j;
                };

                std::vector<Genome> children;
                for (std::size_t k = spec.ga_elites; k < n; ++k) {
                    const std::size_t a = tournament();
                    const std::size_t b = tournament();
                    Genome child = pop[a];
                    if (rng.uniform() < spec.crossover_prob) {
                        for (Eigen::Index d = 0; d < child.size(); ++d) {
                            const double lo = std::min(pop[a](d), pop[b](d));
                            const double hi = std::max(pop[a](d), pop[b](d));
                            const double ext = spec.blend_alpha * (hi - lo);
                            child(d) = rng.uniform(lo - ext, hi + ext);
                        }
                    }
                    for (Eigen::Index d = 0; d < child.size(); ++d)
                        if (rng.uniform() < spec.mutation_prob)
                            child(d) += spec.mutation_sigma * rng.normal();
                    clip_genes(child);
                    children.push_back(std::move(child));
                }

                const auto child_fit = t.evaluate(children, gen, "offspring");
                std::vector<Genome> next_pop;
                std::vector<double> next_fit;
                for (std::size_t e = 0; e < spec.ga_elites; ++e) {
                    next_pop.push_back(pop[order[e]]);
                    next_fit.push_back(fit[order[e]]);
                }
                for (std::size_t k = 0; k < children.size(); ++k) {
                    if (k < child_fit.size()) {
                        next_pop.push_back(std::move(children[k]));
                        next_fit.push_back(child_fit[k]);
                    }
                    else {
                        // budget ran out: keep the old member of that rank
                        next_pop.push_back(pop[order[spec.ga_elites + k]]);
                        next_fit.push_back(fit[order[spec.ga_elites + k]]);
                    }
                }
                pop = std::move(next_pop);
                fit = std::move(next_fit);
                t.record(gen, fit);
            }
        }

        void run_de(const OptimizerSpec& spec, std::vector<Genome> pop, std::vector<double> fit, Tracker& t, std::uint64_t seed)
        {
            const std::size_t n = pop.size();
            const bool from_best = spec.kind == OptimizerKind::DEBest1 || spec.kind == OptimizerKind::DEBest2;
            const bool two = spec.kind == OptimizerKind::DERand2 || spec.kind == OptimizerKind::DEBest2;
            const std::size_t partners = de_partners(spec.kind);
            const double f = spec.differential_weight;

            for (std::size_t gen = 1; gen <= spec.max_generations && !t.exhausted(); ++gen) {
                Rng rng(derive_seed(seed, gen, kOptimizerStream));
                const std::size_t best = argmin(fit);
                std::vector<Genome> trials;
                for (std::size_t i = 0; i < n; ++i) {
                    // distinct partners, none equal to the target
                    std::vector<std::size_t> others;
                    for (std::size_t j = 0; j < n; ++j)
                        if (j != i)
                            others.push_back(j);
                    std::vector<std::size_t> r;
                    for (std::size_t k = 0; k < partners; ++k) {
                        const std::size_t pick = rng.index(others.size());
                        r.push_back(others[pick]);
                        others.erase(others.begin() + static_cast<std::ptrdiff_t>(pick));
                    }
                    std::size_t next = 0;
                    const Genome& base = from_best ? pop[best] : pop[r[next++]];
                    Genome mutant = base + f * (pop[r[next]] - pop[r[next + 1]]);
                    next += 2;
                    if (two)
                        mutant += f * (pop[r[next]] - pop[r[next + 1]]);

                    Genome trial = pop[i];
                    const auto forced = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(trial.size())));
                    for (Eigen::Index d = 0; d < trial.size(); ++d)
                        if (rng.uniform() < spec.crossover_rate || d == forced)
                            trial(d) = mutant(d);
                    clip_genes(trial);
                    trials.push_back(std::move(trial));
                }

                const auto trial_fit = t.evaluate(trials, gen, "trial");
                for (std::size_t i = 0; i < trial_fit.size(); ++i)
                    if (trial_fit[i] <= fit[i]) {
                        pop[i] = std::move(trials[i]);
                        fit[i] = trial_fit[i];
                    }
                t.record(gen, fit);
            }
        }

        void run_pso(const OptimizerSpec& spec, std::vector<Genome> pos, std::vector<double> fit, Tracker& t, std::uint64_t seed)
        {
            const std::size_t n = pos.size();
            std::vector<Genome> vel(n, Genome::Zero(pos.front().size()));
            std::vector<Genome> pbest = pos;
            std::vector<double> pbest_fit = fit;
            std::size_t g = argmin(pbest_fit);

            for (std::size_t gen = 1; gen <= spec.max_generations && !t.exhausted(); ++gen) {
                Rng rng(derive_seed(seed, gen, kOptimizerStream));
                std::vector<Genome> moved;
                std::vector<Genome> moved_vel;
                for (std::size_t i = 0; i < n; ++i) {
                    Genome v = vel[i];
                    for (Eigen::Index d = 0; d < v.size(); ++d) {
                        const double r1 = rng.uniform();
                        const double r2 = rng.uniform();
                        v(d) = spec.inertia * v(d) + spec.cognitive * r1 * (pbest[i](d) - pos[i](d)) + spec.social * r2 * (pbest[g](d) - pos[i](d));
                        v(d) = std::clamp(v(d), -spec.velocity_clamp, spec.velocity_clamp);
                    }
                    moved.push_back(clipped(pos[i] + v));
                    moved_vel.push_back(std::move(v));
                }

                const auto moved_fit = t.evaluate(moved, gen, "particle");
                for (std::size_t i = 0; i < moved_fit.size(); ++i) {
                    pos[i] = std::move(moved[i]);
                    vel[i] = std::move(moved_vel[i]);
                    fit[i] = moved_fit[i];
                    if (fit[i] < pbest_fit[i]) {
                        pbest[i] = pos[i];
                        pbest_fit[i] = fit[i];
                    }
                }
                g = argmin(pbest_fit);
                t.record(gen, fit);
            }
        }
    } // namespace

    SearchResult run_optimizer(const OptimizerSpec& spec, Eigen::Index num_blocks, const Evaluator& evaluator, const SearchSchedule& schedule,
        std::uint64_t seed, const OptimizerOptions& options)
    {
        spec.validate();
        std::vector<Genome> pop;
        if (options.initial) {
            pop = *options.initial;
            if (pop.size() != spec.pop_size)
                throw ConfigError("initial population has " + std::to_string(pop.size()) + " genomes, optimizer.pop_size is " + std::to_string(spec.pop_size));
            for (const auto& g : pop)
                if (g.size() != num_blocks + 1)
                    throw InvalidModelError("initial genome length does not match the block count");
        }
        else {
            for (auto& ind : seeded_population(spec.pop_size, num_blocks, seed).members)
                pop.push_back(std::move(ind.genome));
        }

        SearchResult result;
        Tracker tracker(result, spec, evaluator, schedule, options);
        std::vector<double> fit = tracker.evaluate(pop, 0, "init");
        tracker.record(0, fit);

        switch (spec.kind) {
        case OptimizerKind::GA:
            run_ga(spec, std::move(pop), std::move(fit), tracker, seed);
            break;
        case OptimizerKind::PSO:
            run_pso(spec, std::move(pop), std::move(fit), tracker, seed);
            break;
        default:
            run_de(spec, std::move(pop), std::move(fit), tracker, seed);
            break;
        }
        result.evaluations = result.evaluated.size();
        return result;
    }

} // namespace biotune
