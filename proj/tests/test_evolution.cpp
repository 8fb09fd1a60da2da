#include <doctest.h>

#include <atomic>
#include <memory>
#include <cmath>

#include <biotune/evolution.hpp>
#include <biotune/landscape.hpp>

#include "oracles.hpp"

using namespace biotune;
using oracle::ScriptedRng;

namespace {
    Individual make(std::initializer_list<double> genes, std::initializer_list<double> momentum = {}, double fitness = -1.0)
    {
        Genome g(static_cast<Eigen::Index>(genes.size()));
        Eigen::Index i = 0;
        for (double x : genes)
            g(i++) = x;
        Individual ind = Individual::from_genome(g);
        i = 0;
        for (double m : momentum)
            ind.momentum(i++) = m;
        if (fitness >= 0.0)
            ind.fitness = fitness;
        return ind;
    }

    Population sorted_population(std::initializer_list<double> fitness)
    {
        Population pop;
        for (double f : fitness)
            pop.members.push_back(make({0.5, 0.5}, {}, f));
        pop.sort();
        return pop;
    }

    // Sum of gene values, counted calls.
    struct CountingEvaluator {
        std::shared_ptr<std::atomic<int>> calls = std::make_shared<std::atomic<int>>(0);
        double operator()(const Genome& g, const EvalContext&) const
        {
            ++*calls;
            return std::clamp(g.head(g.size() - 1).mean(), 0.0, 1.0);
        }
    };
} // namespace

TEST_SUITE("evolution")
{
    TEST_CASE("initialize_population")
    {
        EvolutionParams p;
        Rng a(1), b(1);
        const auto pop = initialize_population(p, 6, a);
        CHECK(pop.size() == 10);
        for (const auto& m : pop.members) {
            CHECK(m.genome.size() == 7);
            CHECK(m.momentum.isZero());
            CHECK_FALSE(m.evaluated());
        }
        const auto again = initialize_population(p, 6, b);
        for (std::size_t i = 0; i < pop.size(); ++i)
            CHECK(pop.members[i].genome == again.members[i].genome);
    }

    TEST_CASE("extinction factors")
    {
        auto pop = sorted_population({0.4, 0.1, 0.2});
        const auto z = extinction_factors(pop);
        CHECK(z[0] == 0.0);
        CHECK(z[1] == doctest::Approx(0.375));
        CHECK(z[2] == 1.0);
        CHECK(pop.members[1].extinction == z[1]);

        auto perfect = sorted_population({0.0, 0.0, 0.0, 0.0, 0.0});
        const auto zp = extinction_factors(perfect);
        CHECK(zp[0] == 0.0);
        CHECK(zp[2] == doctest::Approx(0.5));
        CHECK(zp[4] == 1.0);
    }

    TEST_CASE("extinction endpoints on random populations")
    {
        Rng rng(12);
        for (int t = 0; t < 300; ++t) {
            Population pop;
            const std::size_t n = 2 + rng.index(20);
            for (std::size_t i = 0; i < n; ++i)
                pop.members.push_back(make({0.5, 0.5}, {}, rng.uniform()));
            pop.sort();
            if (pop.members.front().fitness == pop.members.back().fitness)
                continue;
            const auto z = extinction_factors(pop);
            CHECK(std::abs(z.front()) <= 1e-12);
            CHECK(std::abs(z.back() - 1.0) <= 1e-12);
        }
    }

    TEST_CASE("mutation rate")
    {
        CHECK(mutation_rate(0.0, 0.0, 7) == 1.0 / 7.0);
        CHECK(mutation_rate(1.0, 1.0, 7) == 1.0);
        CHECK(mutation_rate(0.25, 0.75, 7) == doctest::Approx(4.0 / 7.0));
        CHECK(mutation_rate(0.0, 0.0, 2) == 0.5);
    }

    TEST_CASE("exploit clips and books momentum")
    {
        auto ind = make({0.9, 0.2, 0.4}, {0.05, 0.0, 0.0}, 0.3);
        ScriptedRng draws{0.0, 1.0}; // gene 0, +1
        const auto out = exploit_candidate(ind, 0.25, draws);
        CHECK(out.genome(0) == 1.0);
        CHECK(out.momentum(0) == doctest::Approx(0.05 + 0.1));
        CHECK(out.genome(1) == 0.2);
        CHECK_FALSE(out.evaluated());
    }

    TEST_CASE("exploit keeps the original unless fitness strictly improves")
    {
        auto ind = make({0.5, 0.5, 0.3}, {}, 0.5);
        const Evaluator by_first_gene = [](const Genome& g, const EvalContext&) { return g(0); };

        ScriptedRng worse{0.0, 0.9};
        const auto kept = exploit_elite(ind, 0.25, by_first_gene, {}, worse);
        CHECK(kept.genome == ind.genome);
        CHECK(kept.fitness == ind.fitness);

        ScriptedRng better{0.0, 0.1};
        const auto moved = exploit_elite(ind, 0.25, by_first_gene, {}, better);
        CHECK(*moved.fitness < 0.5);
        CHECK((moved.genome.array() != ind.genome.array()).count() == 1);

        const Evaluator failing = [](const Genome&, const EvalContext&) -> double { throw EvaluationError("boom"); };
        ScriptedRng any{0.0, 0.1};
        CHECK(exploit_elite(ind, 0.25, failing, {}, any).genome == ind.genome);
    }

    TEST_CASE("crossover")
    {
        SUBCASE("identical parents without momentum reproduce themselves")
        {
            auto p = make({0.3, 0.7, 0.2});
            Rng rng(4);
            CHECK(crossover(p, p, rng).genome.isApprox(p.genome, 1e-15));
        }
        SUBCASE("midpoint")
        {
            auto a = make({0.2, 0.0});
            auto b = make({0.6, 0.0});
            ScriptedRng draws{0.3, 0.3, 0.5, 0.1, 0.1, 0.5};
            CHECK(crossover(a, b, draws).genome(0) == doctest::Approx(0.4));
        }
        SUBCASE("momentum combination")
        {
            auto a = make({0.5, 0.5}, {0.3, 0.0});
            auto b = make({0.5, 0.5}, {0.1, 0.0});
            ScriptedRng draws{1.0, 1.0, 0.5, 0.0, 0.0, 0.0};
            const auto child = crossover(a, b, draws);
            CHECK(child.momentum(0) == doctest::Approx(0.4));
            CHECK(child.genome(0) == doctest::Approx(0.9));
        }
        SUBCASE("length mismatch")
        {
            Rng rng(1);
            CHECK_THROWS_AS(crossover(make({0.1, 0.2}), make({0.1, 0.2, 0.3}), rng), InvalidPairingError);
        }
    }

    TEST_CASE("mutate")
    {
        auto ind = make({0.3, 0.6, 0.5}, {0.0, 0.1, 0.0});
        Rng rng(2);
        CHECK(mutate(ind, 0.0, 1.0, rng).genome == ind.genome);

        ScriptedRng draws{0.0, 0.0, 0.99, 0.99};
        const auto out = mutate(ind, 1.0, 1.0 / 3.0, draws);
        CHECK(out.genome(0) == 0.0);
        CHECK(out.momentum(0) == doctest::Approx(-0.3));
        CHECK(out.genome(1) == 0.6);
        CHECK(out.genome(2) == 0.5);

        // xi = 1/(B+2): one mutated gene per call on average
        Rng r(77);
        const auto base = make({0.5, 0.5, 0.5, 0.5, 0.5, 0.5, 0.5});
        double changed = 0.0;
        const int trials = 20000;
        for (int t = 0; t < trials; ++t)
            changed += static_cast<double>((mutate(base, 0.2, 1.0 / 7.0, r).genome.array() != 0.5).count());
        CHECK(changed / trials == doctest::Approx(1.0).epsilon(0.03));
    }

    TEST_CASE("adopt")
    {
        auto pa = make({0.2, 0.8});
        auto pb = make({0.6, 0.0});
        auto proto = make({0.4, 0.4});
        auto ind = make({0.4, 0.4});
        Rng rng(5);
        CHECK(adopt(ind, pa, pb, proto, rng).genome.isApprox(ind.genome, 1e-15));

        auto zero = make({0.0, 0.5});
        auto p1 = make({0.5, 0.5});
        auto p2 = make({0.5, 0.5});
        ScriptedRng draws{1.0, 1.0, 1.0, 0.5, 0.5, 0.5};
        const auto out = adopt(zero, p1, p2, p1, draws);
        CHECK(out.genome(0) == doctest::Approx(0.5));
        CHECK(out.momentum(0) == doctest::Approx(0.5));

        CHECK_THROWS_AS(adopt(zero, p1, make({0.1}), p1, rng), InvalidPairingError);
    }

    TEST_CASE("momentum moves exactly with the genes (property)")
    {
        Rng rng(31);
        for (int t = 0; t < 500; ++t) {
            auto ind = Individual::from_genome(random_genome(4, rng));
            ind.momentum = Vector::Random(5) * 0.2;
            auto pa = Individual::from_genome(random_genome(4, rng));
            auto pb = Individual::from_genome(random_genome(4, rng));

            auto check = [&](const Individual& before, const Individual& after) {
                CHECK((after.genome - before.genome).isApprox(after.momentum - before.momentum, 1e-12));
                CHECK(after.genome.minCoeff() >= 0.0);
                CHECK(after.genome.maxCoeff() <= 1.0);
            };
            check(ind, exploit_candidate(ind, 0.25, rng));
            check(ind, mutate(ind, rng.uniform(), rng.uniform(), rng));
            check(ind, adopt(ind, pa, pb, pa, rng));
            const auto child = crossover(pa, ind, rng);
            CHECK(child.genome.minCoeff() >= 0.0);
            CHECK(child.genome.maxCoeff() <= 1.0);
        }
    }

    TEST_CASE("select_parents")
    {
        SUBCASE("pool of two is used up")
        {
            auto pop = sorted_population({0.1, 0.2});
            MatingPool pool(pop);
            Rng rng(3);
            const auto sel = select_parents(pool, std::span<const Individual>(pop.members.data(), 1), rng);
            REQUIRE(sel);
            CHECK(pool.empty());
        }
        SUBCASE("pool of one is exhausted")
        {
            auto pop = sorted_population({0.1});
            MatingPool pool(pop);
            Rng rng(3);
            CHECK_FALSE(select_parents(pool, std::span<const Individual>(pop.members.data(), 1), rng));
        }
        SUBCASE("rank weighting favours the best")
        {
            Population pop;
            for (int i = 0; i < 4; ++i)
                pop.members.push_back(make({0.1 * i, 0.0}, {}, 0.1 * (i + 1)));
            Rng rng(8);
            int best = 0, worst = 0;
            for (int t = 0; t < 10000; ++t) {
                MatingPool pool(pop);
                const auto sel = select_parents(pool, std::span<const Individual>(pop.members.data(), 1), rng);
                best += sel->pa.fitness == 0.1;
                worst += sel->pa.fitness == 0.4;
            }
            CHECK(best > worst);
            // weights 4:3:2:1
            CHECK(best / 10000.0 == doctest::Approx(0.4).epsilon(0.05));
        }
    }

    TEST_CASE("step_generation")
    {
        const CountingEvaluator eval;
        EvolutionParams p;
        Rng rng(9);
        auto pop = initialize_population(p, 3, rng);
        const SearchSchedule schedule;
        evaluate_population(pop, eval, schedule, 1);
        const double best0 = pop.members.front().fitness_or_worst();

        std::vector<EvaluatedGenome> audit;
        auto next = step_generation(pop, p, eval, schedule, {1, 42}, &audit);
        CHECK(next.size() == p.pop_size);
        CHECK(next.generation == 1);
        CHECK(audit.size() == p.pop_size);
        CHECK(next.members.front().fitness_or_worst() <= best0);
        // 10 pool entries give 5 pairs; the remaining 2 offspring are random
        CHECK(std::count_if(audit.begin(), audit.end(), [](const auto& e) { return e.origin == "random"; }) == 2);
        CHECK(std::count_if(audit.begin(), audit.end(), [](const auto& e) { return e.origin == "exploit"; }) == 3);

        SUBCASE("pure exploitation")
        {
            EvolutionParams q = p;
            q.pop_size = 4;
            q.elites = 4; // not a valid run config, but the step handles it
            Population small;
            small.members.assign(pop.members.begin(), pop.members.begin() + 4);
            std::vector<EvaluatedGenome> a;
            const auto n2 = step_generation(small, q, eval, schedule, {1, 1}, &a);
            CHECK(n2.size() == 4);
            CHECK(std::all_of(a.begin(), a.end(), [](const auto& e) { return e.origin == "exploit"; }));
        }
    }

    TEST_CASE("failed offspring get the worst fitness; total failure aborts")
    {
        EvolutionParams p;
        Rng rng(10);
        auto pop = initialize_population(p, 2, rng);
        std::atomic<int> n{0};
        const Evaluator flaky = [&](const Genome& g, const EvalContext&) {
            if (n++ % 3 == 0)
                throw EvaluationError("flaky");
            return g(0);
        };
        const SearchSchedule schedule;
        evaluate_population(pop, flaky, schedule, 1);
        std::vector<EvaluatedGenome> audit;
        const auto next = step_generation(pop, p, flaky, schedule, {1, 3}, &audit);
        CHECK(std::any_of(audit.begin(), audit.end(), [](const auto& e) { return e.failed && e.fitness == 1.0; }));
        CHECK(next.size() == p.pop_size);

        const Evaluator dead = [](const Genome&, const EvalContext&) -> double { throw EvaluationError("down"); };
        CHECK_THROWS_AS(step_generation(next, p, dead, schedule, {1, 3}), AbortedRunError);
        auto fresh = initialize_population(p, 2, rng);
        CHECK_THROWS_AS(evaluate_population(fresh, dead, schedule, 1), AbortedRunError);
    }

    TEST_CASE("run")
    {
        const CountingEvaluator eval;
        SUBCASE("generation cap")
        {
            EvolutionParams p;
            p.max_generations = 1;
            const auto r = run(p, 3, eval, {}, 1);
            CHECK(r.history.size() == 2);
            CHECK(r.evaluations == 20);
        }
        SUBCASE("flat landscape stalls after N_c generations")
        {
            EvolutionParams p;
            p.max_generations = 10;
            const Evaluator flat = [](const Genome&, const EvalContext&) { return 0.5; };
            const auto r = run(p, 3, flat, {}, 1);
            CHECK(r.history.size() == p.stall_generations + 1);
        }
        SUBCASE("incumbent is monotone and reproducible")
        {
            EvolutionParams p;
            Landscape land(LandscapeKind::BlockImportance, 4);
            const auto a = run(p, 4, land.evaluator(), {}, 77);
            const auto b = run(p, 4, land.evaluator(), {}, 77, {.workers = 3});
            for (std::size_t i = 1; i < a.history.size(); ++i)
                CHECK(a.history[i].best <= a.history[i - 1].best);
            CHECK(a.best_genome == b.best_genome);
            CHECK(a.best_fitness == b.best_fitness);
            REQUIRE(a.evaluated.size() == b.evaluated.size());
            for (std::size_t i = 0; i < a.evaluated.size(); ++i) {
                CHECK(a.evaluated[i].genome == b.evaluated[i].genome);
                CHECK(a.evaluated[i].fitness == b.evaluated[i].fitness);
            }
            CHECK(land(a.best_genome) == a.best_fitness);
            for (const auto& e : a.evaluated) {
                CHECK(e.genome.minCoeff() >= 0.0);
                CHECK(e.genome.maxCoeff() <= 1.0);
            }
        }
        SUBCASE("invalid params")
        {
            EvolutionParams p;
            p.elites = 10;
            CHECK_THROWS_AS(run(p, 3, eval, {}, 1), ConfigError);
        }
    }

    TEST_CASE("top_k returns distinct genomes best first")
    {
        SearchResult r;
        Genome a = Genome::Constant(2, 0.1), b = Genome::Constant(2, 0.2);
        r.evaluated = {{0, a, 0.3, "init", false}, {0, b, 0.1, "init", false}, {1, b, 0.1, "exploit", false}, {1, a, 0.05, "x", true}};
        const auto top = top_k(r, 5);
        REQUIRE(top.size() == 2);
        CHECK(top[0].genome == b);
        CHECK(top[1].genome == a);
    }
}
