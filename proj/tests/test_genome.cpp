#include <doctest.h>

#include <cmath>

#include <biotune/genome.hpp>

#include "oracles.hpp"

using namespace biotune;

namespace {
    Genome genome(std::initializer_list<double> v)
    {
        Genome g(static_cast<Eigen::Index>(v.size()));
        Eigen::Index i = 0;
        for (double x : v)
            g(i++) = x;
        return g;
    }
} // namespace

TEST_SUITE("genome")
{
    TEST_CASE("random_genome has B+2 genes in [0,1] and is seed-deterministic")
    {
        Rng a(7), b(7);
        const Genome g = random_genome(6, a);
        CHECK(g.size() == 7);
        CHECK(g.minCoeff() >= 0.0);
        CHECK(g.maxCoeff() <= 1.0);
        CHECK(g == random_genome(6, b));

        Rng c(1);
        CHECK(random_genome(1, c).size() == 2);
        CHECK_THROWS_AS(random_genome(0, c), InvalidModelError);
    }

    TEST_CASE("selection_mask freezes at and below the threshold")
    {
        const Mask m = selection_mask(genome({0.2, 0.8, 0.5, 0.5}));
        CHECK(m.size() == 3);
        CHECK(m(0) == 0);
        CHECK(m(1) == 1);
        CHECK(m(2) == 0); // equal to the threshold

        CHECK(selection_mask(genome({0.1, 0.3, 0.0})).cast<int>().sum() == 2);
        CHECK(selection_mask(genome({1.0, 0.7, 1.0})).cast<int>().sum() == 0);
    }

    TEST_CASE("importance weights")
    {
        SUBCASE("exponential")
        {
            const Genome w = importance_weights(genome({0.5, 1.0, 0.0, 0.3}));
            CHECK(w(0) == doctest::Approx(1.0));
            CHECK(w(1) == doctest::Approx(10.0));
            CHECK(w(2) == doctest::Approx(0.1));
        }
        SUBCASE("scaled uses the block genes only")
        {
            const Genome w = importance_weights(genome({0.2, 0.4, 0.9}), WeightFunction::Scaled);
            CHECK(w(0) == doctest::Approx(0.5));
            CHECK(w(1) == doctest::Approx(1.0));
        }
        SUBCASE("normalized")
        {
            const Genome w = importance_weights(genome({0.3, 0.6, 0.9, 0.4}), WeightFunction::Normalized);
            CHECK(w(0) == 0.0);
            CHECK(w(1) == doctest::Approx(0.4));
            CHECK(w(2) == doctest::Approx(1.0));
            CHECK_THROWS_AS(importance_weights(genome({0.3, 0.5, 0.5}), WeightFunction::Normalized), DegenerateWeightsError);
        }
        SUBCASE("discriminative")
        {
            CHECK(importance_weights(genome({0.1, 0.9, 0.4}), WeightFunction::Discriminative) == Genome::Ones(2));
        }
    }

    TEST_CASE("decode")
    {
        const auto cfg = decode(genome({0.9, 0.3, 0.5}), WeightFunction::Exponential, 1e-3);
        CHECK(cfg.eta(0) == doctest::Approx(std::pow(10.0, 0.8)));
        CHECK(cfg.eta(1) == 0.0);
        CHECK(cfg.block_lrs()(0) == doctest::Approx(std::pow(10.0, 0.8) * 1e-3));
        CHECK(cfg.block_lrs()(1) == 0.0);

        CHECK(decode(genome({0.1, 0.2, 0.6}), WeightFunction::Exponential, 1.0).eta.isZero());
        // degenerate Normalized decodes to all frozen instead of throwing
        CHECK(decode(genome({0.1, 0.2, 0.6}), WeightFunction::Normalized, 1.0).eta.isZero());

        const auto disc = decode(genome({0.9, 0.3, 0.7, 0.5}), WeightFunction::Discriminative, 0.01);
        CHECK(disc.block_lrs()(0) == 0.01);
        CHECK(disc.block_lrs()(1) == 0.0);
        CHECK(disc.block_lrs()(2) == 0.01);

        CHECK_THROWS_AS(decode(genome({0.9, 0.3}), WeightFunction::Exponential, 0.0), InvalidModelError);
    }

    TEST_CASE("trainable_fraction")
    {
        FineTuneConfig cfg{Vector::Ones(2), 1.0};
        CHECK(trainable_fraction(cfg, {100, 300}) == 1.0);
        cfg.eta << 0.0, 2.0;
        CHECK(trainable_fraction(cfg, {100, 300}) == doctest::Approx(0.75));
        cfg.eta.setZero();
        CHECK(trainable_fraction(cfg, {100, 300}) == 0.0);
        CHECK_THROWS_AS(trainable_fraction(cfg, {0, 0}), InvalidModelError);
        CHECK_THROWS_AS(trainable_fraction(cfg, {1}), InvalidModelError);
    }

    TEST_CASE("properties over random genomes")
    {
        Rng rng(2024);
        const WeightFunction all[] = {WeightFunction::Discriminative, WeightFunction::Scaled, WeightFunction::Normalized, WeightFunction::Exponential};
        for (int trial = 0; trial < 500; ++trial) {
            const Eigen::Index blocks = 1 + static_cast<Eigen::Index>(rng.index(8));
            const Genome g = random_genome(blocks, rng);
            const std::vector<double> genes(g.data(), g.data() + g.size());
            const Mask mask = selection_mask(g);

            // clipping is idempotent on in-box genomes
            CHECK(clipped(g) == g);

            for (auto f : all) {
                const auto cfg = decode(g, f, 1.0);
                const auto ref = oracle::eta(genes, f);
                for (Eigen::Index b = 0; b < blocks; ++b) {
                    CHECK(cfg.eta(b) == ref[static_cast<std::size_t>(b)]);
                    CHECK(cfg.eta(b) >= 0.0);
                    CHECK((cfg.eta(b) == 0.0) == (mask(b) == 0));
                }
            }
            const Genome w = importance_weights(g);
            CHECK(w.minCoeff() >= 0.1);
            CHECK(w.maxCoeff() <= 10.0);
        }
    }

    TEST_CASE("exponential weights increase strictly with the gene")
    {
        Genome g(3);
        double last = 0.0;
        for (int i = 0; i <= 100; ++i) {
            g << i / 100.0, 0.0, 0.0;
            const double w = importance_weights(g)(0);
            CHECK(w > last);
            last = w;
        }
    }

    TEST_CASE("weight function names round-trip")
    {
        for (auto f : {WeightFunction::Discriminative, WeightFunction::Scaled, WeightFunction::Normalized, WeightFunction::Exponential})
            CHECK(weight_function_from_string(to_string(f)) == f);
        CHECK_THROWS_AS(weight_function_from_string("cubic"), UsageError);
    }
}
