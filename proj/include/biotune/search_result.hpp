#ifndef BIOTUNE_SEARCH_RESULT_HPP
#define BIOTUNE_SEARCH_RESULT_HPP

#include <cstdint>
#include <string>
#include <vector>

#include <biotune/genome.hpp>

namespace biotune {

    struct GenerationStats {
        std::size_t generation = 0;
        std::size_t evaluations = 0; // cumulative
        double best = 1.0;           // best fitness observed so far
        double mean = 1.0;           // mean fitness of the current population
    };

    struct EvaluatedGenome {
        std::size_t generation = 0;
        Genome genome;
        double fitness = 1.0;
        std::string origin; // init, exploit, offspring, random, ...
        bool failed = false;
    };

    /// Outcome of any search (BioTune or a baseline optimizer).
    struct SearchResult {
        Genome best_genome;
        double best_fitness = 1.0;
        std::vector<GenerationStats> history;
        std::vector<EvaluatedGenome> evaluated;
        std::vector<double> wall_clock_s; // per generation, not part of determinism checks
        std::size_t evaluations = 0;
    };

    /// The k lowest-fitness distinct evaluated genomes, best first.
    std::vector<EvaluatedGenome> top_k(const SearchResult& r, std::size_t k);

} // namespace biotune

#endif
