#include <biotune/genome.hpp>

#include <numeric>

namespace biotune {

    std::string_view to_string(WeightFunction f)
    {
        switch (f) {
        case WeightFunction::Discriminative:
            return "discriminative";
        case WeightFunction::Scaled:
            return "scaled";
        case WeightFunction::Normalized:
            return "normalized";
        case WeightFunction::Exponential:
            return "exponential";
        }
        return "exponential";
    }

    WeightFunction weight_function_from_string(std::string_view name)
    {
        for (auto f : {WeightFunction::Discriminative, WeightFunction::Scaled, WeightFunction::Normalized, WeightFunction::Exponential})
            if (name == to_string(f))
                return f;
        throw UsageError("unknown weight function '" + std::string(name) + "' (expected discriminative, scaled, normalized or exponential)");
    }

    double trainable_fraction(const FineTuneConfig& cfg, const std::vector<std::size_t>& block_param_counts)
    {
        if (static_cast<Eigen::Index>(block_param_counts.size()) != cfg.num_blocks())
            throw InvalidModelError("trainable_fraction: block count mismatch");
        const std::size_t total = std::accumulate(block_param_counts.begin(), block_param_counts.end(), std::size_t{0});
        if (total == 0)
            throw InvalidModelError("trainable_fraction: model has no parameters");
        std::size_t active = 0;
        for (std::size_t b = 0; b < block_param_counts.size(); ++b)
            if (cfg.eta(static_cast<Eigen::Index>(b)) > 0.0)
                active += block_param_counts[b];
        return static_cast<double>(active) / static_cast<double>(total);
    }

} // namespace biotune
