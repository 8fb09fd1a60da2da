#include <biotune/landscape.hpp>

#include <algorithm>
#include <cmath>

namespace biotune {

    std::string_view to_string(LandscapeKind k)
    {
        switch (k) {
        case LandscapeKind::SphereOnEta:
            return "sphere-on-eta";
        case LandscapeKind::BlockImportance:
            return "block-importance";
        case LandscapeKind::DeceptiveThreshold:
            return "deceptive-threshold";
        }
        return "block-importance";
    }

    LandscapeKind landscape_kind_from_string(std::string_view name)
    {
        for (auto k : {LandscapeKind::SphereOnEta, LandscapeKind::BlockImportance, LandscapeKind::DeceptiveThreshold})
            if (name == to_string(k))
                return k;
        throw UsageError("unknown landscape '" + std::string(name) + "' (expected sphere-on-eta, block-importance or deceptive-threshold)");
    }

    Landscape::Landscape(LandscapeKind kind, Eigen::Index num_blocks) : _kind(kind), _num_blocks(num_blocks)
    {
        if (num_blocks < 1)
            throw InvalidModelError("landscape needs at least one block");

        const Eigen::Index last = num_blocks - 1;

        // Sphere target: the first block frozen, the head at the largest
        // multiplier, blocks in between ramping up.
        target_eta.resize(num_blocks);
        for (Eigen::Index b = 0; b < num_blocks; ++b) {
            if (b == 0 && num_blocks > 1)
                target_eta(b) = 0.0;
            else if (b == last)
                target_eta(b) = 10.0;
            else
                target_eta(b) = std::pow(10.0, 2.0 * (0.3 + 0.4 * static_cast<double>(b) / static_cast<double>(last) - 0.5));
        }

        // Later blocks are useful, earlier ones should stay frozen.
        useful.resize(num_blocks);
        preferred_log10_eta.resize(num_blocks);
        for (Eigen::Index b = 0; b < num_blocks; ++b) {
            useful(b) = (2 * b >= num_blocks || b == last) ? 1 : 0;
            preferred_log10_eta(b) = b == last ? 0.6 : 0.2;
        }
    }

    double Landscape::_block_score(const Genome& g) const
    {
        const auto cfg = decode(g, WeightFunction::Exponential, 1.0);
        const double n_useful = std::max<double>(1.0, static_cast<double>(useful.cast<int>().sum()));
        const double n_other = std::max<double>(1.0, static_cast<double>(_num_blocks) - n_useful);

        double score = 0.0;
        for (Eigen::Index b = 0; b < _num_blocks; ++b) {
            if (cfg.eta(b) == 0.0)
                continue;
            if (useful(b)) {
                const double d = std::log10(cfg.eta(b)) - preferred_log10_eta(b);
                score += std::exp(-d * d / (2.0 * lr_width * lr_width)) / n_useful;
            }
            else {
                score -= inactive_penalty / n_other;
            }
        }
        return std::clamp(score, 0.0, 1.0);
    }

    double Landscape::operator()(const Genome& g) const
    {
        if (g.size() != _num_blocks + 1)
            throw InvalidModelError("landscape: genome length does not match the block count");

        switch (_kind) {
        case LandscapeKind::SphereOnEta: {
            // frozen sits half a decade below the smallest trainable multiplier
            const auto level = [](double eta) { return eta > 0.0 ? std::log10(eta) : -1.5; };
            const auto cfg = decode(g, WeightFunction::Exponential, 1.0);
            double dist = 0.0;
            for (Eigen::Index b = 0; b < _num_blocks; ++b) {
                const double d = (level(cfg.eta(b)) - level(target_eta(b))) / 2.0;
                dist += std::min(1.0, d * d);
            }
            return floor + (1.0 - floor) * dist / static_cast<double>(_num_blocks);
        }
        case LandscapeKind::BlockImportance:
            return std::clamp(1.0 - (1.0 - floor) * _block_score(g), 0.0, 1.0);
        case LandscapeKind::DeceptiveThreshold: {
            const double eps = freezing_threshold(g);
            const double lure = lure_height * std::exp(-(eps - lure_center) * (eps - lure_center) / (2.0 * lure_width * lure_width));
            const double off = std::max(0.0, std::abs(eps - band_center) - band_halfwidth);
            const double band = std::exp(-off * off / (2.0 * band_shoulder * band_shoulder));
            const double score = 0.6 * _block_score(g) + 0.4 * std::max(lure, band);
            return std::clamp(1.0 - (1.0 - floor) * score, 0.0, 1.0);
        }
        }
        return 1.0;
    }

    Evaluator Landscape::evaluator() const
    {
        return [self = *this](const Genome& g, const EvalContext&) { return self(g); };
    }

} // namespace biotune
