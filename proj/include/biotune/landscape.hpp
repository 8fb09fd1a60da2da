#ifndef BIOTUNE_LANDSCAPE_HPP
#define BIOTUNE_LANDSCAPE_HPP

#include <string_view>

#include <biotune/fitness.hpp>
#include <biotune/genome.hpp>

namespace biotune {

    enum class LandscapeKind {
        SphereOnEta,
        BlockImportance,
        DeceptiveThreshold
    };

    std::string_view to_string(LandscapeKind k);
    LandscapeKind landscape_kind_from_string(std::string_view name);

    /// Deterministic synthetic fitness surfaces over genomes, used in place of
    /// real training to test the optimizers. Values lie in [0,1].
    ///
    /// sphere-on-eta: floor + (1 - floor) * mean over blocks of the squared
    ///   log10 distance (halved, capped at 1) between the Exponential-decoded
    ///   eta and target_eta. A frozen block counts as log10 eta = -1.5.
    /// block-importance: 1 - (1 - floor) * score, where score rewards training
    ///   useful blocks at their preferred learning rate (Gaussian in log10 eta,
    ///   width lr_width) and penalizes training the other blocks.
    /// deceptive-threshold: like block-importance, but 40% of the score comes
    ///   from the threshold gene: the larger of a low lure bump at lure_center
    ///   and a flat-top band around band_center with Gaussian shoulders.
    class Landscape {
    public:
        Landscape(LandscapeKind kind, Eigen::Index num_blocks);

        LandscapeKind kind() const { return _kind; }
        Eigen::Index num_blocks() const { return _num_blocks; }

        double operator()(const Genome& g) const;

        Evaluator evaluator() const;

        // Shape parameters, exposed for tests and experiments.
        Vector target_eta;          // sphere-on-eta
        Mask useful;                // block-importance / deceptive-threshold
        Vector preferred_log10_eta; // per block; only useful blocks matter
        double lr_width = 1.5;
        double inactive_penalty = 0.25;
        double floor = 0.15;
        double band_center = 0.7;
        double band_halfwidth = 0.15;
        double band_shoulder = 0.1;
        double lure_center = 0.2;
        double lure_width = 0.15;
        double lure_height = 0.3;

    private:
        double _block_score(const Genome& g) const;

        LandscapeKind _kind;
        Eigen::Index _num_blocks;
    };

} // namespace biotune

#endif
