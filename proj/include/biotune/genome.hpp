#ifndef BIOTUNE_GENOME_HPP
#define BIOTUNE_GENOME_HPP

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include <biotune/errors.hpp>
#include <biotune/random.hpp>

namespace biotune {

    // A genome holds B+1 block importance genes followed by the freezing
    // threshold gene. All genes live in [0,1].
    template <typename Scalar>
    using GenomeT = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
    using Genome = GenomeT<double>;

    using Vector = Eigen::VectorXd;
    using Mask = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, 1>;

    enum class WeightFunction {
        Discriminative,
        Scaled,
        Normalized,
        Exponential
    };

    std::string_view to_string(WeightFunction f);
    WeightFunction weight_function_from_string(std::string_view name);

    /// Decoded fine-tuning configuration: eta(b) == 0 means block b is frozen.
    struct FineTuneConfig {
        Vector eta;
        double base_lr = 1.0;

        Eigen::Index num_blocks() const { return eta.size(); }
        Vector block_lrs() const { return eta * base_lr; }
        bool frozen(Eigen::Index b) const { return eta(b) == 0.0; }
    };

    template <typename Derived>
    Eigen::Index genome_blocks(const Eigen::MatrixBase<Derived>& g)
    {
        return g.size() - 1;
    }

    template <typename Derived>
    typename Derived::Scalar freezing_threshold(const Eigen::MatrixBase<Derived>& g)
    {
        return g(g.size() - 1);
    }

    template <typename Scalar = double>
    GenomeT<Scalar> random_genome(Eigen::Index num_blocks, Rng& rng)
    {
        if (num_blocks < 1)
            throw InvalidModelError("random_genome: model must have at least one block");
        GenomeT<Scalar> g(num_blocks + 1);
        for (Eigen::Index i = 0; i < g.size(); ++i)
            g(i) = static_cast<Scalar>(rng.uniform());
        return g;
    }

    template <typename Derived>
    void clip_genes(Eigen::MatrixBase<Derived>& g)
    {
        using Scalar = typename Derived::Scalar;
        g = g.cwiseMax(Scalar(0)).cwiseMin(Scalar(1));
    }

    template <typename Derived>
    auto clipped(const Eigen::MatrixBase<Derived>& g)
    {
        using Scalar = typename Derived::Scalar;
        return g.cwiseMax(Scalar(0)).cwiseMin(Scalar(1)).eval();
    }

    /// 1 where the block trains (gene strictly above the threshold), 0 where frozen.
    template <typename Derived>
    Mask selection_mask(const Eigen::MatrixBase<Derived>& g)
    {
        const Eigen::Index blocks = genome_blocks(g);
        const auto eps = freezing_threshold(g);
        Mask mask(blocks);
        for (Eigen::Index b = 0; b < blocks; ++b)
            mask(b) = g(b) > eps ? 1 : 0;
        return mask;
    }

    namespace detail {
        template <typename Derived>
        GenomeT<typename Derived::Scalar> importance_weights(const Eigen::MatrixBase<Derived>& g, WeightFunction f, bool strict)
        {
            using Scalar = typename Derived::Scalar;
            const Eigen::Index blocks = genome_blocks(g);
            if (blocks < 1)
                throw InvalidModelError("importance_weights: genome too short");
            const auto nu = g.head(blocks);
            const Scalar eps = freezing_threshold(g);
            GenomeT<Scalar> w(blocks);

            switch (f) {
            case WeightFunction::Discriminative:
                w.setOnes();
                break;
            case WeightFunction::Scaled: {
                const Scalar top = nu.maxCoeff();
                if (top > Scalar(0))
                    w = nu / top;
                else
                    w.setZero(); // every block gene is 0, so every block is frozen anyway
                break;
            }
            case WeightFunction::Normalized: {
                const Scalar top = nu.maxCoeff();
                const Scalar denom = top - eps;
                if (denom <= Scalar(0)) {
                    if (strict)
                        throw DegenerateWeightsError("normalized weights: max block gene does not exceed the freezing threshold");
                    w.setZero();
                }
                else {
                    // Blocks below the threshold would go negative; they are frozen, clamp to 0.
                    w = ((nu.array() - eps) / denom).cwiseMax(Scalar(0)).matrix();
                }
                break;
            }
            case WeightFunction::Exponential:
                for (Eigen::Index b = 0; b < blocks; ++b)
                    w(b) = std::pow(Scalar(10), Scalar(2) * (nu(b) - Scalar(0.5)));
                break;
            }
            return w;
        }
    } // namespace detail

    /// Per-block importance weights W. Throws DegenerateWeightsError for
    /// Normalized weights when no block gene exceeds the threshold.
    template <typename Derived>
    GenomeT<typename Derived::Scalar> importance_weights(const Eigen::MatrixBase<Derived>& g, WeightFunction f = WeightFunction::Exponential)
    {
        return detail::importance_weights(g, f, true);
    }

    /// eta = mask .* W, learning rates = eta * base_lr. Degenerate Normalized
    /// genomes decode to an all-frozen configuration.
    template <typename Derived>
    FineTuneConfig decode(const Eigen::MatrixBase<Derived>& g, WeightFunction f, double base_lr)
    {
        if (!(base_lr > 0.0))
            throw InvalidModelError("decode: base learning rate must be positive");
        const auto w = detail::importance_weights(g, f, false);
        const Mask mask = selection_mask(g);
        FineTuneConfig cfg;
        cfg.base_lr = base_lr;
        cfg.eta = (mask.template cast<double>().array() * w.template cast<double>().array()).matrix();
        return cfg;
    }

    /// Fraction of model parameters that belong to trainable blocks.
    double trainable_fraction(const FineTuneConfig& cfg, const std::vector<std::size_t>& block_param_counts);

} // namespace biotune

#endif
