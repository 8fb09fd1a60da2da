#ifndef BIOTUNE_TOY_NET_HPP
#define BIOTUNE_TOY_NET_HPP

#include <Eigen/Core>

#include <span>
#include <vector>

#include <biotune/genome.hpp>
#include <biotune/random.hpp>

namespace biotune::toy {

    using Matrix = Eigen::MatrixXd;

    struct BlockSlice {
        Eigen::Index offset = 0;
        Eigen::Index size = 0;
    };

    /// Feed-forward classifier split into blocks: B feature blocks
    /// (affine + tanh) and a linear softmax head. Block b maps widths[b]
    /// inputs to widths[b+1] outputs. Parameters live in one flat vector; each
    /// block stores its weight matrix (column-major) followed by its bias.
    class BlockNet {
    public:
        BlockNet() = default;
        explicit BlockNet(std::vector<Eigen::Index> widths);
        BlockNet(Eigen::Index input_dim, Eigen::Index hidden, Eigen::Index feature_blocks, Eigen::Index num_classes);

        Eigen::Index num_blocks() const { return static_cast<Eigen::Index>(_widths.size()) - 1; }
        Eigen::Index head() const { return num_blocks() - 1; }
        Eigen::Index input_dim() const { return _widths.front(); }
        Eigen::Index num_classes() const { return _widths.back(); }
        Eigen::Index num_params() const { return params.size(); }
        const std::vector<Eigen::Index>& widths() const { return _widths; }

        BlockSlice slice(Eigen::Index b) const { return _slices[static_cast<std::size_t>(b)]; }
        /// Parameters before the head.
        Eigen::Index feature_params() const { return slice(head()).offset; }
        std::vector<std::size_t> block_param_counts() const;

        auto block(Eigen::Index b) { return params.segment(slice(b).offset, slice(b).size); }
        auto block(Eigen::Index b) const { return params.segment(slice(b).offset, slice(b).size); }

        Eigen::Map<const Matrix> weight(Eigen::Index b) const;
        Eigen::Map<const Vector> bias(Eigen::Index b) const;

        /// Uniform in +-1/sqrt(fan_in), weights and biases alike.
        void init_block(Eigen::Index b, Rng& rng);
        void init(Rng& rng);

        /// Same feature blocks, fresh head with num_classes outputs.
        BlockNet with_head(Eigen::Index num_classes, Rng& rng) const;

        /// Class probabilities, one column per sample (x is d x N).
        Matrix forward(const Matrix& x) const;

        Vector params;

    private:
        std::vector<Eigen::Index> _widths;
        std::vector<BlockSlice> _slices;
    };

    enum class Regularizer {
        None,
        L1SP,
        L2SP
    };

    std::string_view to_string(Regularizer r);
    Regularizer regularizer_from_string(std::string_view name);

    /// Distance-to-anchor penalty on the feature blocks. The head is excluded:
    /// it is re-initialized for the target task and has no anchor.
    struct Penalty {
        Regularizer kind = Regularizer::None;
        double alpha = 0.0;
        const Vector* anchor = nullptr;
    };

    struct LossGrad {
        double loss = 0.0;
        Vector grad;
    };

    inline constexpr double probability_floor = 1e-12;

    /// Mean cross-entropy over the batch plus the penalty, and its gradient.
    /// Blocks below first_active get a zero gradient and no backward pass.
    LossGrad loss_and_grad(const BlockNet& net, const Matrix& x, std::span<const int> y, const Penalty& penalty = {}, Eigen::Index first_active = 0);

    /// Mean cross-entropy without penalty.
    double cross_entropy(const Matrix& probs, std::span<const int> y);
    double accuracy(const Matrix& probs, std::span<const int> y);

} // namespace biotune::toy

#endif
