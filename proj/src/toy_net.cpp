#include <biotune/toy/net.hpp>

#include <cmath>

namespace biotune::toy {

    BlockNet::BlockNet(std::vector<Eigen::Index> widths) : _widths(std::move(widths))
    {
        if (_widths.size() < 2)
            throw InvalidModelError("BlockNet needs at least one block");
        Eigen::Index offset = 0;
        for (std::size_t b = 0; b + 1 < _widths.size(); ++b) {
            if (_widths[b] < 1 || _widths[b + 1] < 1)
                throw InvalidModelError("BlockNet widths must be positive");
            const Eigen::Index size = _widths[b + 1] * _widths[b] + _widths[b + 1];
            _slices.push_back({offset, size});
            offset += size;
        }
        params = Vector::Zero(offset);
    }

    BlockNet::BlockNet(Eigen::Index input_dim, Eigen::Index hidden, Eigen::Index feature_blocks, Eigen::Index num_classes)
        : BlockNet([&] {
              std::vector<Eigen::Index> w{input_dim};
              for (Eigen::Index b = 0; b < feature_blocks; ++b)
                  w.push_back(hidden);
              w.push_back(num_classes);
              return w;
          }())
    {
    }

    std::vector<std::size_t> BlockNet::block_param_counts() const
    {
        std::vector<std::size_t> out;
        for (const auto& s : _slices)
            out.push_back(static_cast<std::size_t>(s.size));
        return out;
    }

    Eigen::Map<const Matrix> BlockNet::weight(Eigen::Index b) const
    {
        const auto i = static_cast<std::size_t>(b);
        return {params.data() + _slices[i].offset, _widths[i + 1], _widths[i]};
    }

    Eigen::Map<const Vector> BlockNet::bias(Eigen::Index b) const
    {
        const auto i = static_cast<std::size_t>(b);
        return {params.data() + _slices[i].offset + _widths[i + 1] * _widths[i], _widths[i + 1]};
    }

    void BlockNet::init_block(Eigen::Index b, Rng& rng)
    {
        const double bound = 1.0 / std::sqrt(static_cast<double>(_widths[static_cast<std::size_t>(b)]));
        auto seg = block(b);
        for (Eigen::Index i = 0; i < seg.size(); ++i)
            seg(i) = bound * rng.symmetric();
    }

    void BlockNet::init(Rng& rng)
    {
        for (Eigen::Index b = 0; b < num_blocks(); ++b)
            init_block(b, rng);
    }

    BlockNet BlockNet::with_head(Eigen::Index num_classes, Rng& rng) const
    {
        auto widths = _widths;
        widths.back() = num_classes;
        BlockNet out(widths);
        out.params.head(feature_params()) = params.head(feature_params());
        out.init_block(out.head(), rng);
        return out;
    }

    namespace {
        void softmax_columns(Matrix& z)
        {
            for (Eigen::Index i = 0; i < z.cols(); ++i) {
                auto col = z.col(i);
                col.array() = (col.array() - col.maxCoeff()).exp();
                col /= col.sum();
            }
        }

        // activations[b] is the input of block b; the last entry holds probabilities
        std::vector<Matrix> forward_all(const BlockNet& net, const Matrix& x)
        {
            std::vector<Matrix> act;
            act.reserve(static_cast<std::size_t>(net.num_blocks()) + 1);
            act.push_back(x);
            for (Eigen::Index b = 0; b < net.num_blocks(); ++b) {
                Matrix z = net.weight(b) * act.back();
                z.colwise() += net.bias(b);
                if (b == net.head())
                    softmax_columns(z);
                else
                    z = z.array().tanh();
                act.push_back(std::move(z));
            }
            return act;
        }
    } // namespace

    Matrix BlockNet::forward(const Matrix& x) const
    {
        if (x.rows() != input_dim())
            throw InvalidModelError("BlockNet::forward: input dimension mismatch");
        return std::move(forward_all(*this, x).back());
    }

    double cross_entropy(const Matrix& probs, std::span<const int> y)
    {
        double sum = 0.0;
        for (Eigen::Index i = 0; i < probs.cols(); ++i)
            sum -= std::log(std::max(probs(y[static_cast<std::size_t>(i)], i), probability_floor));
        return sum / static_cast<double>(probs.cols());
    }

    double accuracy(const Matrix& probs, std::span<const int> y)
    {
        std::size_t hits = 0;
        for (Eigen::Index i = 0; i < probs.cols(); ++i) {
            Eigen::Index arg = 0;
            probs.col(i).maxCoeff(&arg);
            hits += arg == y[static_cast<std::size_t>(i)];
        }
        return static_cast<double>(hits) / static_cast<double>(probs.cols());
    }

    LossGrad loss_and_grad(const BlockNet& net, const Matrix& x, std::span<const int> y, const Penalty& penalty, Eigen::Index first_active)
    {
        const Eigen::Index n = x.cols();
        if (n == 0 || static_cast<std::size_t>(n) != y.size())
            throw InvalidModelError("loss_and_grad: empty batch or label count mismatch");
        if (x.rows() != net.input_dim())
            throw InvalidModelError("loss_and_grad: input dimension mismatch");

        const auto act = forward_all(net, x);
        const Matrix& probs = act.back();

        LossGrad out;
        out.loss = cross_entropy(probs, y);
        out.grad = Vector::Zero(net.num_params());

        // d loss / d logits; a floored probability contributes a constant term
        Matrix delta = probs;
        for (Eigen::Index i = 0; i < n; ++i) {
            const int c = y[static_cast<std::size_t>(i)];
            if (probs(c, i) < probability_floor)
                delta.col(i).setZero();
            else
                delta(c, i) -= 1.0;
        }
        delta /= static_cast<double>(n);

        for (Eigen::Index b = net.head(); b >= first_active; --b) {
            const auto s = net.slice(b);
            const Eigen::Index out_dim = net.weight(b).rows();
            const Eigen::Index in_dim = net.weight(b).cols();
            if (b != net.head())
                delta.array() *= 1.0 - act[static_cast<std::size_t>(b) + 1].array().square();
            Eigen::Map<Matrix>(out.grad.data() + s.offset, out_dim, in_dim) = delta * act[static_cast<std::size_t>(b)].transpose();
            out.grad.segment(s.offset + out_dim * in_dim, out_dim) = delta.rowwise().sum();
            if (b > first_active)
                delta = net.weight(b).transpose() * delta;
        }

        if (penalty.kind != Regularizer::None && penalty.alpha != 0.0) {
            const Eigen::Index m = net.feature_params();
            if (penalty.anchor == nullptr || penalty.anchor->size() < m)
                throw InvalidModelError("loss_and_grad: penalty anchor does not cover the feature blocks");
            const Vector diff = net.params.head(m) - penalty.anchor->head(m);
            const Eigen::Index from = first_active < net.head() ? net.slice(first_active).offset : m;
            if (penalty.kind == Regularizer::L1SP) {
                out.loss += penalty.alpha * diff.lpNorm<1>();
                out.grad.segment(from, m - from) += penalty.alpha * diff.tail(m - from).array().sign().matrix();
            }
            else {
                out.loss += penalty.alpha * diff.squaredNorm();
                out.grad.segment(from, m - from) += 2.0 * penalty.alpha * diff.tail(m - from);
            }
        }
        return out;
    }

    std::string_view to_string(Regularizer r)
    {
        switch (r) {
        case Regularizer::None:
            return "none";
        case Regularizer::L1SP:
            return "l1sp";
        case Regularizer::L2SP:
            return "l2sp";
        }
        return "none";
    }

    Regularizer regularizer_from_string(std::string_view name)
    {
        for (auto r : {Regularizer::None, Regularizer::L1SP, Regularizer::L2SP})
            if (name == to_string(r))
                return r;
        throw UsageError("unknown regularizer '" + std::string(name) + "' (expected none, l1sp or l2sp)");
    }

} // namespace biotune::toy
