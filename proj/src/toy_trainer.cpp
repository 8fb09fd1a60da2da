#include <biotune/toy/trainer.hpp>

#include <spdlog/spdlog.h>

#include <cmath>
#include <numeric>

namespace biotune::toy {

    void TrainSpec::validate() const
    {
        if (!(base_lr > 0.0) || !std::isfinite(base_lr))
            throw ConfigError("train.base_lr must be positive");
        if (max_epochs < 1)
            throw ConfigError("train.max_epochs must be at least 1");
        if (patience < 1 || patience > max_epochs)
            throw ConfigError("train.patience must lie in [1, max_epochs]");
        if (batch_size < 1)
            throw ConfigError("train.batch_size must be positive");
        if (alpha < 0.0)
            throw ConfigError("train.alpha must be non-negative");
    }

    namespace {
        struct Metrics {
            double accuracy;
            double loss;
        };

        Metrics measure(const BlockNet& net, const Dataset& ds)
        {
            const Matrix probs = net.forward(ds.x);
            return {accuracy(probs, ds.y), cross_entropy(probs, ds.y)};
        }

        std::vector<std::vector<std::size_t>> batches(std::size_t n, std::size_t batch_size, Rng& rng)
        {
            std::vector<std::size_t> order(n);
            std::iota(order.begin(), order.end(), std::size_t{0});
            shuffle(order, rng);
            std::vector<std::vector<std::size_t>> out;
            for (std::size_t i = 0; i < n; i += batch_size)
                out.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i), order.begin() + static_cast<std::ptrdiff_t>(std::min(n, i + batch_size)));
            return out;
        }

        // One pass over data; blocks with multiplier 0 stay untouched.
        void sgd_epoch(BlockNet& net, const Dataset& data, const Vector& lrs, const Penalty& penalty, std::size_t batch_size, Rng& rng)
        {
            Eigen::Index first_active = 0;
            while (first_active < net.num_blocks() && lrs(first_active) == 0.0)
                ++first_active;
            if (first_active == net.num_blocks())
                return;

            for (const auto& idx : batches(data.size(), batch_size, rng)) {
                const Dataset batch = data.subset(idx);
                const LossGrad lg = loss_and_grad(net, batch.x, batch.y, penalty, first_active);
                if (!std::isfinite(lg.loss))
                    throw DivergenceError("training loss is not finite; lower the base learning rate");
                for (Eigen::Index b = first_active; b < net.num_blocks(); ++b)
                    if (lrs(b) != 0.0)
                        net.block(b) -= lrs(b) * lg.grad.segment(net.slice(b).offset, net.slice(b).size);
            }
        }
    } // namespace

    Vector pretrain(BlockNet& net, const Dataset& source, const TrainSpec& spec, std::uint64_t seed)
    {
        spec.validate();
        if (net.input_dim() != source.x.rows() || net.num_classes() != source.num_classes)
            throw InvalidModelError("pretrain: network shape does not match the source task");
        Rng init_rng(derive_seed(seed, 0x1417));
        Rng order_rng(derive_seed(seed, 0x0DE5));
        net.init(init_rng);

        const Vector lrs = Vector::Constant(net.num_blocks(), spec.base_lr);
        Vector best = net.params;
        double best_loss = measure(net, source).loss;
        std::size_t since = 0;
        for (std::size_t epoch = 0; epoch < spec.max_epochs; ++epoch) {
            sgd_epoch(net, source, lrs, {}, spec.batch_size, order_rng);
            const double loss = measure(net, source).loss;
            if (!std::isfinite(loss))
                throw DivergenceError("pretraining loss is not finite; lower the base learning rate");
            if (loss < best_loss) {
                best_loss = loss;
                best = net.params;
                since = 0;
            }
            else if (++since >= spec.patience) {
                break;
            }
        }
        net.params = best;
        spdlog::debug("pretrain: source loss {:.4f}, accuracy {:.4f}", best_loss, measure(net, source).accuracy);
        return best;
    }

    TrainResult train_target(const BlockNet& pretrained, const TargetData& data, const TrainSpec& spec, const LrSchedule& schedule, std::uint64_t seed)
    {
        spec.validate();
        if (data.train == nullptr || data.val == nullptr || data.train->size() == 0)
            throw InvalidModelError("train_target: missing training or validation data");

        Rng head_rng(derive_seed(seed, 0x4EAD));
        Rng order_rng(derive_seed(seed, 0x0DE5));
        BlockNet net = pretrained.with_head(data.train->num_classes, head_rng);
        const Penalty penalty{spec.regularizer, spec.alpha, &pretrained.params};

        TrainResult result;
        const auto finish = [&](const Vector& params) {
            net.params = params;
            const auto val = measure(net, *data.val);
            result.val_accuracy = val.accuracy;
            result.val_loss = val.loss;
            result.test_accuracy = data.test ? measure(net, *data.test).accuracy : 0.0;
            result.params = params;
            return result;
        };

        double best_acc = -1.0;
        Vector best_params = net.params;
        for (std::size_t epoch = 0; epoch < spec.max_epochs; ++epoch) {
            const Vector eta = schedule(epoch, net);
            if (eta.size() != net.num_blocks())
                throw InvalidModelError("train_target: schedule length does not match the block count");
            if (epoch == 0 && (eta.array() == 0.0).all())
                return finish(net.params);

            sgd_epoch(net, *data.train, eta * spec.base_lr, penalty, spec.batch_size, order_rng);
            const auto val = measure(net, *data.val);
            if (!std::isfinite(val.loss))
                throw DivergenceError("validation loss is not finite; lower the base learning rate");
            result.epochs_run = epoch + 1;
            if (val.accuracy > best_acc) {
                best_acc = val.accuracy;
                best_params = net.params;
                result.best_epoch = epoch;
            }
            else if (epoch - result.best_epoch >= spec.patience) {
                break;
            }
        }
        return finish(best_params);
    }

    TrainResult finetune(const BlockNet& pretrained, const FineTuneConfig& cfg, const TargetData& data, const TrainSpec& spec, std::uint64_t seed)
    {
        if (cfg.num_blocks() != pretrained.num_blocks())
            throw InvalidModelError("finetune: configuration has " + std::to_string(cfg.num_blocks()) + " blocks, network has " + std::to_string(pretrained.num_blocks()));
        TrainSpec scaled = spec;
        scaled.base_lr = cfg.base_lr;
        return train_target(pretrained, data, scaled, [eta = cfg.eta](std::size_t, const BlockNet&) { return eta; }, seed);
    }

    std::string_view to_string(Baseline b)
    {
        switch (b) {
        case Baseline::FT:
            return "FT";
        case Baseline::LP:
            return "LP";
        case Baseline::GradualLastFirst:
            return "G-LF";
        case Baseline::GradualFirstLast:
            return "G-FL";
        case Baseline::L1SP:
            return "L1SP";
        case Baseline::L2SP:
            return "L2SP";
        case Baseline::AutoRGN:
            return "AutoRGN";
        }
        return "FT";
    }

    Baseline baseline_from_string(std::string_view name)
    {
        for (auto b : all_baselines)
            if (name == to_string(b))
                return b;
        throw UsageError("unknown baseline '" + std::string(name) + "' (expected FT, LP, G-LF, G-FL, L1SP, L2SP or AutoRGN)");
    }

    Vector gradual_multipliers(std::size_t epoch, Eigen::Index num_blocks, std::size_t max_epochs, bool last_first)
    {
        const auto blocks = static_cast<std::size_t>(num_blocks);
        const std::size_t every = (max_epochs + blocks - 1) / blocks;
        const auto open = static_cast<Eigen::Index>(std::min(blocks, 1 + epoch / std::max<std::size_t>(every, 1)));
        Vector eta = Vector::Zero(num_blocks);
        if (last_first)
            eta.tail(open).setOnes();
        else
            eta.head(open).setOnes();
        return eta;
    }

    Vector autorgn_multipliers(const BlockNet& net, const Dataset& data)
    {
        const LossGrad lg = loss_and_grad(net, data.x, data.y);
        Vector ratio(net.num_blocks());
        for (Eigen::Index b = 0; b < net.num_blocks(); ++b) {
            const auto s = net.slice(b);
            ratio(b) = lg.grad.segment(s.offset, s.size).norm() / std::max(net.block(b).norm(), 1e-12);
        }
        ratio = ratio.cwiseMax(1e-12);
        return ratio / ratio.mean();
    }

    TrainResult run_baseline(Baseline method, const BlockNet& pretrained, const TargetData& data, const TrainSpec& spec, std::uint64_t seed)
    {
        const Eigen::Index blocks = pretrained.num_blocks();
        FineTuneConfig cfg{Vector::Ones(blocks), spec.base_lr};
        TrainSpec plain = spec;
        plain.regularizer = Regularizer::None;

        switch (method) {
        case Baseline::FT:
            return finetune(pretrained, cfg, data, plain, seed);
        case Baseline::LP:
            cfg.eta.head(blocks - 1).setZero();
            return finetune(pretrained, cfg, data, plain, seed);
        case Baseline::GradualLastFirst:
        case Baseline::GradualFirstLast: {
            const bool last_first = method == Baseline::GradualLastFirst;
            return train_target(pretrained, data, plain, [&](std::size_t epoch, const BlockNet&) { return gradual_multipliers(epoch, blocks, spec.max_epochs, last_first); }, seed);
        }
        case Baseline::L1SP:
        case Baseline::L2SP: {
            TrainSpec reg = spec;
            reg.regularizer = method == Baseline::L1SP ? Regularizer::L1SP : Regularizer::L2SP;
            return finetune(pretrained, cfg, data, reg, seed);
        }
        case Baseline::AutoRGN: {
            const Dataset& train = *data.train;
            return train_target(pretrained, data, plain, [&](std::size_t, const BlockNet& net) { return autorgn_multipliers(net, train); }, seed);
        }
        }
        throw UsageError("unknown baseline");
    }

    ToyProblem ToyProblem::prepare(const ToyConfig& config, std::uint64_t pretrain_seed)
    {
        return prepare(config, SyntheticTask::generate(config.task), pretrain_seed);
    }

    ToyProblem ToyProblem::prepare(const ToyConfig& config, SyntheticTask task, std::uint64_t pretrain_seed)
    {
        config.finetune.validate();
        ToyProblem p;
        p.config = config;
        p.task = std::move(task);
        p.source_net = BlockNet(p.task.source.x.rows(), config.hidden, config.feature_blocks, p.task.source.num_classes);
        pretrain(p.source_net, p.task.source, config.pretrain, pretrain_seed);
        return p;
    }

    ToyBackend::ToyBackend(std::shared_ptr<const ToyProblem> problem, WeightFunction weights, const FitnessSpec& fitness, std::uint64_t data_seed)
        : _problem(std::move(problem)), _weights(weights)
    {
        if (fitness.num_folds < 1)
            throw ConfigError("fitness.num_folds must be at least 1");
        if (!(fitness.data_fraction > 0.0) || fitness.data_fraction > 1.0)
            throw ConfigError("fitness.data_fraction must lie in (0,1]");

        const Dataset& train = _problem->task.train;
        Rng rng(derive_seed(data_seed, 0xDA7A));
        std::vector<std::size_t> keep(train.size());
        std::iota(keep.begin(), keep.end(), std::size_t{0});
        if (fitness.data_fraction < 1.0)
            keep = stratified_subset(train.y, fitness.data_fraction, rng);

        std::vector<int> labels;
        for (std::size_t i : keep)
            labels.push_back(train.y[i]);
        const FoldPlan plan = stratified_folds(labels, fitness.num_folds, rng);
        for (const auto& fold : plan.folds) {
            std::vector<std::size_t> rows;
            for (std::size_t i : fold)
                rows.push_back(keep[i]);
            _folds.push_back(train.subset(rows));
        }
    }

    std::vector<SeedOutcome> ToyBackend::operator()(const Genome& g, const EvalContext& ctx) const
    {
        if (g.size() != _problem->num_blocks() + 1)
            throw InvalidModelError("toy backend: genome has " + std::to_string(g.size()) + " genes, expected " + std::to_string(_problem->num_blocks() + 1));
        const FineTuneConfig cfg = decode(g, _weights, _problem->config.finetune.base_lr);
        const TargetData data{&_folds[ctx.fold_index % _folds.size()], &_problem->task.val, nullptr};
        std::vector<SeedOutcome> out;
        for (std::uint64_t seed : ctx.seeds) {
            const TrainResult r = finetune(_problem->source_net, cfg, data, _problem->config.finetune, seed);
            out.push_back({r.val_accuracy, r.val_loss});
        }
        return out;
    }

    Evaluator biotune_evaluator(std::shared_ptr<const ToyProblem> problem, WeightFunction weights, const FitnessSpec& fitness, std::uint64_t data_seed)
    {
        return make_evaluator(ToyBackend(std::move(problem), weights, fitness, data_seed), fitness.variant);
    }

} // namespace biotune::toy
