#ifndef BIOTUNE_TOY_TRAINER_HPP
#define BIOTUNE_TOY_TRAINER_HPP

#include <cstdint>
#include <functional>
#include <memory>
#include <string_view>

#include <biotune/fitness.hpp>
#include <biotune/genome.hpp>
#include <biotune/toy/net.hpp>
#include <biotune/toy/task.hpp>

namespace biotune::toy {

    /// Plain mini-batch gradient descent with early stopping.
    struct TrainSpec {
        double base_lr = 0.03;
        std::size_t max_epochs = 30;
        std::size_t patience = 3;
        std::size_t batch_size = 32;
        Regularizer regularizer = Regularizer::None;
        double alpha = 1e-3;

        void validate() const;
    };

    struct TrainResult {
        double val_accuracy = 0.0;
        double val_loss = 0.0;
        double test_accuracy = 0.0;
        std::size_t epochs_run = 0;
        std::size_t best_epoch = 0;
        /// Weights at the best validation epoch.
        Vector params;
    };

    /// Trains every block of net on the source set; early stopping watches the
    /// training loss. Initializes net from seed and returns the trained weights.
    Vector pretrain(BlockNet& net, const Dataset& source, const TrainSpec& spec, std::uint64_t seed);

    /// Per-epoch learning-rate multipliers, one per block; 0 freezes the block
    /// for that epoch. Called with the current weights before each epoch.
    using LrSchedule = std::function<Vector(std::size_t epoch, const BlockNet& net)>;

    struct TargetData {
        const Dataset* train = nullptr;
        const Dataset* val = nullptr;
        /// Optional; test_accuracy is 0 without it.
        const Dataset* test = nullptr;
    };

    /// Fine-tunes a copy of the pretrained network on the target task with a
    /// fresh head. Early stopping on validation accuracy; the best epoch's
    /// weights are kept. An all-zero schedule at epoch 0 trains nothing and
    /// reports the untrained-head metrics.
    TrainResult train_target(const BlockNet& pretrained, const TargetData& data, const TrainSpec& spec, const LrSchedule& schedule, std::uint64_t seed);

    /// Constant schedule cfg.eta, learning rates cfg.eta * spec.base_lr.
    TrainResult finetune(const BlockNet& pretrained, const FineTuneConfig& cfg, const TargetData& data, const TrainSpec& spec, std::uint64_t seed);

    enum class Baseline {
        FT,
        LP,
        GradualLastFirst,
        GradualFirstLast,
        L1SP,
        L2SP,
        AutoRGN
    };

    std::string_view to_string(Baseline b);
    Baseline baseline_from_string(std::string_view name);
    inline constexpr Baseline all_baselines[] = {Baseline::FT, Baseline::LP, Baseline::GradualLastFirst, Baseline::GradualFirstLast, Baseline::L1SP, Baseline::L2SP, Baseline::AutoRGN};

    /// Blocks trainable at the given epoch under gradual unfreezing: one more
    /// block every ceil(max_epochs / num_blocks) epochs, from the head down
    /// (last_first) or from the input up.
    Vector gradual_multipliers(std::size_t epoch, Eigen::Index num_blocks, std::size_t max_epochs, bool last_first);

    /// Per-block ||grad|| / ||params|| on the given data, divided by its mean.
    Vector autorgn_multipliers(const BlockNet& net, const Dataset& data);

    TrainResult run_baseline(Baseline method, const BlockNet& pretrained, const TargetData& data, const TrainSpec& spec, std::uint64_t seed);

    /// Everything needed to build the toy problem from scratch.
    struct ToyConfig {
        TaskSpec task;
        Eigen::Index hidden = 16;
        Eigen::Index feature_blocks = 5;
        TrainSpec pretrain{0.05, 200, 5, 32, Regularizer::None, 0.0};
        TrainSpec finetune;
    };

    struct ToyProblem {
        ToyConfig config;
        SyntheticTask task;
        /// Source-pretrained network (source head included).
        BlockNet source_net;

        static ToyProblem prepare(const ToyConfig& config, std::uint64_t pretrain_seed);
        /// Wraps an already loaded task.
        static ToyProblem prepare(const ToyConfig& config, SyntheticTask task, std::uint64_t pretrain_seed);

        Eigen::Index num_blocks() const { return source_net.num_blocks(); }
        TargetData full_data() const { return {&task.train, &task.val, &task.test}; }
    };

    /// Fitness backend over the toy problem: decodes the genome, fine-tunes
    /// once per context seed on fold ctx.fold_index of the (optionally
    /// subsampled) training set and reports validation metrics. Immutable
    /// after construction, safe to call concurrently.
    class ToyBackend {
    public:
        ToyBackend(std::shared_ptr<const ToyProblem> problem, WeightFunction weights, const FitnessSpec& fitness, std::uint64_t data_seed);

        std::vector<SeedOutcome> operator()(const Genome& g, const EvalContext& ctx) const;

        const Dataset& fold(std::size_t f) const { return _folds.at(f); }
        std::size_t num_folds() const { return _folds.size(); }

    private:
        std::shared_ptr<const ToyProblem> _problem;
        WeightFunction _weights;
        std::vector<Dataset> _folds;
    };

    Evaluator biotune_evaluator(std::shared_ptr<const ToyProblem> problem, WeightFunction weights, const FitnessSpec& fitness, std::uint64_t data_seed);

} // namespace biotune::toy

#endif
