#include <biotune/fitness.hpp>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include <spdlog/spdlog.h>

namespace biotune {

    std::string_view to_string(FitnessVariant v)
    {
        switch (v) {
        case FitnessVariant::Acc:
            return "acc";
        case FitnessVariant::AccStd:
            return "accstd";
        case FitnessVariant::Loss:
            return "loss";
        }
        return "acc";
    }

    FitnessVariant fitness_variant_from_string(std::string_view name)
    {
        for (auto v : {FitnessVariant::Acc, FitnessVariant::AccStd, FitnessVariant::Loss})
            if (name == to_string(v))
                return v;
        throw UsageError("unknown fitness variant '" + std::string(name) + "' (expected acc, accstd or loss)");
    }

    SearchSchedule SearchSchedule::make(const FitnessSpec& spec, std::uint64_t master_seed)
    {
        SearchSchedule s;
        s.num_folds = std::max<std::size_t>(1, spec.num_folds);
        s.seeds.clear();
        for (std::size_t i = 0; i < std::max<std::size_t>(1, spec.seeds_per_eval); ++i)
            s.seeds.push_back(derive_seed(master_seed, 0x5EED, i));
        return s;
    }

    double aggregate_fitness(FitnessVariant variant, std::span<const SeedOutcome> outcomes)
    {
        if (outcomes.empty())
            throw EvaluationError("fitness aggregation: no per-seed outcomes");
        const double n = static_cast<double>(outcomes.size());
        double acc_sum = 0.0;
        double loss_sum = 0.0;
        for (const auto& o : outcomes) {
            if (!std::isfinite(o.accuracy) || !std::isfinite(o.loss))
                throw EvaluationError("fitness aggregation: non-finite outcome");
            acc_sum += o.accuracy;
            loss_sum += o.loss;
        }
        const double acc_mean = acc_sum / n;

        switch (variant) {
        case FitnessVariant::Acc:
            return std::clamp(1.0 - acc_mean, 0.0, 1.0);
        case FitnessVariant::AccStd: {
            double ss = 0.0;
            for (const auto& o : outcomes)
                ss += (o.accuracy - acc_mean) * (o.accuracy - acc_mean);
            const double sigma = std::sqrt(ss / n);
            return std::clamp(1.0 - acc_mean + sigma, 0.0, 1.0);
        }
        case FitnessVariant::Loss:
            return std::clamp(loss_sum / n, 0.0, 1.0);
        }
        return 1.0;
    }

    double evaluate(const Genome& genome, const EvalContext& ctx, const Backend& backend, FitnessVariant variant)
    {
        const auto outcomes = backend(genome, ctx);
        if (outcomes.size() != ctx.seeds.size())
            throw EvaluationError("backend returned " + std::to_string(outcomes.size()) + " outcomes for " + std::to_string(ctx.seeds.size()) + " seeds");
        return aggregate_fitness(variant, outcomes);
    }

    Evaluator make_evaluator(Backend backend, FitnessVariant variant)
    {
        return [backend = std::move(backend), variant](const Genome& g, const EvalContext& ctx) {
            return evaluate(g, ctx, backend, variant);
        };
    }

    namespace {
        std::map<int, std::vector<std::size_t>> group_by_class(std::span<const int> labels)
        {
            std::map<int, std::vector<std::size_t>> by_class;
            for (std::size_t i = 0; i < labels.size(); ++i)
                by_class[labels[i]].push_back(i);
            return by_class;
        }
    } // namespace

    FoldPlan stratified_folds(std::span<const int> labels, std::size_t num_folds, Rng& rng)
    {
        if (num_folds == 0)
            throw UsageError("stratified_folds: need at least one fold");

        auto by_class = group_by_class(labels);
        FoldPlan plan;
        plan.folds.resize(num_folds);
        plan.class_counts.assign(num_folds, std::vector<std::size_t>(by_class.empty() ? 0 : static_cast<std::size_t>(by_class.rbegin()->first + 1), 0));

        // Dealing continues where the previous class stopped, so fold sizes
        // also stay within one of each other.
        std::size_t next = 0;
        for (auto& [cls, idx] : by_class) {
            if (idx.size() < num_folds) {
                plan.degraded = true;
                spdlog::warn("stratified_folds: class {} has {} samples for {} folds", cls, idx.size(), num_folds);
            }
            shuffle(idx, rng);
            for (std::size_t i : idx) {
                plan.folds[next].push_back(i);
                if (cls >= 0)
                    ++plan.class_counts[next][static_cast<std::size_t>(cls)];
                next = (next + 1) % num_folds;
            }
        }
        for (auto& f : plan.folds)
            std::sort(f.begin(), f.end());
        return plan;
    }

    std::vector<std::size_t> stratified_subset(std::span<const int> labels, double fraction, Rng& rng)
    {
        if (!(fraction > 0.0) || fraction > 1.0)
            throw UsageError("stratified_subset: fraction must lie in (0,1]");
        auto by_class = group_by_class(labels);
        std::vector<std::size_t> out;
        for (auto& [cls, idx] : by_class) {
            shuffle(idx, rng);
            const auto keep = std::clamp<std::size_t>(static_cast<std::size_t>(std::lround(fraction * static_cast<double>(idx.size()))), 1, idx.size());
            out.insert(out.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(keep));
        }
        std::sort(out.begin(), out.end());
        return out;
    }

} // namespace biotune
