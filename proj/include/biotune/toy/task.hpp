#ifndef BIOTUNE_TOY_TASK_HPP
#define BIOTUNE_TOY_TASK_HPP

#include <cstdint>
#include <filesystem>
#include <span>
#include <string_view>
#include <vector>

#include <biotune/toy/net.hpp>

namespace biotune::toy {

    /// Samples as columns, labels as indices into the owning class list.
    struct Dataset {
        Matrix x;
        std::vector<int> y;
        int num_classes = 0;

        std::size_t size() const { return y.size(); }
        Dataset subset(std::span<const std::size_t> indices) const;
    };

    enum class ShiftKind {
        Rotation,
        ClassRemap,
        FeatureScramble
    };

    std::string_view to_string(ShiftKind k);
    ShiftKind shift_kind_from_string(std::string_view name);

    /// Gaussian-mixture source task and a shifted target task with new classes.
    ///
    /// Source class c has mean separation * u_c for a random unit vector u_c.
    /// Target class j blends the direction u_{2j} - u_{2j+1} (so it lives in
    /// the span the source features learned) with a fresh random direction,
    /// weighted by novelty. The shift then acts on target inputs:
    ///   rotation: a fixed random orthogonal rotation by magnitude * 90 degrees
    ///     in every coordinate plane pair of a random basis;
    ///   feature-scramble: round(magnitude * d) coordinates permuted;
    ///   class-remap: no input transform, novelty replaced by magnitude.
    struct TaskSpec {
        Eigen::Index feature_dim = 20;
        int source_classes = 8;
        int target_classes = 4;
        std::size_t source_per_class = 150;
        std::size_t train_per_class = 200;
        std::size_t val_per_class = 40;
        std::size_t test_per_class = 100;
        double separation = 3.0;
        double noise = 1.0;
        double novelty = 0.5;
        ShiftKind shift = ShiftKind::Rotation;
        double magnitude = 0.5;
        std::uint64_t seed = 7;

        void validate() const;
    };

    struct SyntheticTask {
        TaskSpec spec;
        /// Global class ids: source 0..C_s-1, target C_s..C_s+C_t-1.
        std::vector<int> source_class_ids;
        std::vector<int> target_class_ids;
        Dataset source;
        Dataset train;
        Dataset val;
        Dataset test;

        static SyntheticTask generate(const TaskSpec& spec);

        /// Writes source.csv, train.csv, val.csv, test.csv and task.json.
        void save(const std::filesystem::path& dir) const;
        static SyntheticTask load(const std::filesystem::path& dir);
    };

} // namespace biotune::toy

#endif
