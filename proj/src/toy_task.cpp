#include <biotune/toy/task.hpp>

#include <Eigen/QR>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

namespace biotune::toy {

    Dataset Dataset::subset(std::span<const std::size_t> indices) const
    {
        Dataset out;
        out.num_classes = num_classes;
        out.x.resize(x.rows(), static_cast<Eigen::Index>(indices.size()));
        out.y.reserve(indices.size());
        for (std::size_t i = 0; i < indices.size(); ++i) {
            out.x.col(static_cast<Eigen::Index>(i)) = x.col(static_cast<Eigen::Index>(indices[i]));
            out.y.push_back(y[indices[i]]);
        }
        return out;
    }

    std::string_view to_string(ShiftKind k)
    {
        switch (k) {
        case ShiftKind::Rotation:
            return "rotation";
        case ShiftKind::ClassRemap:
            return "class-remap";
        case ShiftKind::FeatureScramble:
            return "feature-scramble";
        }
        return "rotation";
    }

    ShiftKind shift_kind_from_string(std::string_view name)
    {
        for (auto k : {ShiftKind::Rotation, ShiftKind::ClassRemap, ShiftKind::FeatureScramble})
            if (name == to_string(k))
                return k;
        throw UsageError("unknown shift '" + std::string(name) + "' (expected rotation, class-remap or feature-scramble)");
    }

    void TaskSpec::validate() const
    {
        if (feature_dim < 1)
            throw ConfigError("task.feature_dim must be positive");
        if (source_classes < 2 || target_classes < 2)
            throw ConfigError("task needs at least two source and two target classes");
        if (2 * target_classes > source_classes)
            throw ConfigError("task.target_classes must be at most half of task.source_classes");
        if (source_per_class == 0 || train_per_class == 0 || val_per_class == 0 || test_per_class == 0)
            throw ConfigError("task split sizes must be positive");
        if (!(separation > 0.0) || !(noise > 0.0))
            throw ConfigError("task.separation and task.noise must be positive");
        if (novelty < 0.0 || novelty > 1.0 || magnitude < 0.0 || magnitude > 1.0)
            throw ConfigError("task.novelty and task.magnitude must lie in [0,1]");
    }

    namespace {
        Vector random_unit(Eigen::Index d, Rng& rng)
        {
            Vector v(d);
            for (Eigen::Index i = 0; i < d; ++i)
                v(i) = rng.normal();
            return v.normalized();
        }

        Dataset sample(const std::vector<Vector>& means, std::size_t per_class, double noise, Rng& rng)
        {
            const Eigen::Index d = means.front().size();
            Dataset out;
            out.num_classes = static_cast<int>(means.size());
            out.x.resize(d, static_cast<Eigen::Index>(per_class * means.size()));
            Eigen::Index col = 0;
            for (std::size_t c = 0; c < means.size(); ++c)
                for (std::size_t i = 0; i < per_class; ++i, ++col) {
                    for (Eigen::Index k = 0; k < d; ++k)
                        out.x(k, col) = means[c](k) + noise * rng.normal();
                    out.y.push_back(static_cast<int>(c));
                }
            return out;
        }

        Matrix shift_transform(const TaskSpec& spec, Rng& rng)
        {
            const Eigen::Index d = spec.feature_dim;
            switch (spec.shift) {
            case ShiftKind::Rotation: {
                Matrix gauss(d, d);
                for (Eigen::Index i = 0; i < gauss.size(); ++i)
                    gauss(i) = rng.normal();
                const Matrix basis = Eigen::HouseholderQR<Matrix>(gauss).householderQ();
                const double theta = spec.magnitude * std::numbers::pi / 2.0;
                Matrix planes = Matrix::Identity(d, d);
                for (Eigen::Index i = 0; i + 1 < d; i += 2) {
                    planes(i, i) = std::cos(theta);
                    planes(i, i + 1) = -std::sin(theta);
                    planes(i + 1, i) = std::sin(theta);
                    planes(i + 1, i + 1) = std::cos(theta);
                }
                return basis * planes * basis.transpose();
            }
            case ShiftKind::FeatureScramble: {
                std::vector<Eigen::Index> coords(static_cast<std::size_t>(d));
                for (Eigen::Index i = 0; i < d; ++i)
                    coords[static_cast<std::size_t>(i)] = i;
                shuffle(coords, rng);
                const auto k = static_cast<std::size_t>(std::lround(spec.magnitude * static_cast<double>(d)));
                std::vector<Eigen::Index> moved(coords.begin(), coords.begin() + static_cast<std::ptrdiff_t>(k));
                std::vector<Eigen::Index> target = moved;
                shuffle(target, rng);
                Matrix perm = Matrix::Identity(d, d);
                for (std::size_t i = 0; i < k; ++i)
                    perm.row(moved[i]) = Matrix::Identity(d, d).row(target[i]);
                return perm;
            }
            case ShiftKind::ClassRemap:
                break;
            }
            return Matrix::Identity(d, d);
        }
    } // namespace

    SyntheticTask SyntheticTask::generate(const TaskSpec& spec)
    {
        spec.validate();
        Rng rng(derive_seed(spec.seed, 0x7A5C));
        const Eigen::Index d = spec.feature_dim;

        std::vector<Vector> dirs;
        for (int c = 0; c < spec.source_classes; ++c)
            dirs.push_back(random_unit(d, rng));

        std::vector<Vector> source_means;
        for (const auto& u : dirs)
            source_means.push_back(spec.separation * u);

        const double novelty = spec.shift == ShiftKind::ClassRemap ? spec.magnitude : spec.novelty;
        std::vector<Vector> target_means;
        for (int j = 0; j < spec.target_classes; ++j) {
            const Vector inherited = (dirs[static_cast<std::size_t>(2 * j)] - dirs[static_cast<std::size_t>(2 * j + 1)]).normalized();
            const Vector fresh = random_unit(d, rng);
            target_means.push_back(spec.separation * (std::sqrt(1.0 - novelty * novelty) * inherited + novelty * fresh).normalized());
        }

        const Matrix shift = shift_transform(spec, rng);

        SyntheticTask task;
        task.spec = spec;
        for (int c = 0; c < spec.source_classes; ++c)
            task.source_class_ids.push_back(c);
        for (int j = 0; j < spec.target_classes; ++j)
            task.target_class_ids.push_back(spec.source_classes + j);

        task.source = sample(source_means, spec.source_per_class, spec.noise, rng);
        task.train = sample(target_means, spec.train_per_class, spec.noise, rng);
        task.val = sample(target_means, spec.val_per_class, spec.noise, rng);
        task.test = sample(target_means, spec.test_per_class, spec.noise, rng);
        for (Dataset* ds : {&task.train, &task.val, &task.test})
            ds->x = shift * ds->x;
        return task;
    }

    namespace {
        void write_csv(const std::filesystem::path& file, const Dataset& ds, const std::vector<int>& class_ids)
        {
            std::ofstream out(file);
            if (!out)
                throw ConfigError("cannot write " + file.string());
            for (Eigen::Index k = 0; k < ds.x.rows(); ++k)
                out << "feature_" << k << ',';
            out << "label\n";
            char buf[64];
            for (Eigen::Index i = 0; i < ds.x.cols(); ++i) {
                for (Eigen::Index k = 0; k < ds.x.rows(); ++k) {
                    const auto r = std::to_chars(buf, buf + sizeof buf, ds.x(k, i));
                    out.write(buf, r.ptr - buf);
                    out << ',';
                }
                out << class_ids[static_cast<std::size_t>(ds.y[static_cast<std::size_t>(i)])] << '\n';
            }
        }

        Dataset read_csv(const std::filesystem::path& file, Eigen::Index d, const std::vector<int>& class_ids)
        {
            std::ifstream in(file);
            if (!in)
                throw ConfigError("cannot read " + file.string());
            std::string line;
            std::getline(in, line);
            std::vector<std::vector<double>> rows;
            std::vector<int> labels;
            std::size_t line_no = 1;
            while (std::getline(in, line)) {
                ++line_no;
                if (line.empty())
                    continue;
                std::vector<double> row;
                const char* p = line.data();
                const char* end = line.data() + line.size();
                while (true) {
                    const char* comma = std::find(p, end, ',');
                    if (comma == end) {
                        int label = 0;
                        const auto r = std::from_chars(p, end, label);
                        if (r.ec != std::errc{})
                            throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": bad label");
                        const auto it = std::find(class_ids.begin(), class_ids.end(), label);
                        if (it == class_ids.end())
                            throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": label " + std::to_string(label) + " is not in the class list");
                        labels.push_back(static_cast<int>(it - class_ids.begin()));
                        break;
                    }
                    double v = 0.0;
                    const auto r = std::from_chars(p, comma, v);
                    if (r.ec != std::errc{})
                        throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": bad number");
                    row.push_back(v);
                    p = comma + 1;
                }
                if (static_cast<Eigen::Index>(row.size()) != d)
                    throw ConfigError(file.string() + ":" + std::to_string(line_no) + ": expected " + std::to_string(d) + " features");
                rows.push_back(std::move(row));
            }
            Dataset ds;
            ds.num_classes = static_cast<int>(class_ids.size());
            ds.x.resize(d, static_cast<Eigen::Index>(rows.size()));
            for (std::size_t i = 0; i < rows.size(); ++i)
                for (Eigen::Index k = 0; k < d; ++k)
                    ds.x(k, static_cast<Eigen::Index>(i)) = rows[i][static_cast<std::size_t>(k)];
            ds.y = std::move(labels);
            return ds;
        }
    } // namespace

    void SyntheticTask::save(const std::filesystem::path& dir) const
    {
        std::filesystem::create_directories(dir);
        write_csv(dir / "source.csv", source, source_class_ids);
        write_csv(dir / "train.csv", train, target_class_ids);
        write_csv(dir / "val.csv", val, target_class_ids);
        write_csv(dir / "test.csv", test, target_class_ids);

        nlohmann::ordered_json m;
        m["feature_dim"] = spec.feature_dim;
        m["source_classes"] = source_class_ids;
        m["target_classes"] = target_class_ids;
        m["shift"] = {{"kind", std::string(to_string(spec.shift))}, {"magnitude", spec.magnitude}};
        m["splits"] = {{"source", source.size()}, {"train", train.size()}, {"val", val.size()}, {"test", test.size()}};
        m["generator"] = {{"seed", spec.seed}, {"separation", spec.separation}, {"noise", spec.noise}, {"novelty", spec.novelty}};
        std::ofstream(dir / "task.json") << m.dump(2) << '\n';
    }

    SyntheticTask SyntheticTask::load(const std::filesystem::path& dir)
    {
        std::ifstream in(dir / "task.json");
        if (!in)
            throw ConfigError("cannot read " + (dir / "task.json").string());
        nlohmann::json m;
        try {
            m = nlohmann::json::parse(in);
            SyntheticTask task;
            task.spec.feature_dim = m.at("feature_dim").get<Eigen::Index>();
            task.source_class_ids = m.at("source_classes").get<std::vector<int>>();
            task.target_class_ids = m.at("target_classes").get<std::vector<int>>();
            task.spec.source_classes = static_cast<int>(task.source_class_ids.size());
            task.spec.target_classes = static_cast<int>(task.target_class_ids.size());
            task.spec.shift = shift_kind_from_string(m.at("shift").at("kind").get<std::string>());
            task.spec.magnitude = m.at("shift").at("magnitude").get<double>();
            if (m.contains("generator")) {
                const auto& g = m["generator"];
                task.spec.seed = g.value("seed", task.spec.seed);
                task.spec.separation = g.value("separation", task.spec.separation);
                task.spec.noise = g.value("noise", task.spec.noise);
                task.spec.novelty = g.value("novelty", task.spec.novelty);
            }
            const Eigen::Index d = task.spec.feature_dim;
            task.source = read_csv(dir / "source.csv", d, task.source_class_ids);
            task.train = read_csv(dir / "train.csv", d, task.target_class_ids);
            task.val = read_csv(dir / "val.csv", d, task.target_class_ids);
            task.test = read_csv(dir / "test.csv", d, task.target_class_ids);
            return task;
        }
        catch (const nlohmann::json::exception& e) {
            throw ConfigError((dir / "task.json").string() + ": " + e.what());
        }
    }

} // namespace biotune::toy
