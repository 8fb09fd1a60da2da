#include <biotune/app/commands.hpp>

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include <fmt/format.h>
#include <spdlog/spdlog.h>

#include <biotune/parallel.hpp>

namespace biotune::app {

    using nlohmann::ordered_json;
    namespace fs = std::filesystem;

    namespace {
        constexpr std::uint64_t kRetrainStream = 0x7E57;
        constexpr std::uint64_t kBaselineStream = 0xBA5E;

        double seconds_since(std::chrono::steady_clock::time_point t0)
        {
            return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        }

        std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

        std::string num(double x) { return fmt::format("{}", x); }

        std::string opt_num(const std::optional<double>& x) { return x ? num(*x) : ""; }

        ordered_json opt_json(const std::optional<double>& x) { return x ? ordered_json(*x) : ordered_json(nullptr); }

        class CsvFile {
        public:
            CsvFile(const fs::path& path, const std::vector<std::string>& header) : _out(path), _path(path)
            {
                if (!_out)
                    throw ConfigError("cannot write '" + path.string() + "'");
                row(header);
            }

            void row(const std::vector<std::string>& cells)
            {
                for (std::size_t i = 0; i < cells.size(); ++i)
                    _out << (i ? "," : "") << cells[i];
                _out << '\n';
            }

            ~CsvFile()
            {
                _out.flush();
                if (!_out)
                    spdlog::error("failed writing {}", _path.string());
            }

        private:
            std::ofstream _out;
            fs::path _path;
        };

        void write_json(const fs::path& path, const ordered_json& j)
        {
            std::ofstream out(path);
            if (!out)
                throw ConfigError("cannot write '" + path.string() + "'");
            out << j.dump(2) << '\n';
        }

        void prepare_out_dir(const fs::path& dir)
        {
            std::error_code ec;
            fs::create_directories(dir, ec);
            if (ec || !fs::is_directory(dir))
                throw ConfigError("cannot create output directory '" + dir.string() + "'");
        }

        ordered_json report_skeleton(const char* command, const RunConfig& config)
        {
            ordered_json j;
            j["schema"] = "biotune-report";
            j["schema_version"] = 1;
            j["command"] = command;
            j["status"] = "completed";
            j["config"] = to_json(config);
            return j;
        }

        ordered_json history_json(const std::vector<GenerationStats>& h)
        {
            ordered_json a = ordered_json::array();
            for (const auto& s : h)
                a.push_back({{"generation", s.generation}, {"cum_evaluations", s.evaluations}, {"best_fitness", s.best}, {"mean_fitness", s.mean}});
            return a;
        }

        void write_history(const fs::path& path, const std::vector<GenerationStats>& h)
        {
            CsvFile csv(path, {"generation", "cum_evaluations", "best_fitness", "mean_fitness"});
            for (const auto& s : h)
                csv.row({std::to_string(s.generation), std::to_string(s.evaluations), num(s.best), num(s.mean)});
        }

        std::vector<std::string> gene_names(Eigen::Index num_blocks)
        {
            std::vector<std::string> out;
            for (Eigen::Index b = 0; b < num_blocks; ++b)
                out.push_back("nu_" + std::to_string(b));
            out.push_back("eps_f");
            return out;
        }

        ordered_json search_json(const Problem& problem, const RunConfig& config, const SearchOutcome& o)
        {
            const auto& r = o.result;
            ordered_json j;
            j["num_blocks"] = problem.num_blocks;
            j["best_fitness"] = r.best_fitness;
            j["best_genome"] = to_std(r.best_genome);
            const auto cfg = decode(r.best_genome, config.weight_function, 1.0);
            const Mask mask = selection_mask(r.best_genome);
            j["best_config"] = {{"weight_function", to_string(config.weight_function)},
                {"mask", std::vector<int>(mask.data(), mask.data() + mask.size())},
                {"eta", to_std(cfg.eta)},
                {"trainable_fraction", o.trainable_fraction}};
            j["evaluations"] = r.evaluations;
            j["generations"] = r.history.empty() ? 0 : r.history.size() - 1;
            j["history"] = history_json(r.history);
            ordered_json ind = ordered_json::array();
            for (const auto& e : r.evaluated)
                ind.push_back({{"generation", e.generation}, {"origin", e.origin}, {"failed", e.failed}, {"fitness", e.fitness}, {"genome", to_std(e.genome)}});
            j["individuals"] = ind;
            ordered_json top = ordered_json::array();
            for (std::size_t k = 0; k < o.top.size(); ++k)
                top.push_back({{"rank", k + 1}, {"fitness", o.top[k].genome.fitness}, {"genome", to_std(o.top[k].genome.genome)},
                    {"val_accuracy", opt_json(o.top[k].val_accuracy)}, {"test_accuracy", opt_json(o.top[k].test_accuracy)}});
            j["final"] = {{"retrained", problem.can_retrain()}, {"top_k", top}, {"best_test_accuracy", opt_json(o.best_test_accuracy)}};
            return j;
        }

        void write_search_files(const fs::path& out, const Problem& problem, const RunConfig& config, const SearchOutcome& o)
        {
            const auto& r = o.result;
            write_history(out / "history.csv", r.history);

            auto header = std::vector<std::string>{"index", "generation", "origin", "failed", "fitness"};
            for (auto& g : gene_names(problem.num_blocks))
                header.push_back(g);
            CsvFile ind(out / "individuals.csv", header);
            for (std::size_t i = 0; i < r.evaluated.size(); ++i) {
                const auto& e = r.evaluated[i];
                std::vector<std::string> row{std::to_string(i), std::to_string(e.generation), e.origin, e.failed ? "1" : "0", num(e.fitness)};
                for (Eigen::Index k = 0; k < e.genome.size(); ++k)
                    row.push_back(num(e.genome(k)));
                ind.row(row);
            }

            std::vector<std::string> hm_header{"block"};
            for (std::size_t i = 0; i < r.evaluated.size(); ++i)
                hm_header.push_back("ind_" + std::to_string(i));
            CsvFile hm(out / "config_heatmap.csv", hm_header);
            std::vector<Vector> etas;
            for (const auto& e : r.evaluated)
                etas.push_back(decode(e.genome, config.weight_function, 1.0).eta);
            for (Eigen::Index b = 0; b < problem.num_blocks; ++b) {
                std::vector<std::string> row{std::to_string(b)};
                for (const auto& eta : etas)
                    row.push_back(num(eta(b)));
                hm.row(row);
            }
        }

        ordered_json wall_clock_json(const SearchOutcome& o)
        {
            return {{"total_s", o.wall_clock_s}, {"per_generation_s", o.result.wall_clock_s}};
        }

        RunConfig with_validated(RunConfig c)
        {
            validate(c);
            return c;
        }
    } // namespace

    Problem Problem::build(const RunConfig& config)
    {
        validate(config);
        Problem p;
        p.config = config;
        switch (config.backend) {
        case BackendKind::Toy: {
            auto task = config.task_path ? toy::SyntheticTask::load(*config.task_path) : toy::SyntheticTask::generate(config.toy.task);
            p.toy = std::make_shared<const toy::ToyProblem>(toy::ToyProblem::prepare(config.toy, std::move(task), config.pretrain_seed));
            p.num_blocks = p.toy->num_blocks();
            break;
        }
        case BackendKind::Landscape:
            p.landscape.emplace(config.landscape, config.landscape_blocks);
            p.num_blocks = config.landscape_blocks;
            break;
        case BackendKind::External:
            p.num_blocks = config.landscape_blocks;
            break;
        }
        return p;
    }

    Evaluator Problem::evaluator(const FitnessSpec& fitness, WeightFunction weights, std::uint64_t data_seed) const
    {
        if (toy)
            return toy::biotune_evaluator(toy, weights, fitness, data_seed);
        if (landscape)
            return landscape->evaluator();
        auto backend = std::make_shared<const ext::ExternalBackend>(config.external, weights, fitness.data_fraction);
        return ext::external_evaluator(backend, fitness.variant);
    }

    std::vector<std::size_t> Problem::block_params() const
    {
        if (toy) {
            auto counts = toy->source_net.block_param_counts();
            const auto& w = toy->source_net.widths();
            const auto classes = static_cast<std::size_t>(toy->task.target_class_ids.size());
            counts.back() = static_cast<std::size_t>(w[w.size() - 2]) * classes + classes;
            return counts;
        }
        if (!config.external_block_params.empty() && !landscape)
            return config.external_block_params;
        return std::vector<std::size_t>(static_cast<std::size_t>(num_blocks), 1);
    }

    toy::TrainResult Problem::retrain(const Genome& g, WeightFunction weights, std::uint64_t seed) const
    {
        if (!toy)
            throw UsageError("retraining needs the toy backend");
        const auto cfg = decode(g, weights, config.toy.finetune.base_lr);
        return toy::finetune(toy->source_net, cfg, toy->full_data(), config.toy.finetune, seed);
    }

    double trainable_fraction(const Genome& g, const std::vector<std::size_t>& block_params)
    {
        const Mask mask = selection_mask(g);
        double on = 0.0, total = 0.0;
        for (Eigen::Index b = 0; b < mask.size(); ++b) {
            const auto n = static_cast<double>(block_params.at(static_cast<std::size_t>(b)));
            total += n;
            on += mask(b) ? n : 0.0;
        }
        return total > 0.0 ? on / total : 0.0;
    }

    SearchOutcome search(const Problem& problem, const RunConfig& config, std::size_t workers, const std::function<void(const GenerationStats&)>& on_generation)
    {
        const auto t0 = std::chrono::steady_clock::now();
        const auto evaluator = problem.evaluator(config.fitness, config.weight_function, config.seed);
        const auto schedule = SearchSchedule::make(config.fitness, config.seed);
        RunOptions options;
        options.workers = workers;
        options.on_generation = on_generation;

        SearchOutcome o;
        o.result = run(config.evolution, problem.num_blocks, evaluator, schedule, config.seed, options);
        o.trainable_fraction = trainable_fraction(o.result.best_genome, problem.block_params());

        for (auto& e : top_k(o.result, config.top_k))
            o.top.push_back({std::move(e), std::nullopt, std::nullopt});
        if (problem.can_retrain()) {
            const std::uint64_t seed = derive_seed(config.seed, kRetrainStream);
            parallel_for(o.top.size(), workers, [&](std::size_t k) {
                const auto r = problem.retrain(o.top[k].genome.genome, config.weight_function, seed);
                o.top[k].test_accuracy = r.test_accuracy;
                o.top[k].val_accuracy = r.val_accuracy;
            });
            for (const auto& t : o.top)
                if (t.test_accuracy && (!o.best_test_accuracy || *t.test_accuracy > *o.best_test_accuracy))
                    o.best_test_accuracy = t.test_accuracy;
        }
        o.wall_clock_s = seconds_since(t0);
        return o;
    }

    BaselinesOutcome baselines(const Problem& problem, const RunConfig& config, std::size_t workers)
    {
        if (!problem.toy)
            throw UsageError("the baselines command needs the toy backend");
        const std::size_t runs = config.baseline_runs;
        const toy::Baseline methods[] = {toy::Baseline::FT, toy::Baseline::LP, toy::Baseline::L1SP, toy::Baseline::L2SP,
            toy::Baseline::GradualLastFirst, toy::Baseline::GradualFirstLast, toy::Baseline::AutoRGN};
        constexpr std::size_t num_methods = std::size(methods);
        const auto run_seed = [&](std::size_t r) { return derive_seed(config.seed, kBaselineStream, r); };

        BaselinesOutcome out;
        // rows [0, num_methods) are the baselines, the last one BioTune
        std::vector<std::vector<double>> acc(num_methods + 1, std::vector<double>(runs));
        for (std::size_t r = 0; r < runs; ++r) {
            RunConfig c = config;
            c.seed = run_seed(r);
            out.searches.push_back(search(problem, c, workers));
            acc[num_methods][r] = *out.searches.back().best_test_accuracy;
        }
        parallel_for(num_methods * runs, workers, [&](std::size_t i) {
            const std::size_t m = i / runs, r = i % runs;
            acc[m][r] = toy::run_baseline(methods[m], problem.toy->source_net, problem.toy->full_data(), config.toy.finetune, run_seed(r)).test_accuracy;
        });

        for (std::size_t m = 0; m <= num_methods; ++m) {
            BaselineRow row;
            row.method = m < num_methods ? std::string(toy::to_string(methods[m])) : "BioTune";
            row.test_accuracy = acc[m];
            const double n = static_cast<double>(runs);
            row.mean = std::accumulate(acc[m].begin(), acc[m].end(), 0.0) / n;
            double ss = 0.0;
            for (double a : acc[m])
                ss += (a - row.mean) * (a - row.mean);
            row.std_error = runs > 1 ? std::sqrt(ss / (n - 1.0)) / std::sqrt(n) : 0.0;
            out.rows.push_back(std::move(row));
        }
        const double ft = out.rows.front().mean;
        for (auto& row : out.rows)
            row.relative_to_ft = ft > 0.0 ? (row.mean - ft) / ft : 0.0;
        return out;
    }

    std::vector<ConvergenceRun> compare(const Problem& problem, const RunConfig& config, std::size_t workers)
    {
        if (config.optimizers.size() < 2)
            throw UsageError("compare needs at least two optimizers");
        std::vector<std::optional<OptimizerKind>> kinds;
        for (const auto& name : config.optimizers) {
            if (name == "BioTune") {
                kinds.push_back(std::nullopt);
                continue;
            }
            try {
                kinds.push_back(optimizer_kind_from_string(name));
            }
            catch (const UsageError&) {
                throw UsageError("unknown optimizer '" + name + "' (expected BioTune, GA, DE-rand-1, DE-best-1, DE-rand-2, DE-best-2 or PSO)");
            }
        }
        const bool has_biotune = std::any_of(kinds.begin(), kinds.end(), [](const auto& k) { return !k; });
        if (config.match_budget && !has_biotune)
            throw ConfigError("compare.match_budget needs BioTune in compare.optimizers");

        const auto schedule = SearchSchedule::make(config.fitness, config.seed);
        const auto fresh_evaluator = [&] { return problem.evaluator(config.fitness, config.weight_function, config.seed); };

        std::optional<SearchResult> biotune_result;
        if (has_biotune) {
            RunOptions ro;
            ro.workers = workers;
            biotune_result = run(config.evolution, problem.num_blocks, fresh_evaluator(), schedule, config.seed, ro);
        }

        std::vector<ConvergenceRun> out;
        for (std::size_t i = 0; i < kinds.size(); ++i) {
            if (!kinds[i]) {
                out.push_back({"BioTune", *biotune_result});
                continue;
            }
            OptimizerSpec spec = config.optimizer;
            spec.kind = *kinds[i];
            if (config.match_budget) {
                spec.max_evaluations = biotune_result->evaluations;
                spec.max_generations = biotune_result->evaluations;
            }
            OptimizerOptions oo;
            oo.workers = workers;
            out.push_back({config.optimizers[i], run_optimizer(spec, problem.num_blocks, fresh_evaluator(), schedule, config.seed, oo)});
        }
        return out;
    }

    std::string_view to_string(SweepAxis a)
    {
        switch (a) {
        case SweepAxis::Population:
            return "population";
        case SweepAxis::Elites:
            return "elites";
        case SweepAxis::DataFraction:
            return "data_fraction";
        case SweepAxis::WeightFunction:
            return "weight_function";
        case SweepAxis::FitnessVariant:
            return "fitness_variant";
        }
        return "population";
    }

    SweepAxis sweep_axis_from_string(std::string_view name)
    {
        for (auto a : {SweepAxis::Population, SweepAxis::Elites, SweepAxis::DataFraction, SweepAxis::WeightFunction, SweepAxis::FitnessVariant})
            if (name == to_string(a))
                return a;
        throw UsageError("unknown sweep axis '" + std::string(name) + "' (expected population, elites, data_fraction, weight_function or fitness_variant)");
    }

    std::vector<SweepPoint> sweep(const Problem& problem, const RunConfig& config, SweepAxis axis, std::size_t workers)
    {
        const auto& s = config.sweep;
        const auto empty = [&](bool e) {
            if (e)
                throw UsageError("sweep axis '" + std::string(to_string(axis)) + "' has no values (set sweep." + std::string(to_string(axis)) + ")");
        };
        std::vector<RunConfig> grid;
        switch (axis) {
        case SweepAxis::Population:
        case SweepAxis::Elites: {
            empty(axis == SweepAxis::Population ? s.population.empty() : s.elites.empty());
            const auto pops = s.population.empty() ? std::vector<std::size_t>{config.evolution.pop_size} : s.population;
            const auto elites = s.elites.empty() ? std::vector<std::size_t>{config.evolution.elites} : s.elites;
            for (auto p : pops)
                for (auto e : elites) {
                    RunConfig c = config;
                    c.evolution.pop_size = p;
                    c.evolution.elites = e;
                    grid.push_back(c);
                }
            break;
        }
        case SweepAxis::DataFraction:
            empty(s.data_fraction.empty());
            for (double f : s.data_fraction) {
                RunConfig c = config;
                c.fitness.data_fraction = f;
                grid.push_back(c);
            }
            break;
        case SweepAxis::WeightFunction:
            empty(s.weight_function.empty());
            for (auto w : s.weight_function) {
                RunConfig c = config;
                c.weight_function = w;
                grid.push_back(c);
            }
            break;
        case SweepAxis::FitnessVariant:
            empty(s.fitness_variant.empty());
            for (auto v : s.fitness_variant) {
                RunConfig c = config;
                c.fitness.variant = v;
                grid.push_back(c);
            }
            break;
        }
        // reject bad grid points before spending any time
        for (const auto& c : grid)
            validate(c);

        std::vector<SweepPoint> out;
        for (const auto& c : grid) {
            spdlog::info("sweep point: pop {} elites {} data_fraction {} weights {} fitness {}", c.evolution.pop_size, c.evolution.elites, c.fitness.data_fraction,
                to_string(c.weight_function), to_string(c.fitness.variant));
            SweepPoint p{c.evolution.pop_size, c.evolution.elites, c.fitness.data_fraction, c.weight_function, c.fitness.variant, search(problem, c, workers)};
            out.push_back(std::move(p));
        }
        return out;
    }

    void cmd_search(const RunConfig& config, const fs::path& out, std::size_t workers)
    {
        prepare_out_dir(out);
        const Problem problem = Problem::build(config);
        std::vector<GenerationStats> seen;
        auto report = report_skeleton("search", config);
        try {
            const auto o = search(problem, config, workers, [&](const GenerationStats& s) { seen.push_back(s); });
            report["result"] = search_json(problem, config, o);
            report["wall_clock"] = wall_clock_json(o);
            write_search_files(out, problem, config, o);
            write_json(out / "report.json", report);
            if (o.best_test_accuracy)
                spdlog::info("best fitness {:.6f}, best top-{} test accuracy {:.4f}", o.result.best_fitness, o.top.size(), *o.best_test_accuracy);
            else
                spdlog::info("best fitness {:.6f}", o.result.best_fitness);
        }
        catch (const Error& e) {
            // keep what finished before the backend gave up
            if (dynamic_cast<const ConfigError*>(&e) || dynamic_cast<const UsageError*>(&e))
                throw;
            report["status"] = "aborted";
            report["error"] = e.what();
            report["result"] = {{"num_blocks", problem.num_blocks}, {"history", history_json(seen)}};
            write_history(out / "history.csv", seen);
            write_json(out / "report.json", report);
            throw;
        }
    }

    void cmd_baselines(const RunConfig& config, const fs::path& out, std::size_t workers)
    {
        prepare_out_dir(out);
        const Problem problem = Problem::build(config);
        const auto t0 = std::chrono::steady_clock::now();
        const auto b = baselines(problem, config, workers);

        std::vector<std::string> header{"method", "runs", "mean_test_accuracy", "std_error", "relative_to_ft"};
        for (std::size_t r = 0; r < config.baseline_runs; ++r)
            header.push_back("test_accuracy_" + std::to_string(r + 1));
        CsvFile csv(out / "baselines.csv", header);
        ordered_json rows = ordered_json::array();
        for (const auto& row : b.rows) {
            std::vector<std::string> cells{row.method, std::to_string(row.test_accuracy.size()), num(row.mean), num(row.std_error), num(row.relative_to_ft)};
            for (double a : row.test_accuracy)
                cells.push_back(num(a));
            csv.row(cells);
            rows.push_back({{"method", row.method}, {"mean_test_accuracy", row.mean}, {"std_error", row.std_error}, {"relative_to_ft", row.relative_to_ft},
                {"test_accuracy", row.test_accuracy}});
            spdlog::info("{:8} {:.4f} +- {:.4f}", row.method, row.mean, row.std_error);
        }
        auto report = report_skeleton("baselines", config);
        ordered_json searches = ordered_json::array();
        ordered_json search_s = ordered_json::array();
        for (std::size_t r = 0; r < b.searches.size(); ++r) {
            RunConfig c = config;
            c.seed = derive_seed(config.seed, kBaselineStream, r);
            auto sj = search_json(problem, c, b.searches[r]);
            sj.erase("individuals");
            searches.push_back({{"run", r + 1}, {"seed", c.seed}, {"search", sj}});
            search_s.push_back(b.searches[r].wall_clock_s);
        }
        report["result"] = {{"rows", rows}, {"searches", searches}};
        report["wall_clock"] = {{"total_s", seconds_since(t0)}, {"search_s", search_s}};
        write_json(out / "report.json", report);
    }

    void cmd_compare(const RunConfig& config, const fs::path& out, std::size_t workers)
    {
        prepare_out_dir(out);
        const Problem problem = Problem::build(config);
        const auto t0 = std::chrono::steady_clock::now();
        const auto runs = compare(problem, config, workers);

        CsvFile csv(out / "convergence.csv", {"optimizer", "generation", "cum_evaluations", "best_fitness", "mean_fitness"});
        ordered_json res = ordered_json::array();
        ordered_json clock = ordered_json::object();
        for (const auto& r : runs) {
            for (const auto& h : r.result.history)
                csv.row({r.optimizer, std::to_string(h.generation), std::to_string(h.evaluations), num(h.best), num(h.mean)});
            res.push_back({{"optimizer", r.optimizer}, {"best_fitness", r.result.best_fitness}, {"best_genome", to_std(r.result.best_genome)},
                {"evaluations", r.result.evaluations}, {"history", history_json(r.result.history)}});
            clock[r.optimizer] = r.result.wall_clock_s;
            spdlog::info("{:10} best {:.6f} after {} evaluations", r.optimizer, r.result.best_fitness, r.result.evaluations);
        }
        auto report = report_skeleton("compare", config);
        report["result"] = {{"num_blocks", problem.num_blocks}, {"optimizers", res}};
        report["wall_clock"] = {{"total_s", seconds_since(t0)}, {"per_generation_s", clock}};
        write_json(out / "report.json", report);
    }

    void cmd_sweep(const RunConfig& config, SweepAxis axis, const fs::path& out, std::size_t workers)
    {
        prepare_out_dir(out);
        const Problem problem = Problem::build(with_validated(config));
        const auto t0 = std::chrono::steady_clock::now();
        const auto points = sweep(problem, config, axis, workers);

        std::vector<std::string> header{"axis", "pop_size", "elites", "data_fraction", "weight_function", "fitness_variant", "best_fitness", "evaluations",
            "generations", "wall_clock_s", "best_test_accuracy"};
        for (std::size_t k = 0; k < config.top_k; ++k)
            header.push_back("test_accuracy_" + std::to_string(k + 1));
        CsvFile csv(out / "sweep.csv", header);
        ordered_json res = ordered_json::array();
        ordered_json clock = ordered_json::array();
        for (const auto& p : points) {
            const auto& r = p.outcome.result;
            std::vector<std::string> cells{std::string(to_string(axis)), std::to_string(p.pop_size), std::to_string(p.elites), num(p.data_fraction),
                std::string(to_string(p.weight_function)), std::string(to_string(p.fitness_variant)), num(r.best_fitness), std::to_string(r.evaluations),
                std::to_string(r.history.size() - 1), num(p.outcome.wall_clock_s), opt_num(p.outcome.best_test_accuracy)};
            ordered_json top = ordered_json::array();
            for (std::size_t k = 0; k < config.top_k; ++k) {
                const auto acc = k < p.outcome.top.size() ? p.outcome.top[k].test_accuracy : std::nullopt;
                cells.push_back(opt_num(acc));
                top.push_back(opt_json(acc));
            }
            csv.row(cells);
            res.push_back({{"pop_size", p.pop_size}, {"elites", p.elites}, {"data_fraction", p.data_fraction}, {"weight_function", to_string(p.weight_function)},
                {"fitness_variant", to_string(p.fitness_variant)}, {"best_fitness", r.best_fitness}, {"best_genome", to_std(r.best_genome)},
                {"evaluations", r.evaluations}, {"best_test_accuracy", opt_json(p.outcome.best_test_accuracy)}, {"top_test_accuracy", top}});
            clock.push_back(p.outcome.wall_clock_s);
        }
        auto report = report_skeleton("sweep", config);
        report["result"] = {{"axis", to_string(axis)}, {"points", res}};
        if (axis == SweepAxis::DataFraction && problem.can_retrain()) {
            // expected trend: accuracy does not drop as the fraction grows
            std::vector<std::pair<double, double>> by_fraction;
            for (const auto& p : points)
                by_fraction.emplace_back(p.data_fraction, p.outcome.best_test_accuracy.value_or(0.0));
            std::sort(by_fraction.begin(), by_fraction.end());
            bool monotone = true;
            for (std::size_t i = 1; i < by_fraction.size(); ++i)
                monotone = monotone && by_fraction[i].second >= by_fraction[i - 1].second;
            report["result"]["accuracy_non_decreasing_in_fraction"] = monotone;
            spdlog::info("test accuracy non-decreasing in data fraction: {}", monotone ? "yes" : "no");
        }
        report["wall_clock"] = {{"total_s", seconds_since(t0)}, {"per_point_s", clock}};
        write_json(out / "report.json", report);
    }

} // namespace biotune::app
