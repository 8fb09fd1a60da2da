#include <biotune/app/config.hpp>

#include <fstream>
#include <sstream>

#include <unistd.h>

namespace biotune::app {

    using nlohmann::json;
    using nlohmann::ordered_json;

    std::string_view to_string(BackendKind k)
    {
        switch (k) {
        case BackendKind::Toy:
            return "toy";
        case BackendKind::Landscape:
            return "landscape";
        case BackendKind::External:
            return "external";
        }
        return "toy";
    }

    namespace {
        BackendKind backend_kind_from_string(std::string_view s)
        {
            for (auto k : {BackendKind::Toy, BackendKind::Landscape, BackendKind::External})
                if (s == to_string(k))
                    return k;
            throw UsageError("unknown backend '" + std::string(s) + "' (expected toy, landscape or external)");
        }

        // Walks one JSON object, converting fields and remembering which keys
        // were used so leftovers can be reported as unknown.
        class Reader {
        public:
            Reader(const json& j, std::string path, const std::string& source) : _j(j), _path(std::move(path)), _source(source)
            {
                if (!_j.is_object())
                    _fail(_path.empty() ? "top level" : _path, "expected an object");
            }

            bool has(const char* key) const { return _j.contains(key); }

            Reader child(const char* key)
            {
                _used.push_back(key);
                return Reader(_j.at(key), _name(key), _source);
            }

            template <typename T>
            void get(const char* key, T& out)
            {
                const auto it = _j.find(key);
                if (it == _j.end())
                    return;
                _used.push_back(key);
                out = _convert<T>(*it, _name(key));
            }

            template <typename T, typename Parse>
            void get_enum(const char* key, T& out, Parse parse)
            {
                std::string s;
                get(key, s);
                if (!_j.contains(key))
                    return;
                try {
                    out = parse(s);
                }
                catch (const UsageError& e) {
                    _fail(_name(key), e.what());
                }
            }

            template <typename T, typename Parse>
            void get_enum_list(const char* key, std::vector<T>& out, Parse parse)
            {
                std::vector<std::string> names;
                get(key, names);
                if (!_j.contains(key))
                    return;
                out.clear();
                for (const auto& s : names) {
                    try {
                        out.push_back(parse(s));
                    }
                    catch (const UsageError& e) {
                        _fail(_name(key), e.what());
                    }
                }
            }

            void finish() const
            {
                for (const auto& [k, v] : _j.items())
                    if (std::find(_used.begin(), _used.end(), k) == _used.end())
                        _fail(_name(k.c_str()), "unknown field");
            }

        private:
            std::string _name(const char* key) const { return _path.empty() ? key : _path + "." + key; }

            [[noreturn]] void _fail(const std::string& field, const std::string& what) const
            {
                throw ConfigError(_source + ": field '" + field + "': " + what);
            }

            template <typename T>
            T _convert(const json& v, const std::string& name) const
            {
                if constexpr (std::is_same_v<T, bool>) {
                    if (!v.is_boolean())
                        _fail(name, "expected true or false");
                    return v.get<bool>();
                }
                else if constexpr (std::is_integral_v<T>) {
                    if (!v.is_number_unsigned())
                        _fail(name, "expected a non-negative integer");
                    return static_cast<T>(v.get<std::uint64_t>());
                }
                else if constexpr (std::is_floating_point_v<T>) {
                    if (!v.is_number())
                        _fail(name, "expected a number");
                    return v.get<double>();
                }
                else if constexpr (std::is_same_v<T, std::string>) {
                    if (!v.is_string())
                        _fail(name, "expected a string");
                    return v.get<std::string>();
                }
                else if constexpr (std::is_same_v<T, std::filesystem::path>) {
                    return std::filesystem::path(_convert<std::string>(v, name));
                }
                else {
                    if (!v.is_array())
                        _fail(name, "expected an array");
                    T out;
                    for (std::size_t i = 0; i < v.size(); ++i)
                        out.push_back(_convert<typename T::value_type>(v[i], name + "[" + std::to_string(i) + "]"));
                    return out;
                }
            }

            const json& _j;
            std::string _path;
            const std::string& _source;
            std::vector<std::string> _used;
        };

        void read_train(Reader r, toy::TrainSpec& t)
        {
            r.get("base_lr", t.base_lr);
            r.get("max_epochs", t.max_epochs);
            r.get("patience", t.patience);
            r.get("batch_size", t.batch_size);
            r.get_enum("regularizer", t.regularizer, toy::regularizer_from_string);
            r.get("alpha", t.alpha);
            r.finish();
        }

        ordered_json train_json(const toy::TrainSpec& t)
        {
            return {{"base_lr", t.base_lr}, {"max_epochs", t.max_epochs}, {"patience", t.patience}, {"batch_size", t.batch_size},
                {"regularizer", toy::to_string(t.regularizer)}, {"alpha", t.alpha}};
        }

        template <typename E>
        std::vector<std::string> names(const std::vector<E>& v)
        {
            std::vector<std::string> out;
            for (auto e : v)
                out.emplace_back(to_string(e));
            return out;
        }

        bool executable_on_path(const std::string& cmd)
        {
            if (cmd.find('/') != std::string::npos)
                return ::access(cmd.c_str(), X_OK) == 0;
            const char* path = std::getenv("PATH");
            std::stringstream ss(path ? path : "");
            std::string dir;
            while (std::getline(ss, dir, ':'))
                if (!dir.empty() && ::access((std::filesystem::path(dir) / cmd).c_str(), X_OK) == 0)
                    return true;
            return false;
        }
    } // namespace

    RunConfig parse_config(const json& j, const std::string& source)
    {
        RunConfig c;
        Reader top(j, "", source);
        top.get("seed", c.seed);
        top.get("workers", c.workers);

        if (top.has("backend")) {
            Reader b = top.child("backend");
            b.get_enum("kind", c.backend, backend_kind_from_string);
            b.get_enum("landscape", c.landscape, landscape_kind_from_string);
            std::size_t blocks = static_cast<std::size_t>(c.landscape_blocks);
            b.get("num_blocks", blocks);
            c.landscape_blocks = static_cast<Eigen::Index>(blocks);
            c.external.num_blocks = c.landscape_blocks;
            b.get("command", c.external.command);
            if (b.has("env")) {
                Reader env = b.child("env");
                for (const auto& [k, v] : j.at("backend").at("env").items()) {
                    std::string value;
                    env.get(k.c_str(), value);
                    c.external.env.emplace_back(k, value);
                }
                env.finish();
            }
            std::uint64_t ms = static_cast<std::uint64_t>(c.external.handshake_timeout.count());
            b.get("handshake_timeout_ms", ms);
            c.external.handshake_timeout = std::chrono::milliseconds(ms);
            ms = static_cast<std::uint64_t>(c.external.request_timeout.count());
            b.get("request_timeout_ms", ms);
            c.external.request_timeout = std::chrono::milliseconds(ms);
            b.get("max_in_flight", c.external.max_in_flight);
            b.get("block_params", c.external_block_params);
            b.finish();
        }
        c.external.num_blocks = c.landscape_blocks;

        if (top.has("task")) {
            Reader t = top.child("task");
            auto& s = c.toy.task;
            std::filesystem::path p;
            t.get("path", p);
            if (!p.empty())
                c.task_path = p;
            std::size_t dim = static_cast<std::size_t>(s.feature_dim);
            t.get("feature_dim", dim);
            s.feature_dim = static_cast<Eigen::Index>(dim);
            std::size_t sc = static_cast<std::size_t>(s.source_classes), tc = static_cast<std::size_t>(s.target_classes);
            t.get("source_classes", sc);
            t.get("target_classes", tc);
            s.source_classes = static_cast<int>(sc);
            s.target_classes = static_cast<int>(tc);
            t.get("source_per_class", s.source_per_class);
            t.get("train_per_class", s.train_per_class);
            t.get("val_per_class", s.val_per_class);
            t.get("test_per_class", s.test_per_class);
            t.get("separation", s.separation);
            t.get("noise", s.noise);
            t.get("novelty", s.novelty);
            t.get_enum("shift", s.shift, toy::shift_kind_from_string);
            t.get("magnitude", s.magnitude);
            t.get("seed", s.seed);
            t.finish();
        }
        if (top.has("model")) {
            Reader m = top.child("model");
            std::size_t hidden = static_cast<std::size_t>(c.toy.hidden), fb = static_cast<std::size_t>(c.toy.feature_blocks);
            m.get("hidden", hidden);
            m.get("feature_blocks", fb);
            m.get("pretrain_seed", c.pretrain_seed);
            c.toy.hidden = static_cast<Eigen::Index>(hidden);
            c.toy.feature_blocks = static_cast<Eigen::Index>(fb);
            m.finish();
        }
        if (top.has("pretrain"))
            read_train(top.child("pretrain"), c.toy.pretrain);
        if (top.has("finetune"))
            read_train(top.child("finetune"), c.toy.finetune);

        if (top.has("evolution")) {
            Reader e = top.child("evolution");
            e.get("pop_size", c.evolution.pop_size);
            e.get("elites", c.evolution.elites);
            e.get("max_generations", c.evolution.max_generations);
            e.get("seeds_per_eval", c.evolution.seeds_per_eval);
            e.get("perturbation", c.evolution.perturbation);
            e.get("stall_generations", c.evolution.stall_generations);
            e.get("convergence_eps", c.evolution.convergence_eps);
            e.finish();
        }
        if (top.has("fitness")) {
            Reader f = top.child("fitness");
            f.get_enum("variant", c.fitness.variant, fitness_variant_from_string);
            f.get("data_fraction", c.fitness.data_fraction);
            f.get("num_folds", c.fitness.num_folds);
            f.finish();
        }
        c.fitness.seeds_per_eval = c.evolution.seeds_per_eval;
        top.get_enum("weight_function", c.weight_function, weight_function_from_string);
        top.get("top_k", c.top_k);

        if (top.has("optimizer")) {
            Reader o = top.child("optimizer");
            auto& s = c.optimizer;
            o.get("crossover_prob", s.crossover_prob);
            o.get("mutation_prob", s.mutation_prob);
            o.get("mutation_sigma", s.mutation_sigma);
            o.get("blend_alpha", s.blend_alpha);
            o.get("ga_elites", s.ga_elites);
            o.get("differential_weight", s.differential_weight);
            o.get("crossover_rate", s.crossover_rate);
            o.get("inertia", s.inertia);
            o.get("cognitive", s.cognitive);
            o.get("social", s.social);
            o.get("velocity_clamp", s.velocity_clamp);
            o.finish();
        }
        c.optimizer.pop_size = c.evolution.pop_size;
        c.optimizer.max_generations = c.evolution.max_generations;
        if (top.has("compare")) {
            Reader cmp = top.child("compare");
            cmp.get("optimizers", c.optimizers);
            cmp.get("match_budget", c.match_budget);
            cmp.finish();
        }
        if (top.has("baselines")) {
            Reader b = top.child("baselines");
            b.get("runs", c.baseline_runs);
            b.finish();
        }
        if (top.has("sweep")) {
            Reader s = top.child("sweep");
            s.get("population", c.sweep.population);
            s.get("elites", c.sweep.elites);
            s.get("data_fraction", c.sweep.data_fraction);
            s.get_enum_list("weight_function", c.sweep.weight_function, weight_function_from_string);
            s.get_enum_list("fitness_variant", c.sweep.fitness_variant, fitness_variant_from_string);
            s.finish();
        }
        top.finish();
        return c;
    }

    RunConfig load_config(const std::filesystem::path& path)
    {
        std::ifstream in(path);
        if (!in)
            throw ConfigError("cannot read config file '" + path.string() + "'");
        std::stringstream ss;
        ss << in.rdbuf();
        const std::string text = ss.str();
        json j;
        try {
            j = json::parse(text);
        }
        catch (const json::parse_error& e) {
            std::size_t line = 1, col = 1;
            for (std::size_t i = 0; i + 1 < e.byte && i < text.size(); ++i) {
                if (text[i] == '\n') {
                    ++line;
                    col = 1;
                }
                else {
                    ++col;
                }
            }
            throw ConfigError(path.string() + ":" + std::to_string(line) + ":" + std::to_string(col) + ": invalid JSON: " + e.what());
        }
        RunConfig c = parse_config(j, path.string());
        // relative task paths are taken relative to the config file
        if (c.task_path && c.task_path->is_relative())
            c.task_path = path.parent_path() / *c.task_path;
        return c;
    }

    void validate(const RunConfig& c)
    {
        c.evolution.validate();
        if (c.workers < 1)
            throw ConfigError("workers must be at least 1");
        if (!(c.fitness.data_fraction > 0.0 && c.fitness.data_fraction <= 1.0))
            throw ConfigError("fitness.data_fraction must lie in (0,1]");
        if (c.fitness.num_folds < 1)
            throw ConfigError("fitness.num_folds must be at least 1");
        if (c.top_k < 1)
            throw ConfigError("top_k must be at least 1");
        if (c.baseline_runs < 1)
            throw ConfigError("baselines.runs must be at least 1");
        switch (c.backend) {
        case BackendKind::Toy:
            c.toy.task.validate();
            c.toy.pretrain.validate();
            c.toy.finetune.validate();
            if (c.toy.hidden < 1 || c.toy.feature_blocks < 1)
                throw ConfigError("model.hidden and model.feature_blocks must be positive");
            if (c.task_path && !std::filesystem::is_regular_file(*c.task_path / "task.json"))
                throw ConfigError("task.path '" + c.task_path->string() + "' does not contain task.json");
            break;
        case BackendKind::Landscape:
            if (c.landscape_blocks < 1)
                throw ConfigError("backend.num_blocks must be positive");
            break;
        case BackendKind::External:
            if (c.external.command.empty())
                throw ConfigError("backend.command is required for the external backend");
            if (!executable_on_path(c.external.command.front()))
                throw ConfigError("backend.command: '" + c.external.command.front() + "' is not an executable file or on PATH");
            if (c.landscape_blocks < 1)
                throw ConfigError("backend.num_blocks must be positive");
            if (!c.external_block_params.empty() && c.external_block_params.size() != static_cast<std::size_t>(c.landscape_blocks))
                throw ConfigError("backend.block_params must list one count per block");
            if (c.external.max_in_flight < 1)
                throw ConfigError("backend.max_in_flight must be at least 1");
            break;
        }
    }

    ordered_json to_json(const RunConfig& c)
    {
        ordered_json j;
        j["seed"] = c.seed;
        ordered_json b;
        b["kind"] = to_string(c.backend);
        if (c.backend == BackendKind::Landscape) {
            b["landscape"] = to_string(c.landscape);
            b["num_blocks"] = c.landscape_blocks;
        }
        if (c.backend == BackendKind::External) {
            b["command"] = c.external.command;
            ordered_json env = ordered_json::object();
            for (const auto& [k, v] : c.external.env)
                env[k] = v;
            b["env"] = env;
            b["num_blocks"] = c.landscape_blocks;
            b["handshake_timeout_ms"] = c.external.handshake_timeout.count();
            b["request_timeout_ms"] = c.external.request_timeout.count();
            b["max_in_flight"] = c.external.max_in_flight;
            b["block_params"] = c.external_block_params;
        }
        j["backend"] = b;
        if (c.backend == BackendKind::Toy) {
            const auto& s = c.toy.task;
            ordered_json t;
            if (c.task_path)
                t["path"] = c.task_path->string();
            t["feature_dim"] = s.feature_dim;
            t["source_classes"] = s.source_classes;
            t["target_classes"] = s.target_classes;
            t["source_per_class"] = s.source_per_class;
            t["train_per_class"] = s.train_per_class;
            t["val_per_class"] = s.val_per_class;
            t["test_per_class"] = s.test_per_class;
            t["separation"] = s.separation;
            t["noise"] = s.noise;
            t["novelty"] = s.novelty;
            t["shift"] = toy::to_string(s.shift);
            t["magnitude"] = s.magnitude;
            t["seed"] = s.seed;
            j["task"] = t;
            j["model"] = {{"hidden", c.toy.hidden}, {"feature_blocks", c.toy.feature_blocks}, {"pretrain_seed", c.pretrain_seed}};
            j["pretrain"] = train_json(c.toy.pretrain);
            j["finetune"] = train_json(c.toy.finetune);
        }
        const auto& e = c.evolution;
        j["evolution"] = {{"pop_size", e.pop_size}, {"elites", e.elites}, {"max_generations", e.max_generations}, {"seeds_per_eval", e.seeds_per_eval},
            {"perturbation", e.perturbation}, {"stall_generations", e.stall_generations}, {"convergence_eps", e.convergence_eps}};
        j["fitness"] = {{"variant", to_string(c.fitness.variant)}, {"data_fraction", c.fitness.data_fraction}, {"num_folds", c.fitness.num_folds}};
        j["weight_function"] = to_string(c.weight_function);
        j["top_k"] = c.top_k;
        const auto& o = c.optimizer;
        j["optimizer"] = {{"crossover_prob", o.crossover_prob}, {"mutation_prob", o.mutation_prob}, {"mutation_sigma", o.mutation_sigma},
            {"blend_alpha", o.blend_alpha}, {"ga_elites", o.ga_elites}, {"differential_weight", o.differential_weight}, {"crossover_rate", o.crossover_rate},
            {"inertia", o.inertia}, {"cognitive", o.cognitive}, {"social", o.social}, {"velocity_clamp", o.velocity_clamp}};
        j["compare"] = {{"optimizers", c.optimizers}, {"match_budget", c.match_budget}};
        j["baselines"] = {{"runs", c.baseline_runs}};
        j["sweep"] = {{"population", c.sweep.population}, {"elites", c.sweep.elites}, {"data_fraction", c.sweep.data_fraction},
            {"weight_function", names(c.sweep.weight_function)}, {"fitness_variant", names(c.sweep.fitness_variant)}};
        return j;
    }

} // namespace biotune::app
