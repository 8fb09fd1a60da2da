#include <biotune/extproto.hpp>

#include <algorithm>
#include <cerrno>
#include <condition_variable>
#include <csignal>
#include <cstring>
#include <map>
#include <set>
#include <thread>

#include <fcntl.h>
#include <spawn.h>
#include <sys/wait.h>
#include <unistd.h>

#include <json.hpp>
#include <spdlog/spdlog.h>

extern char** environ;

namespace biotune::ext {

    using nlohmann::json;
    using nlohmann::ordered_json;

    namespace {
        std::vector<double> to_std(const Vector& v) { return {v.data(), v.data() + v.size()}; }

        Vector to_eigen(const std::vector<double>& v)
        {
            Vector out(static_cast<Eigen::Index>(v.size()));
            std::copy(v.begin(), v.end(), out.data());
            return out;
        }

        std::string excerpt(std::string_view line)
        {
            return line.size() <= 200 ? std::string(line) : std::string(line.substr(0, 200)) + "...";
        }

        json parse_object(std::string_view line, const char* expected_type)
        {
            json j = json::parse(line, nullptr, false);
            if (j.is_discarded() || !j.is_object())
                throw ProtocolError("malformed protocol line: " + excerpt(line));
            const auto t = j.find("type");
            if (t == j.end() || !t->is_string() || *t != expected_type)
                throw ProtocolError(std::string("expected a '") + expected_type + "' message, got: " + excerpt(line));
            return j;
        }

        template <typename T>
        T field(const json& j, const char* name, std::string_view line)
        {
            const auto it = j.find(name);
            if (it == j.end())
                throw ProtocolError(std::string("missing field '") + name + "' in: " + excerpt(line));
            try {
                return it->get<T>();
            }
            catch (const json::exception&) {
                throw ProtocolError(std::string("bad field '") + name + "' in: " + excerpt(line));
            }
        }

        std::string join(const std::vector<std::string>& argv)
        {
            std::string s;
            for (const auto& a : argv)
                s += (s.empty() ? "" : " ") + a;
            return s;
        }
    } // namespace

    std::string to_line(const FitnessRequest& r)
    {
        ordered_json j;
        j["type"] = "evaluate";
        j["protocol_version"] = r.protocol_version;
        j["request_id"] = r.request_id;
        j["genome"] = to_std(r.genome);
        j["eta"] = to_std(r.eta);
        j["generation"] = r.generation;
        j["fold_index"] = r.fold_index;
        j["seeds"] = r.seeds;
        j["data_fraction"] = r.data_fraction;
        return j.dump();
    }

    std::string to_line(const FitnessResponse& r)
    {
        ordered_json j;
        j["type"] = "fitness";
        j["request_id"] = r.request_id;
        j["status"] = r.ok ? "ok" : "error";
        j["per_seed_accuracy"] = r.per_seed_accuracy;
        j["per_seed_loss"] = r.per_seed_loss;
        if (r.message)
            j["message"] = *r.message;
        return j.dump();
    }

    FitnessRequest parse_request(std::string_view line)
    {
        const json j = parse_object(line, "evaluate");
        FitnessRequest r;
        r.protocol_version = field<int>(j, "protocol_version", line);
        r.request_id = field<std::uint64_t>(j, "request_id", line);
        r.genome = to_eigen(field<std::vector<double>>(j, "genome", line));
        r.eta = to_eigen(field<std::vector<double>>(j, "eta", line));
        r.generation = field<std::size_t>(j, "generation", line);
        r.fold_index = field<std::size_t>(j, "fold_index", line);
        r.seeds = field<std::vector<std::uint64_t>>(j, "seeds", line);
        r.data_fraction = field<double>(j, "data_fraction", line);
        return r;
    }

    FitnessResponse parse_response(std::string_view line)
    {
        const json j = parse_object(line, "fitness");
        FitnessResponse r;
        r.request_id = field<std::uint64_t>(j, "request_id", line);
        const auto status = field<std::string>(j, "status", line);
        if (status != "ok" && status != "error")
            throw ProtocolError("status must be 'ok' or 'error' in: " + excerpt(line));
        r.ok = status == "ok";
        if (r.ok || j.contains("per_seed_accuracy"))
            r.per_seed_accuracy = field<std::vector<double>>(j, "per_seed_accuracy", line);
        if (r.ok || j.contains("per_seed_loss"))
            r.per_seed_loss = field<std::vector<double>>(j, "per_seed_loss", line);
        if (j.contains("message") && !j["message"].is_null())
            r.message = field<std::string>(j, "message", line);
        return r;
    }

    struct Session::Impl {
        SessionOptions options;
        std::string command_text;
        pid_t pid = -1;
        int to_child = -1;
        int from_child = -1;
        int err_child = -1;

        mutable std::mutex m;
        std::condition_variable cv;
        bool ready = false;
        std::optional<int> ready_version;
        std::optional<std::string> failure;
        bool protocol_failure = false;
        std::map<std::uint64_t, std::optional<FitnessResponse>> pending;
        std::set<std::uint64_t> abandoned;
        std::uint64_t next_id = 1;
        std::size_t in_flight = 0;
        bool closed = false;

        std::mutex write_mutex;
        std::thread reader;
        std::thread err_reader;

        void fail(std::string why, bool protocol = false)
        {
            {
                std::lock_guard lk(m);
                if (!failure) {
                    failure = std::move(why);
                    protocol_failure = protocol;
                }
            }
            cv.notify_all();
        }

        [[noreturn]] void rethrow_failure(const std::string& why, bool protocol) const
        {
            if (protocol)
                throw ProtocolError(why);
            throw SessionError(why);
        }

        bool write_line(const std::string& line)
        {
            std::string buf = line + '\n';
            std::string_view rest = buf;
            while (!rest.empty()) {
                const ssize_t n = ::write(to_child, rest.data(), rest.size());
                if (n < 0) {
                    if (errno == EINTR)
                        continue;
                    return false;
                }
                rest.remove_prefix(static_cast<std::size_t>(n));
            }
            return true;
        }

        void handle_line(std::string_view line)
        {
            if (!ready) {
                const json j = json::parse(line, nullptr, false);
                if (j.is_discarded() || !j.is_object() || j.value("type", "") != "ready")
                    throw ProtocolError("expected 'ready' from evaluator '" + command_text + "', got: " + excerpt(line));
                std::lock_guard lk(m);
                if (j.contains("protocol_version")) {
                    if (!j["protocol_version"].is_number_integer())
                        throw ProtocolError("bad protocol_version in: " + excerpt(line));
                    ready_version = j["protocol_version"].get<int>();
                }
                ready = true;
                cv.notify_all();
                return;
            }
            auto resp = parse_response(line);
            std::lock_guard lk(m);
            const auto it = pending.find(resp.request_id);
            if (it != pending.end() && !it->second) {
                it->second = std::move(resp);
                cv.notify_all();
            }
            else if (abandoned.erase(resp.request_id) == 0) {
                throw ProtocolError("response for unknown request_id " + std::to_string(resp.request_id));
            }
        }

        void read_loop()
        {
            std::string buf;
            char chunk[65536];
            while (true) {
                const ssize_t n = ::read(from_child, chunk, sizeof chunk);
                if (n < 0 && errno == EINTR)
                    continue;
                if (n <= 0) {
                    fail("evaluator '" + command_text + "' closed its output (exited?)");
                    return;
                }
                buf.append(chunk, static_cast<std::size_t>(n));
                std::size_t start = 0;
                for (std::size_t nl = buf.find('\n'); nl != std::string::npos; nl = buf.find('\n', start)) {
                    std::string_view line(buf.data() + start, nl - start);
                    start = nl + 1;
                    if (!line.empty() && line.back() == '\r')
                        line.remove_suffix(1);
                    if (line.empty())
                        continue;
                    try {
                        handle_line(line);
                    }
                    catch (const std::exception& e) {
                        spdlog::error("external evaluator: {}", e.what());
                        fail(std::string("protocol error: ") + e.what(), true);
                        // stop reading; the child is killed on close
                        return;
                    }
                }
                buf.erase(0, start);
            }
        }

        void stderr_loop()
        {
            std::string buf;
            char chunk[4096];
            while (true) {
                const ssize_t n = ::read(err_child, chunk, sizeof chunk);
                if (n < 0 && errno == EINTR)
                    continue;
                if (n <= 0)
                    break;
                buf.append(chunk, static_cast<std::size_t>(n));
                std::size_t nl;
                while ((nl = buf.find('\n')) != std::string::npos) {
                    spdlog::info("evaluator[{}]: {}", pid, buf.substr(0, nl));
                    buf.erase(0, nl + 1);
                }
            }
            if (!buf.empty())
                spdlog::info("evaluator[{}]: {}", pid, buf);
        }

        void spawn()
        {
            static std::once_flag sigpipe_once;
            // a dead child must surface as a write error, not kill the host
            std::call_once(sigpipe_once, [] { std::signal(SIGPIPE, SIG_IGN); });

            if (options.command.empty())
                throw SessionError("external evaluator command is empty");
            int in[2], out[2], err[2];
            if (::pipe2(in, O_CLOEXEC) != 0 || ::pipe2(out, O_CLOEXEC) != 0 || ::pipe2(err, O_CLOEXEC) != 0)
                throw SessionError(std::string("cannot create pipes: ") + std::strerror(errno));

            std::vector<std::string> env_strings;
            for (char** e = environ; *e; ++e) {
                const std::string_view kv(*e);
                const auto key = kv.substr(0, kv.find('='));
                if (std::none_of(options.env.begin(), options.env.end(), [&](const auto& p) { return p.first == key; }))
                    env_strings.emplace_back(kv);
            }
            for (const auto& [k, v] : options.env)
                env_strings.push_back(k + "=" + v);
            std::vector<char*> envp;
            for (auto& s : env_strings)
                envp.push_back(s.data());
            envp.push_back(nullptr);
            std::vector<std::string> args = options.command;
            std::vector<char*> argv;
            for (auto& a : args)
                argv.push_back(a.data());
            argv.push_back(nullptr);

            posix_spawn_file_actions_t fa;
            posix_spawn_file_actions_init(&fa);
            posix_spawn_file_actions_adddup2(&fa, in[0], STDIN_FILENO);
            posix_spawn_file_actions_adddup2(&fa, out[1], STDOUT_FILENO);
            posix_spawn_file_actions_adddup2(&fa, err[1], STDERR_FILENO);
            const int rc = posix_spawnp(&pid, argv[0], &fa, nullptr, argv.data(), envp.data());
            posix_spawn_file_actions_destroy(&fa);
            ::close(in[0]);
            ::close(out[1]);
            ::close(err[1]);
            if (rc != 0) {
                ::close(in[1]);
                ::close(out[0]);
                ::close(err[0]);
                pid = -1;
                throw SessionError("cannot start evaluator '" + command_text + "': " + std::strerror(rc));
            }
            to_child = in[1];
            from_child = out[0];
            err_child = err[0];
            reader = std::thread([this] { read_loop(); });
            err_reader = std::thread([this] { stderr_loop(); });
        }

        void shutdown()
        {
            {
                std::lock_guard lk(m);
                if (closed)
                    return;
                closed = true;
            }
            if (pid > 0) {
                {
                    std::lock_guard wl(write_mutex);
                    write_line(R"({"type":"shutdown"})");
                    ::close(to_child);
                    to_child = -1;
                }
                const auto deadline = std::chrono::steady_clock::now() + options.shutdown_grace;
                int status = 0;
                pid_t done = 0;
                while ((done = ::waitpid(pid, &status, WNOHANG)) == 0 && std::chrono::steady_clock::now() < deadline)
                    std::this_thread::sleep_for(std::chrono::milliseconds(5));
                if (done == 0) {
                    spdlog::warn("evaluator '{}' (pid {}) ignored shutdown; killing it", command_text, pid);
                    ::kill(pid, SIGKILL);
                    ::waitpid(pid, &status, 0);
                }
                else if (done > 0 && WIFEXITED(status) && WEXITSTATUS(status) != 0) {
                    spdlog::warn("evaluator '{}' exited with status {}", command_text, WEXITSTATUS(status));
                }
                else if (done > 0 && WIFSIGNALED(status)) {
                    spdlog::warn("evaluator '{}' was killed by signal {}", command_text, WTERMSIG(status));
                }
            }
            fail("session with evaluator '" + command_text + "' is closed");
            if (reader.joinable())
                reader.join();
            if (err_reader.joinable())
                err_reader.join();
            for (int* fd : {&to_child, &from_child, &err_child})
                if (*fd >= 0) {
                    ::close(*fd);
                    *fd = -1;
                }
        }
    };

    Session::Session(std::unique_ptr<Impl> impl) : _impl(std::move(impl)) {}

    Session::~Session() { close(); }

    std::unique_ptr<Session> Session::open(const SessionOptions& options)
    {
        if (options.max_in_flight < 1)
            throw ConfigError("external.max_in_flight must be at least 1");
        auto impl = std::make_unique<Impl>();
        impl->options = options;
        impl->command_text = join(options.command);
        impl->spawn();
        std::unique_ptr<Session> s(new Session(std::move(impl)));
        Impl& im = *s->_impl;

        ordered_json hello;
        hello["type"] = "hello";
        hello["protocol_version"] = protocol_version;
        hello["num_blocks"] = options.num_blocks;
        {
            std::lock_guard wl(im.write_mutex);
            if (!im.write_line(hello.dump()))
                im.fail("evaluator '" + im.command_text + "' closed its input during the handshake");
        }

        std::unique_lock lk(im.m);
        const bool answered = im.cv.wait_for(lk, options.handshake_timeout, [&] { return im.ready || im.failure.has_value(); });
        if (!im.ready) {
            const std::string why = answered ? *im.failure
                                             : "evaluator '" + im.command_text + "' did not answer the handshake within " + std::to_string(options.handshake_timeout.count()) + " ms";
            lk.unlock();
            s->close();
            throw SessionError(why);
        }
        if (im.ready_version && *im.ready_version != protocol_version) {
            const std::string why = "protocol version mismatch: host speaks " + std::to_string(protocol_version) + ", evaluator '" + im.command_text + "' replied " + std::to_string(*im.ready_version);
            lk.unlock();
            s->close();
            throw SessionError(why);
        }
        spdlog::debug("evaluator '{}' ready (pid {})", im.command_text, im.pid);
        return s;
    }

    FitnessResponse Session::request(FitnessRequest req)
    {
        Impl& im = *_impl;
        const std::size_t num_seeds = req.seeds.size();
        std::uint64_t id = 0;
        {
            std::unique_lock lk(im.m);
            im.cv.wait(lk, [&] { return im.failure.has_value() || im.in_flight < im.options.max_in_flight; });
            if (im.failure)
                im.rethrow_failure(*im.failure, im.protocol_failure);
            ++im.in_flight;
        }
        {
            // ids go out in increasing order
            std::lock_guard wl(im.write_mutex);
            {
                std::lock_guard lk(im.m);
                id = im.next_id++;
                im.pending.emplace(id, std::nullopt);
            }
            req.protocol_version = protocol_version;
            req.request_id = id;
            if (im.to_child < 0 || !im.write_line(to_line(req)))
                im.fail("cannot write to evaluator '" + im.command_text + "'");
        }

        std::unique_lock lk(im.m);
        const auto done = [&] { return im.failure.has_value() || im.pending.at(id).has_value(); };
        bool finished = true;
        if (im.options.request_timeout.count() > 0)
            finished = im.cv.wait_for(lk, im.options.request_timeout, done);
        else
            im.cv.wait(lk, done);
        std::optional<FitnessResponse> resp = std::move(im.pending.at(id));
        im.pending.erase(id);
        --im.in_flight;
        if (!finished)
            im.abandoned.insert(id);
        const std::optional<std::string> failure = im.failure;
        const bool protocol = im.protocol_failure;
        lk.unlock();
        im.cv.notify_all();

        if (!resp) {
            if (!finished)
                throw EvaluationError("evaluator '" + im.command_text + "' did not answer request " + std::to_string(id) + " within " + std::to_string(im.options.request_timeout.count()) + " ms");
            im.rethrow_failure(*failure, protocol);
        }
        if (!resp->ok)
            throw EvaluationError("evaluator reported an error: " + resp->message.value_or("(no message)"));
        if (resp->per_seed_accuracy.size() != num_seeds || resp->per_seed_loss.size() != num_seeds)
            throw EvaluationError("evaluator returned " + std::to_string(resp->per_seed_accuracy.size()) + " accuracies and " + std::to_string(resp->per_seed_loss.size()) + " losses for " + std::to_string(num_seeds) + " seeds");
        for (double a : resp->per_seed_accuracy)
            if (!(a >= 0.0 && a <= 1.0))
                throw EvaluationError("evaluator returned accuracy " + std::to_string(a) + " outside [0,1]");
        return std::move(*resp);
    }

    bool Session::alive() const
    {
        std::lock_guard lk(_impl->m);
        return !_impl->failure.has_value();
    }

    void Session::close() { _impl->shutdown(); }

    int Session::pid() const { return _impl->pid; }

    ExternalBackend::ExternalBackend(SessionOptions options, WeightFunction weights, double data_fraction)
        : _options(std::move(options)), _weights(weights), _data_fraction(data_fraction)
    {
    }

    ExternalBackend::~ExternalBackend()
    {
        if (_current)
            _current->close();
    }

    std::shared_ptr<Session> ExternalBackend::_session() const
    {
        std::lock_guard lk(_mutex);
        if (!_current || !_current->alive()) {
            if (_current)
                spdlog::warn("external evaluator session died; reopening");
            _current.reset();
            _current = Session::open(_options);
            ++_opened;
        }
        return _current;
    }

    std::size_t ExternalBackend::sessions_opened() const
    {
        std::lock_guard lk(_mutex);
        return _opened;
    }

    std::vector<SeedOutcome> ExternalBackend::operator()(const Genome& g, const EvalContext& ctx) const
    {
        FitnessRequest req;
        req.genome = g;
        req.eta = decode(g, _weights, 1.0).eta;
        req.generation = ctx.generation;
        req.fold_index = ctx.fold_index;
        req.seeds = ctx.seeds;
        req.data_fraction = _data_fraction;

        FitnessResponse resp;
        try {
            resp = _session()->request(std::move(req));
        }
        catch (const SessionError& e) {
            throw EvaluationError(std::string("external evaluator: ") + e.what());
        }
        std::vector<SeedOutcome> out;
        for (std::size_t i = 0; i < resp.per_seed_accuracy.size(); ++i)
            out.push_back({resp.per_seed_accuracy[i], resp.per_seed_loss[i]});
        return out;
    }

    Evaluator external_evaluator(std::shared_ptr<const ExternalBackend> backend, FitnessVariant variant)
    {
        return make_evaluator([backend](const Genome& g, const EvalContext& ctx) { return (*backend)(g, ctx); }, variant);
    }

} // namespace biotune::ext
