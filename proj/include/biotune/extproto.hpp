#ifndef BIOTUNE_EXTPROTO_HPP
#define BIOTUNE_EXTPROTO_HPP

#include <chrono>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <biotune/fitness.hpp>
#include <biotune/genome.hpp>

namespace biotune::ext {

    // Newline-delimited JSON over the child's stdin/stdout:
    //   host  -> {"type":"hello","protocol_version":1,"num_blocks":N}
    //   child -> {"type":"ready"}            (optional "protocol_version")
    //   host  -> {"type":"evaluate", FitnessRequest fields}
    //   child -> {"type":"fitness", FitnessResponse fields}
    //   host  -> {"type":"shutdown"}
    inline constexpr int protocol_version = 1;

    struct FitnessRequest {
        int protocol_version = ext::protocol_version;
        std::uint64_t request_id = 0;
        Genome genome;
        Vector eta;
        std::size_t generation = 0;
        std::size_t fold_index = 0;
        std::vector<std::uint64_t> seeds;
        double data_fraction = 1.0;
    };

    struct FitnessResponse {
        std::uint64_t request_id = 0;
        bool ok = true;
        std::vector<double> per_seed_accuracy;
        std::vector<double> per_seed_loss;
        std::optional<std::string> message;
    };

    /// One line, no trailing newline. Doubles use the shortest decimal form
    /// that reads back to the same value.
    std::string to_line(const FitnessRequest& r);
    std::string to_line(const FitnessResponse& r);
    /// Throw ProtocolError on anything malformed or of the wrong type.
    FitnessRequest parse_request(std::string_view line);
    FitnessResponse parse_response(std::string_view line);

    struct SessionOptions {
        /// argv; the first entry is looked up on PATH.
        std::vector<std::string> command;
        /// Added to (or overriding) the host environment.
        std::vector<std::pair<std::string, std::string>> env;
        Eigen::Index num_blocks = 1;
        std::chrono::milliseconds handshake_timeout{5000};
        /// 0 waits forever.
        std::chrono::milliseconds request_timeout{0};
        std::size_t max_in_flight = 1;
        std::chrono::milliseconds shutdown_grace{2000};
    };

    /// One child evaluator process. request() may be called from several
    /// threads; at most max_in_flight requests are outstanding at a time and
    /// responses are matched by request_id in any order.
    class Session {
    public:
        /// Spawns the child and completes the handshake. Throws SessionError.
        static std::unique_ptr<Session> open(const SessionOptions& options);
        ~Session();
        Session(const Session&) = delete;
        Session& operator=(const Session&) = delete;

        /// Fills in protocol_version and request_id, sends, waits.
        /// Child status "error" or a timeout -> EvaluationError;
        /// a dead or misbehaving child -> SessionError (the session is then unusable).
        FitnessResponse request(FitnessRequest req);

        /// False once the child exited or broke the protocol.
        bool alive() const;
        /// Sends shutdown, waits for the exit (killing after the grace period).
        void close();
        int pid() const;

    private:
        struct Impl;
        explicit Session(std::unique_ptr<Impl> impl);
        std::unique_ptr<Impl> _impl;
    };

    /// Backend speaking the protocol: decodes eta with the weight function,
    /// sends one request per evaluation and returns the per-seed metrics.
    /// A session that died is reopened on the next call.
    class ExternalBackend {
    public:
        ExternalBackend(SessionOptions options, WeightFunction weights, double data_fraction);
        ~ExternalBackend();

        std::vector<SeedOutcome> operator()(const Genome& g, const EvalContext& ctx) const;

        /// Sessions opened so far (1 after the first call without crashes).
        std::size_t sessions_opened() const;

    private:
        std::shared_ptr<Session> _session() const;

        SessionOptions _options;
        WeightFunction _weights;
        double _data_fraction;
        mutable std::mutex _mutex;
        mutable std::shared_ptr<Session> _current;
        mutable std::size_t _opened = 0;
    };

    /// Fitness evaluator over a shared ExternalBackend.
    Evaluator external_evaluator(std::shared_ptr<const ExternalBackend> backend, FitnessVariant variant);

} // namespace biotune::ext

#endif
