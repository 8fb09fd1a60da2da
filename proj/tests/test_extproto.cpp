#include <doctest.h>

#include <atomic>
#include <cstring>
#include <limits>
#include <thread>

#include <json.hpp>
#include <spdlog/sinks/ringbuffer_sink.h>
#include <spdlog/spdlog.h>

#include <biotune/evolution.hpp>
#include <biotune/extproto.hpp>

using namespace biotune;
using namespace biotune::ext;
using namespace std::chrono_literals;

namespace {
    SessionOptions echo(std::vector<std::string> flags = {}, Eigen::Index num_blocks = 3)
    {
        SessionOptions o;
        o.command = {ECHO_EVALUATOR_PATH};
        o.command.insert(o.command.end(), flags.begin(), flags.end());
        o.num_blocks = num_blocks;
        return o;
    }

    FitnessRequest request_for(const Genome& g, std::vector<std::uint64_t> seeds = {1, 2, 3})
    {
        FitnessRequest r;
        r.genome = g;
        r.eta = decode(g, WeightFunction::Exponential, 1.0).eta;
        r.seeds = std::move(seeds);
        return r;
    }

    bool same_bits(const Vector& a, const Vector& b)
    {
        return a.size() == b.size() && std::memcmp(a.data(), b.data(), sizeof(double) * static_cast<std::size_t>(a.size())) == 0;
    }

    // Genomes with awkward decimal expansions and edge values.
    Genome fuzz_genome(Rng& rng, Eigen::Index len)
    {
        Genome g(len);
        for (Eigen::Index i = 0; i < len; ++i) {
            switch (rng.index(6)) {
            case 0:
                g(i) = 0.0;
                break;
            case 1:
                g(i) = 1.0;
                break;
            case 2:
                g(i) = std::numeric_limits<double>::denorm_min() * static_cast<double>(rng.index(1000) + 1);
                break;
            case 3:
                g(i) = std::nextafter(1.0, 0.0);
                break;
            default:
                g(i) = rng.uniform();
            }
        }
        return g;
    }
} // namespace

TEST_SUITE("extproto")
{
    TEST_CASE("message lines round-trip bit-exactly")
    {
        Rng rng(2024);
        for (int i = 0; i < 10000; ++i) {
            const auto len = static_cast<Eigen::Index>(2 + rng.index(8));
            FitnessRequest r = request_for(fuzz_genome(rng, len), {rng.index(1u << 30), 7});
            r.request_id = static_cast<std::uint64_t>(i) + 1;
            r.generation = rng.index(50);
            r.fold_index = rng.index(5);
            r.data_fraction = rng.uniform();
            const std::string line = to_line(r);
            REQUIRE(line.find('\n') == std::string::npos);
            const auto back = parse_request(line);
            CHECK(same_bits(back.genome, r.genome));
            CHECK(same_bits(back.eta, r.eta));
            CHECK(back.request_id == r.request_id);
            CHECK(back.seeds == r.seeds);
            CHECK(back.generation == r.generation);
            CHECK(back.fold_index == r.fold_index);
            CHECK(back.data_fraction == r.data_fraction);
        }

        FitnessResponse resp{42, false, {}, {}, "line one\nline two \"quoted\""};
        const std::string line = to_line(resp);
        CHECK(line.find('\n') == std::string::npos);
        const auto back = parse_response(line);
        CHECK(back.request_id == 42);
        CHECK_FALSE(back.ok);
        CHECK(*back.message == *resp.message);
    }

    TEST_CASE("wire format")
    {
        FitnessRequest r = request_for(Genome::Constant(3, 0.5), {4});
        r.request_id = 9;
        const auto j = nlohmann::json::parse(to_line(r));
        CHECK(j["type"] == "evaluate");
        CHECK(j["protocol_version"] == 1);
        CHECK(j["request_id"] == 9);
        CHECK(j["seeds"] == nlohmann::json::array({4}));
        for (const char* key : {"genome", "eta", "generation", "fold_index", "data_fraction"})
            CHECK(j.contains(key));
    }

    TEST_CASE("malformed messages are protocol errors")
    {
        CHECK_THROWS_AS(parse_response("not json"), ProtocolError);
        CHECK_THROWS_AS(parse_response("[1,2]"), ProtocolError);
        CHECK_THROWS_AS(parse_response(R"({"type":"ready"})"), ProtocolError);
        CHECK_THROWS_AS(parse_response(R"({"type":"fitness","status":"ok","per_seed_accuracy":[],"per_seed_loss":[]})"), ProtocolError);
        CHECK_THROWS_AS(parse_response(R"({"type":"fitness","request_id":1,"status":"maybe"})"), ProtocolError);
        CHECK_THROWS_AS(parse_response(R"({"type":"fitness","request_id":1,"status":"ok","per_seed_accuracy":["a"],"per_seed_loss":[1]})"), ProtocolError);
        CHECK_THROWS_AS(parse_request(R"({"type":"evaluate","request_id":1})"), ProtocolError);
        CHECK_NOTHROW(parse_response(R"({"type":"fitness","request_id":1,"status":"error"})"));
    }

    TEST_CASE("handshake")
    {
        SUBCASE("reference client is ready within the default timeout")
        {
            const auto t0 = std::chrono::steady_clock::now();
            auto s = Session::open(echo());
            CHECK(std::chrono::steady_clock::now() - t0 < 5s);
            CHECK(s->alive());
            CHECK(s->pid() > 0);
            s->close();
            CHECK_FALSE(s->alive());
        }
        SUBCASE("version mismatch")
        {
            try {
                Session::open(echo({"--version", "2"}));
                FAIL("expected a version mismatch");
            }
            catch (const SessionError& e) {
                CHECK(std::string(e.what()).find("version mismatch") != std::string::npos);
            }
        }
        SUBCASE("missing executable echoes the command")
        {
            SessionOptions o;
            o.command = {"/nonexistent/evaluator-binary", "--flag"};
            try {
                Session::open(o);
                FAIL("expected a spawn failure");
            }
            catch (const SessionError& e) {
                CHECK(std::string(e.what()).find("/nonexistent/evaluator-binary --flag") != std::string::npos);
            }
        }
        SUBCASE("silent child times out")
        {
            auto o = echo({"--no-ready"});
            o.handshake_timeout = 200ms;
            CHECK_THROWS_WITH_AS(Session::open(o), doctest::Contains("handshake"), SessionError);
        }
        SUBCASE("child exiting early")
        {
            SessionOptions o;
            o.command = {"true"};
            CHECK_THROWS_AS(Session::open(o), SessionError);
        }
    }

    TEST_CASE("echo round-trip gives 1 - mean(genome) under Acc")
    {
        auto backend = std::make_shared<ExternalBackend>(echo(), WeightFunction::Discriminative, 1.0);
        const auto eval = external_evaluator(backend, FitnessVariant::Acc);
        Rng rng(3);
        for (int i = 0; i < 50; ++i) {
            const Genome g = random_genome(3, rng);
            CHECK(eval(g, {0, 0, {1, 2, 3}}) == doctest::Approx(1.0 - g.mean()).epsilon(1e-15));
        }
        CHECK(backend->sessions_opened() == 1);
    }

    TEST_CASE("fuzz: 10k genomes survive host -> child -> host")
    {
        auto s = Session::open(echo({"--echo"}, 5));
        Rng rng(77);
        std::uint64_t last_id = 0;
        for (int i = 0; i < 10000; ++i) {
            const FitnessRequest sent = request_for(fuzz_genome(rng, 6), {static_cast<std::uint64_t>(i)});
            const auto resp = s->request(sent);
            REQUIRE(resp.message);
            const auto seen = parse_request(*resp.message);
            CHECK(seen.request_id == resp.request_id);
            CHECK(seen.request_id > last_id);
            last_id = seen.request_id;
            CHECK(same_bits(seen.genome, sent.genome));
            CHECK(same_bits(seen.eta, sent.eta));
            CHECK(seen.seeds == sent.seeds);
        }
    }

    TEST_CASE("error paths")
    {
        const Genome g = Genome::Constant(4, 0.6);
        SUBCASE("status error carries the child's message")
        {
            auto s = Session::open(echo({"--fail-above", "0.5"}));
            CHECK_THROWS_WITH_AS(s->request(request_for(g)), doctest::Contains("scripted failure\nwith a newline"), EvaluationError);
            CHECK(s->alive());
            CHECK_NOTHROW(s->request(request_for(Genome::Constant(4, 0.4))));
        }
        SUBCASE("unknown request_id breaks the session")
        {
            auto s = Session::open(echo({"--wrong-id"}));
            CHECK_THROWS_WITH_AS(s->request(request_for(g)), doctest::Contains("unknown request_id"), SessionError);
            CHECK_FALSE(s->alive());
            CHECK_THROWS_AS(s->request(request_for(g)), SessionError);
        }
        SUBCASE("malformed line breaks the session")
        {
            auto s = Session::open(echo({"--garbage-after", "1"}));
            CHECK_NOTHROW(s->request(request_for(g)));
            CHECK_THROWS_AS(s->request(request_for(g)), ProtocolError);
            CHECK_FALSE(s->alive());
        }
        SUBCASE("child exit closes the session")
        {
            auto s = Session::open(echo({"--crash-after", "2"}));
            CHECK_NOTHROW(s->request(request_for(g)));
            CHECK_NOTHROW(s->request(request_for(g)));
            CHECK_THROWS_AS(s->request(request_for(g)), SessionError);
            CHECK_FALSE(s->alive());
        }
        SUBCASE("per-request timeout is an evaluation error")
        {
            auto o = echo({"--hang-after", "1"});
            o.request_timeout = 100ms;
            auto s = Session::open(o);
            CHECK_NOTHROW(s->request(request_for(g)));
            CHECK_THROWS_WITH_AS(s->request(request_for(g)), doctest::Contains("did not answer"), EvaluationError);
            CHECK(s->alive());
        }
    }

    TEST_CASE("out-of-order responses are matched by request_id")
    {
        auto o = echo({"--reverse", "4", "--delay-ms", "5"});
        o.max_in_flight = 4;
        auto s = Session::open(o);
        std::atomic<int> correct{0};
        {
            std::vector<std::jthread> threads;
            for (int t = 0; t < 4; ++t)
                threads.emplace_back([&, t] {
                    for (int k = 0; k < 5; ++k) {
                        const Genome g = Genome::Constant(4, 0.1 * t + 0.01 * k);
                        const auto r = s->request(request_for(g, {1}));
                        correct += r.per_seed_accuracy.at(0) == g.mean();
                    }
                });
        }
        CHECK(correct == 20);
    }

    TEST_CASE("in-flight limit")
    {
        // With one slot the child sees a single outstanding request; a
        // reverse-2 child would then never answer.
        auto o = echo({"--reverse", "2"});
        o.max_in_flight = 1;
        o.request_timeout = 300ms;
        auto s = Session::open(o);
        std::atomic<int> timeouts{0};
        {
            std::vector<std::jthread> threads;
            for (int t = 0; t < 2; ++t)
                threads.emplace_back([&] {
                    try {
                        s->request(request_for(Genome::Constant(4, 0.5)));
                    }
                    catch (const EvaluationError&) {
                        ++timeouts;
                    }
                });
        }
        // the first request timed out alone; the second was then sent and
        // released both answers (the first one arriving late is ignored)
        CHECK(timeouts == 1);
        CHECK(s->alive());
    }

    TEST_CASE("child stderr reaches the host log")
    {
        auto sink = std::make_shared<spdlog::sinks::ringbuffer_sink_mt>(64);
        auto logger = spdlog::default_logger();
        const auto level = logger->level();
        logger->set_level(spdlog::level::info);
        logger->sinks().push_back(sink);
        {
            auto s = Session::open(echo({"--chatty"}));
            s->close();
        }
        logger->sinks().pop_back();
        logger->set_level(level);
        bool seen = false;
        for (const auto& line : sink->last_formatted())
            seen = seen || line.find("echo evaluator up, 3 blocks") != std::string::npos;
        CHECK(seen);
    }

    TEST_CASE("shutdown")
    {
        auto o = echo({"--ignore-shutdown"});
        o.shutdown_grace = 100ms;
        auto s = Session::open(o);
        const auto t0 = std::chrono::steady_clock::now();
        s->close();
        CHECK(std::chrono::steady_clock::now() - t0 < 2s);
        CHECK_FALSE(s->alive());
    }

    TEST_CASE("search survives a crashing evaluator")
    {
        // Gen 0 (10 evaluations) succeeds, the 16th request kills the child.
        auto backend = std::make_shared<ExternalBackend>(echo({"--crash-after", "15"}), WeightFunction::Exponential, 1.0);
        const auto eval = external_evaluator(backend, FitnessVariant::Acc);
        EvolutionParams p;
        p.max_generations = 2;
        const auto r = run(p, 3, eval, {}, 5);
        CHECK(backend->sessions_opened() >= 2);
        std::size_t failed = 0;
        for (const auto& e : r.evaluated) {
            if (e.failed) {
                ++failed;
                CHECK(e.fitness == 1.0);
                CHECK(e.generation == 1);
            }
            else {
                CHECK(e.fitness == doctest::Approx(1.0 - e.genome.mean()).epsilon(1e-15));
            }
        }
        CHECK(failed == 1);
        CHECK(r.history.size() >= 2);
    }
}
