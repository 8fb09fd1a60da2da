// Scripted external evaluator for protocol tests. Reads the wire protocol on
// stdin, answers accuracy = mean(genome) and loss = 1 - mean(genome) per seed.
//
//   --version N        report protocol_version N in ready
//   --no-ready         never answer hello
//   --echo             put the received evaluate message, re-serialized, in "message"
//   --crash-after N    exit(3) on receiving request N+1
//   --hang-after N     read but never answer from request N+1 on
//   --garbage-after N  write a non-JSON line instead of answering request N+1
//   --wrong-id         answer with request_id + 1000
//   --fail-above X     status error when genome[0] > X
//   --reverse K        collect K requests, answer them last-first
//   --delay-ms D       sleep before each answer
//   --ignore-shutdown  keep running after shutdown
//   --chatty           log to stderr
#include <chrono>
#include <cstdlib>
#include <iostream>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

using nlohmann::json;

namespace {
    struct Script {
        int version = 1;
        bool no_ready = false;
        bool echo = false;
        long crash_after = -1;
        long hang_after = -1;
        long garbage_after = -1;
        bool wrong_id = false;
        double fail_above = 2.0;
        std::size_t reverse = 1;
        int delay_ms = 0;
        bool ignore_shutdown = false;
        bool chatty = false;
    };

    Script parse_args(int argc, char** argv)
    {
        Script s;
        for (int i = 1; i < argc; ++i) {
            const std::string a = argv[i];
            const auto next = [&] { return std::string(argv[++i]); };
            if (a == "--version")
                s.version = std::stoi(next());
            else if (a == "--no-ready")
                s.no_ready = true;
            else if (a == "--echo")
                s.echo = true;
            else if (a == "--crash-after")
                s.crash_after = std::stol(next());
            else if (a == "--hang-after")
                s.hang_after = std::stol(next());
            else if (a == "--garbage-after")
                s.garbage_after = std::stol(next());
            else if (a == "--wrong-id")
                s.wrong_id = true;
            else if (a == "--fail-above")
                s.fail_above = std::stod(next());
            else if (a == "--reverse")
                s.reverse = std::stoul(next());
            else if (a == "--delay-ms")
                s.delay_ms = std::stoi(next());
            else if (a == "--ignore-shutdown")
                s.ignore_shutdown = true;
            else if (a == "--chatty")
                s.chatty = true;
            else {
                std::cerr << "echo_evaluator: unknown flag " << a << "\n";
                std::exit(2);
            }
        }
        return s;
    }

    void send(const json& j) { std::cout << j.dump() << "\n" << std::flush; }
} // namespace

int main(int argc, char** argv)
{
    const Script script = parse_args(argc, argv);
    std::size_t num_blocks = 0;
    long received = 0;
    std::vector<json> batch;
    std::string line;

    while (std::getline(std::cin, line)) {
        const json msg = json::parse(line, nullptr, false);
        if (msg.is_discarded()) {
            send({{"type", "fitness"}, {"request_id", 0}, {"status", "error"}, {"message", "malformed line"}});
            continue;
        }
        const std::string type = msg.value("type", "");
        if (type == "hello") {
            num_blocks = msg.at("num_blocks").get<std::size_t>();
            if (script.chatty)
                std::cerr << "echo evaluator up, " << num_blocks << " blocks\n" << std::flush;
            if (!script.no_ready)
                send({{"type", "ready"}, {"protocol_version", script.version}});
            continue;
        }
        if (type == "shutdown") {
            if (script.ignore_shutdown)
                continue;
            return 0;
        }
        if (type != "evaluate")
            continue;

        ++received;
        if (script.crash_after >= 0 && received > script.crash_after)
            std::exit(3);
        if (script.hang_after >= 0 && received > script.hang_after)
            continue;
        if (script.garbage_after >= 0 && received > script.garbage_after) {
            std::cout << "this is not json\n" << std::flush;
            continue;
        }
        batch.push_back(msg);
        if (batch.size() < script.reverse)
            continue;

        for (auto it = batch.rbegin(); it != batch.rend(); ++it) {
            const json& req = *it;
            const auto genome = req.at("genome").get<std::vector<double>>();
            const auto seeds = req.at("seeds").get<std::vector<std::uint64_t>>();
            json resp = {{"type", "fitness"}, {"request_id", req.at("request_id").get<std::uint64_t>() + (script.wrong_id ? 1000 : 0)}};
            if (genome.size() != num_blocks + 1) {
                resp["status"] = "error";
                resp["message"] = "genome length does not match num_blocks";
            }
            else if (genome[0] > script.fail_above) {
                resp["status"] = "error";
                resp["message"] = "scripted failure\nwith a newline";
            }
            else {
                const double mean = std::accumulate(genome.begin(), genome.end(), 0.0) / static_cast<double>(genome.size());
                resp["status"] = "ok";
                resp["per_seed_accuracy"] = std::vector<double>(seeds.size(), mean);
                resp["per_seed_loss"] = std::vector<double>(seeds.size(), 1.0 - mean);
                if (script.echo)
                    resp["message"] = req.dump();
            }
            if (script.delay_ms > 0)
                std::this_thread::sleep_for(std::chrono::milliseconds(script.delay_ms));
            send(resp);
        }
        batch.clear();
    }
    return 0;
}
