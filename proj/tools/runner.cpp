#include <atomic>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <thread>

#include <CLI11.hpp>

#include "hnav/hnav.hpp"

namespace {

std::atomic<bool> g_stop{false};

void on_signal(int) { g_stop = true; }

int serve(const std::optional<std::string>& scenario_path, int port, int tick_ms) {
    hnav::gateway::SessionManager manager;
    if (scenario_path) {
        std::ifstream in(*scenario_path);
        if (!in) throw hnav::SchemaError("", "cannot open scenario file " + *scenario_path);
        const auto id = manager.open_session(nlohmann::json::parse(in));
        std::cout << "session " << id << " (paused; send a resume event to start)\n";
    }
    hnav::gateway::Server server(manager, port, std::chrono::milliseconds(tick_ms));
    server.start();
    std::cout << "listening on port " << server.port() << std::endl;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Run a navigation scenario headless, or host it behind the operator gateway."};
    std::string scenario_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> samples;
    std::optional<std::string> method;
    std::optional<int> port;
    bool headless = false;
    std::string out;
    std::optional<std::size_t> ticks;
    int tick_ms = 100;

    app.add_option("--scenario", scenario_path, "Scenario JSON file");
    app.add_option("--seed", seed, "Inference seed");
    app.add_option("--samples", samples, "Importance draws or MH iterations");
    app.add_option("--method", method, "Inference method")->check(CLI::IsMember({"importance", "mh", "brute"}));
    app.add_option("--serve", port, "Serve the operator gateway on PORT (0 picks a free port)");
    app.add_flag("--headless", headless, "Run to completion without the gateway");
    app.add_option("--out", out, "Write the RunLog as JSON lines to PATH");
    app.add_option("--ticks", ticks, "Tick limit override");
    app.add_option("--tick-ms", tick_ms, "Wall-clock period between gateway ticks")->check(CLI::PositiveNumber);
    CLI11_PARSE(app, argc, argv);

    try {
        if (port && headless) throw CLI::ValidationError("--serve and --headless are exclusive");
        if (port) return serve(scenario_path.empty() ? std::nullopt : std::optional(scenario_path), *port, tick_ms);
        if (scenario_path.empty()) throw CLI::RequiredError("--scenario");

        auto sc = hnav::load_scenario_file(scenario_path);
        if (seed) sc.inference.seed = *seed;
        if (samples) sc.inference.samples = *samples;
        if (method) sc.inference.method = hnav::parse_method(*method);
        if (ticks) sc.tick_limit = *ticks;

        const auto log = hnav::run(sc);
        const auto text = hnav::to_jsonl(log);
        if (!out.empty()) {
            std::ofstream f(out);
            if (!f) throw hnav::Error("IoError", "cannot write " + out);
            f << text;
        } else if (!headless) {
            std::cout << text;
        }
        const auto& s = log.summary;
        std::fprintf(stderr, "%s: %zu ticks, %s, path %.3f m, switches %zu, collisions %zu, hash %016llx\n",
                     sc.name.empty() ? scenario_path.c_str() : sc.name.c_str(), s.ticks, s.termination.c_str(),
                     s.path_length, s.component_switches, s.collisions,
                     static_cast<unsigned long long>(hnav::fnv1a(text)));
        return 0;
    } catch (const CLI::Error& e) {
        return app.exit(e);
    } catch (const hnav::Error& e) {
        std::fprintf(stderr, "error [%s]: %s\n", e.code().c_str(), e.what());
        return 2;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 2;
    }
}
