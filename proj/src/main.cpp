#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdint>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"

#include "flashthink/cli.hpp"
#include "flashthink/errors.hpp"

namespace {

std::atomic<bool> g_shutdown{false};

void handle_signal(int) { g_shutdown.store(true); }

}  // namespace

int main(int argc, char** argv) {
    using namespace flashthink;

    CLI::App app{"Early-exit orchestrator for reasoning models"};
    app.require_subcommand(1);
    app.fallthrough();

    std::string config_path;
    std::string fixture_dir;
    std::uint64_t seed = 0;
    bool json = false;
    app.add_option("--config", config_path, "JSON config file");
    app.add_option("--fixture-dir", fixture_dir,
                   "Directory with reasoner.jsonl/verifier.jsonl; switches all upstreams to "
                   "scripted fixtures");
    app.add_option("--seed", seed, "Seed for sampled choices (few-shot selection)");
    app.add_flag("--json", json, "Machine-readable output");

    // Per-run overrides of the config file.
    std::optional<double> temperature;
    std::optional<std::size_t> max_reasoning_tokens;
    std::optional<std::size_t> min_chunks;
    std::optional<std::size_t> max_verifier_calls;
    bool speculative = false;

    auto* run_cmd = app.add_subcommand("run", "Answer one question with early exit");
    RunOptions run_opts;
    run_cmd->add_option("question", run_opts.question, "Question text")->required();
    run_cmd->add_flag("--baseline", run_opts.baseline, "Plain generation, no early exit");
    run_cmd->add_option("--temperature", temperature, "Sampling temperature");
    run_cmd->add_option("--max-reasoning-tokens", max_reasoning_tokens, "Reasoning budget");
    run_cmd->add_option("--min-chunks", min_chunks, "Chunks to stream before the first check");
    run_cmd->add_option("--max-verifier-calls", max_verifier_calls, "Verification call budget");
    run_cmd->add_flag("--speculative", speculative, "Keep streaming while checks are in flight");

    auto* bench_cmd = app.add_subcommand("bench", "Evaluate a benchmark file");
    BenchCmdOptions bench_opts;
    std::string mode_name = "flashthink";
    bench_cmd->add_option("dataset", bench_opts.dataset_path, "Benchmark JSONL")->required();
    bench_cmd->add_option("--mode", mode_name, "baseline | flashthink | both");
    bench_cmd->add_option("--out", bench_opts.report_path, "Report file path");
    bench_cmd->add_option("--workers", bench_opts.workers, "Worker pool size");
    bench_cmd->add_option("--train", bench_opts.train_path, "Exemplar pool (JSONL)");
    bench_cmd->add_option("--shots", bench_opts.shots, "Few-shot exemplars per item");

    auto* ft2_cmd = app.add_subcommand("ft2", "Build a verifier training set from prefixes");
    Ft2CmdOptions ft2_opts;
    ft2_cmd->add_option("dataset", ft2_opts.dataset_path, "Benchmark JSONL")->required();
    ft2_cmd->add_option("--out", ft2_opts.out_path, "Output JSONL path");
    ft2_cmd->add_option("--stride", ft2_opts.stride, "Keep every Nth prefix");
    ft2_cmd->add_option("--epsilon", ft2_opts.epsilon, "Graded consistency band");
    ft2_cmd->add_option("--threshold", ft2_opts.correct_threshold, "Score counted as correct");
    ft2_cmd->add_option("--benchmark", ft2_opts.benchmark_name, "Provenance benchmark name");
    ft2_cmd->add_option("--workers", ft2_opts.workers, "Worker pool size");

    auto* serve_cmd = app.add_subcommand("serve", "Run the gateway until SIGINT/SIGTERM");
    std::optional<int> port_override;
    std::optional<std::string> host_override;
    serve_cmd->add_option("--port", port_override, "Listen port (0 picks a free one)");
    serve_cmd->add_option("--host", host_override, "Listen host");

    auto* fixtures_cmd = app.add_subcommand("fixtures", "Validate fixture files");
    FixturesCmdOptions fixtures_opts;
    fixtures_cmd->add_option("paths", fixtures_opts.paths, "Fixture JSONL files")->required();

    CLI11_PARSE(app, argc, argv);

    try {
        AppConfig cfg = config_path.empty() ? default_app_config() : load_app_config(config_path);
        if (temperature) cfg.run.temperature = *temperature;
        if (max_reasoning_tokens) cfg.run.max_reasoning_tokens = *max_reasoning_tokens;
        if (min_chunks) cfg.run.min_chunks_before_check = *min_chunks;
        if (max_verifier_calls) cfg.run.max_verifier_calls = *max_verifier_calls;
        if (speculative) cfg.run.speculative = true;
        cfg.run.validate();
        cfg.gateway.run_defaults = cfg.run;

        if (*fixtures_cmd) {
            fixtures_opts.json = json;
            return cmd_fixtures(fixtures_opts, std::cout, std::cerr);
        }

        ClientSet clients = make_clients(cfg, fixture_dir);

        if (*run_cmd) {
            run_opts.json = json;
            return cmd_run(cfg, clients, run_opts, std::cout, std::cerr);
        }
        if (*bench_cmd) {
            bench_opts.mode = bench_mode_from_name(mode_name);
            bench_opts.seed = seed;
            bench_opts.json = json;
            return cmd_bench(cfg, clients, bench_opts, std::cout, std::cerr);
        }
        if (*ft2_cmd) {
            ft2_opts.json = json;
            return cmd_ft2(cfg, clients, ft2_opts, std::cout, std::cerr);
        }
        if (*serve_cmd) {
            if (host_override) cfg.gateway.listen_host = *host_override;
            if (port_override) cfg.gateway.listen_port = *port_override;
            auto gateway = build_gateway(cfg, clients);
            int port = gateway->start();
            std::cout << "listening on " << cfg.gateway.listen_host << ":" << port << std::endl;
            std::signal(SIGINT, handle_signal);
            std::signal(SIGTERM, handle_signal);
            while (!g_shutdown.load())
                std::this_thread::sleep_for(std::chrono::milliseconds(50));
            std::cout << "draining" << std::endl;
            gateway->stop();
            return kExitOk;
        }
    } catch (const BackendError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const ReasonerError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitConfig;
    }
    return kExitOk;
}
