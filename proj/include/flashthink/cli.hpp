#pragma once

#include <cstddef>
#include <iosfwd>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "flashthink/bench.hpp"
#include "flashthink/gateway.hpp"
#include "flashthink/orchestrator.hpp"

namespace flashthink {

// Process exit codes shared by every verb.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;   // bad flags, config, fixtures, datasets
inline constexpr int kExitRuntime = 3;  // upstream/runtime failure

// Everything a verb needs, read from one JSON config file. All sections are
// optional; omitted fields keep these defaults.
struct AppConfig {
    UpstreamConfig reasoner;
    UpstreamConfig verifier;
    TemplateFamily verifier_family = TemplateFamily::Qwen2_5;
    RunConfig run;
    GatewayConfig gateway;  // reasoner/verifier/run_defaults mirrored on load
    std::size_t bench_workers = 4;
};

// Parses the config file. Unknown keys are rejected so typos fail loudly.
// Throws IoError (unreadable) or InvalidConfig (malformed).
AppConfig load_app_config(const std::string& path);
AppConfig default_app_config();

struct ClientSet {
    std::shared_ptr<ModelClient> reasoner;
    std::shared_ptr<ModelClient> verifier;  // null when not configured
};

// With a fixture dir, loads <dir>/reasoner.jsonl (required) and
// <dir>/verifier.jsonl (if present) as scripted clients; otherwise builds
// HTTP clients from the config, resolving API keys from the environment.
ClientSet make_clients(const AppConfig& cfg, const std::string& fixture_dir);

struct RunOptions {
    std::string question;
    bool baseline = false;
    bool json = false;
};

struct BenchCmdOptions {
    std::string dataset_path;
    BenchMode mode = BenchMode::Flashthink;
    std::string report_path = "bench_report.json";
    std::optional<std::size_t> workers;  // default: config bench.workers
    std::string train_path;              // few-shot exemplar pool
    std::size_t shots = 0;
    std::uint64_t seed = 0;
    bool json = false;
};

struct Ft2CmdOptions {
    std::string dataset_path;
    std::string out_path = "ft2_dataset.jsonl";
    std::size_t stride = 1;
    double epsilon = 0.0;
    double correct_threshold = 1.0;
    std::string benchmark_name;  // defaults to the dataset filename
    std::optional<std::size_t> workers;
    bool json = false;
};

struct FixturesCmdOptions {
    std::vector<std::string> paths;
    bool json = false;
};

int cmd_run(const AppConfig& cfg, const ClientSet& clients, const RunOptions& opts,
            std::ostream& out, std::ostream& err);
int cmd_bench(const AppConfig& cfg, const ClientSet& clients, const BenchCmdOptions& opts,
              std::ostream& out, std::ostream& err);
int cmd_ft2(const AppConfig& cfg, const ClientSet& clients, const Ft2CmdOptions& opts,
            std::ostream& out, std::ostream& err);
int cmd_fixtures(const FixturesCmdOptions& opts, std::ostream& out, std::ostream& err);

// Gateway wired from the config with the given clients; caller runs
// start()/stop() around its serve loop.
std::unique_ptr<Gateway> build_gateway(const AppConfig& cfg, const ClientSet& clients);

}  // namespace flashthink
