#pragma once

#include <atomic>
#include <cstdint>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>

#include "json.hpp"

#include "flashthink/client.hpp"
#include "flashthink/orchestrator.hpp"
#include "flashthink/verifier.hpp"

namespace httplib {
class Server;
struct Request;
struct Response;
}  // namespace httplib

namespace flashthink {

enum class ReasoningVisibility { FullKept, None };

const char* visibility_name(ReasoningVisibility v);
ReasoningVisibility visibility_from_name(const std::string& name);

struct UpstreamConfig {
    std::string base_url;
    std::string model;
    std::string api_key_env;  // name of the env var holding the credential
};

struct GatewayConfig {
    std::string listen_host = "127.0.0.1";
    int listen_port = 0;  // 0 picks a free port (the bound one comes back from start())
    UpstreamConfig reasoner;
    UpstreamConfig verifier;
    TemplateFamily verifier_family = TemplateFamily::Qwen2_5;
    RunConfig run_defaults;
    // Request fields callers may override; anything else in the request's
    // "flashthink" block is rejected with 400.
    std::set<std::string> override_allowlist = {
        "temperature",       "max_tokens",           "min_chunks_before_check",
        "max_verifier_calls", "speculative",          "reasoning_visibility",
        "enabled",
    };
    std::size_t concurrency_limit = 8;
    bool allow_shared_upstreams = false;
    bool flashthink_enabled = true;  // false: transparent pass-through to the reasoner
    ReasoningVisibility visibility = ReasoningVisibility::FullKept;
    // Fraction of sessions that also run an unmodified baseline to measure
    // live efficiency. 0 disables, 1 shadows every session.
    double shadow_baseline = 0.0;
    std::string session_log_path;  // empty: no session log
    std::string bearer_token;      // empty: no auth
    int drain_grace_ms = 5000;

    void validate() const;
};

// Snapshot of the gateway counters, also rendered at GET /metrics.
struct GatewayStats {
    std::uint64_t sessions_early_exit = 0;
    std::uint64_t sessions_natural_end = 0;
    std::uint64_t sessions_length_cap = 0;
    std::uint64_t sessions_error = 0;
    std::uint64_t sessions_rejected = 0;  // 503
    std::uint64_t sessions_invalid = 0;   // 400/401
    std::uint64_t reasoning_tokens_kept = 0;
    std::uint64_t reasoning_tokens_wasted = 0;
    std::uint64_t verifier_calls = 0;
    std::uint64_t fail_opens = 0;
    std::uint64_t shadow_sessions = 0;
    double shadow_efficiency_mean = 0.0;
};

class Gateway {
  public:
    Gateway(GatewayConfig cfg, std::shared_ptr<ModelClient> reasoner,
            std::shared_ptr<ModelClient> verifier);
    ~Gateway();

    Gateway(const Gateway&) = delete;
    Gateway& operator=(const Gateway&) = delete;

    // Binds and serves on a background thread; returns the bound port.
    // Throws IoError when the address cannot be bound.
    int start();

    // Stops accepting, waits for in-flight sessions up to the grace period,
    // then shuts the server down. Idempotent.
    void stop();

    bool running() const;
    int port() const { return port_; }

    GatewayStats stats() const;
    std::size_t active_sessions() const { return active_.load(); }
    std::size_t peak_sessions() const { return peak_.load(); }

    // Exposed for in-process tests; the HTTP handlers call straight into these.
    void handle_chat_completion(const httplib::Request& req, httplib::Response& res);
    void handle_health(const httplib::Request& req, httplib::Response& res);
    void handle_metrics(const httplib::Request& req, httplib::Response& res);

  private:
    struct Session;

    void record_session(const Session& s);
    void bump_exit_counter(const std::string& exit_kind);
    std::string metrics_text() const;
    bool shadow_due();

    GatewayConfig cfg_;
    std::shared_ptr<ModelClient> reasoner_;
    std::shared_ptr<ModelClient> verifier_;
    PromptTemplate tmpl_;

    std::unique_ptr<httplib::Server> server_;
    std::thread serve_thread_;
    std::atomic<bool> started_{false};
    std::atomic<bool> draining_{false};
    int port_ = 0;

    std::atomic<std::size_t> active_{0};
    std::atomic<std::size_t> peak_{0};
    std::atomic<std::uint64_t> request_counter_{0};

    mutable std::mutex stats_mu_;
    GatewayStats stats_;
    double shadow_eff_sum_ = 0.0;
    std::uint64_t shadow_count_ = 0;
    std::uint64_t shadow_sampled_ = 0;  // sessions seen by the sampler

    std::mutex log_mu_;
};

// Builds a gateway whose upstream clients are HTTP backends from the config
// (credentials resolved from the named env vars).
std::unique_ptr<Gateway> make_http_gateway(const GatewayConfig& cfg);

}  // namespace flashthink
