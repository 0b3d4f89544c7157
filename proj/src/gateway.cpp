#include "flashthink/gateway.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>

#include "httplib.h"

#include "flashthink/errors.hpp"
#include "flashthink/metrics.hpp"

namespace flashthink {

namespace {

std::uint64_t now_ms() {
    return static_cast<std::uint64_t>(std::chrono::duration_cast<std::chrono::milliseconds>(
                                          std::chrono::system_clock::now().time_since_epoch())
                                          .count());
}

void json_response(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void error_response(httplib::Response& res, int status, const std::string& type,
                    const std::string& message) {
    json_response(res, status, {{"error", {{"type", type}, {"message", message}}}});
}

struct ParsedRequest {
    PromptRecord prompt;
    bool stream = false;
    RunConfig cfg;
    ReasoningVisibility visibility = ReasoningVisibility::FullKept;
    bool flashthink_enabled = true;
    bool shadow = false;
};

// Releases an admitted session slot on every exit path.
struct SlotRelease {
    std::atomic<std::size_t>& active;
    ~SlotRelease() { active.fetch_sub(1); }
};

}  // namespace

const char* visibility_name(ReasoningVisibility v) {
    return v == ReasoningVisibility::FullKept ? "full_kept" : "none";
}

ReasoningVisibility visibility_from_name(const std::string& name) {
    if (name == "full_kept") return ReasoningVisibility::FullKept;
    if (name == "none") return ReasoningVisibility::None;
    throw InvalidConfig("unknown reasoning_visibility '" + name + "'");
}

void GatewayConfig::validate() const {
    if (concurrency_limit < 1) throw InvalidConfig("gateway: concurrency_limit must be >= 1");
    if (shadow_baseline < 0.0 || shadow_baseline > 1.0)
        throw InvalidConfig("gateway: shadow_baseline must be in [0,1]");
    if (drain_grace_ms < 0) throw InvalidConfig("gateway: negative drain grace");
    run_defaults.validate();
    bool both_configured = !reasoner.base_url.empty() && !verifier.base_url.empty();
    if (both_configured && !allow_shared_upstreams && reasoner.base_url == verifier.base_url &&
        reasoner.model == verifier.model) {
        throw InvalidConfig(
            "gateway: reasoner and verifier upstreams coincide; set allow_shared_upstreams");
    }
}

struct Gateway::Session {
    std::string request_id;
    std::uint64_t started_ms = 0;
    std::uint64_t finished_ms = 0;
    int status = 0;
    std::string exit_kind;
    std::size_t chunks_kept = 0;
    std::size_t verifier_calls = 0;
    std::size_t reasoning_tokens = 0;
    std::size_t wasted_tokens = 0;
    std::size_t fail_open_count = 0;
    std::optional<double> efficiency;
    std::string error;
};

Gateway::Gateway(GatewayConfig cfg, std::shared_ptr<ModelClient> reasoner,
                 std::shared_ptr<ModelClient> verifier)
    : cfg_(std::move(cfg)),
      reasoner_(std::move(reasoner)),
      verifier_(std::move(verifier)),
      tmpl_(PromptTemplate::builtin(cfg_.verifier_family)),
      server_(std::make_unique<httplib::Server>()) {
    cfg_.validate();
    if (!reasoner_) throw InvalidConfig("gateway: null reasoner client");
    if (cfg_.flashthink_enabled && !verifier_)
        throw InvalidConfig("gateway: flashthink enabled without a verifier client");

    server_->Post("/v1/chat/completions", [this](const httplib::Request& req,
                                                 httplib::Response& res) {
        handle_chat_completion(req, res);
    });
    server_->Get("/healthz", [this](const httplib::Request& req, httplib::Response& res) {
        handle_health(req, res);
    });
    server_->Get("/metrics", [this](const httplib::Request& req, httplib::Response& res) {
        handle_metrics(req, res);
    });
}

Gateway::~Gateway() { stop(); }

int Gateway::start() {
    if (started_.exchange(true)) return port_;
    if (cfg_.listen_port == 0) {
        port_ = server_->bind_to_any_port(cfg_.listen_host);
        if (port_ <= 0) throw IoError("gateway: cannot bind " + cfg_.listen_host);
    } else {
        if (!server_->bind_to_port(cfg_.listen_host, cfg_.listen_port))
            throw IoError("gateway: cannot bind " + cfg_.listen_host + ":" +
                          std::to_string(cfg_.listen_port));
        port_ = cfg_.listen_port;
    }
    serve_thread_ = std::thread([this] { server_->listen_after_bind(); });
    auto deadline = std::chrono::steady_clock::now() + std::chrono::seconds(5);
    while (!server_->is_running()) {
        if (std::chrono::steady_clock::now() > deadline) {
            server_->stop();
            if (serve_thread_.joinable()) serve_thread_.join();
            throw IoError("gateway: server did not come up");
        }
        std::this_thread::sleep_for(std::chrono::milliseconds(1));
    }
    return port_;
}

void Gateway::stop() {
    if (!started_.load()) return;
    if (draining_.exchange(true)) return;  // another caller is already draining
    auto deadline = std::chrono::steady_clock::now() + std::chrono::milliseconds(cfg_.drain_grace_ms);
    while (active_.load() > 0 && std::chrono::steady_clock::now() < deadline)
        std::this_thread::sleep_for(std::chrono::milliseconds(5));
    server_->stop();
    if (serve_thread_.joinable()) serve_thread_.join();
}

bool Gateway::running() const { return started_.load() && server_->is_running(); }

GatewayStats Gateway::stats() const {
    std::lock_guard<std::mutex> lk(stats_mu_);
    GatewayStats s = stats_;
    s.shadow_sessions = shadow_count_;
    s.shadow_efficiency_mean = shadow_count_ ? shadow_eff_sum_ / double(shadow_count_) : 0.0;
    return s;
}

void Gateway::bump_exit_counter(const std::string& exit_kind) {
    std::lock_guard<std::mutex> lk(stats_mu_);
    if (exit_kind == "early_exit") ++stats_.sessions_early_exit;
    else if (exit_kind == "natural_end") ++stats_.sessions_natural_end;
    else if (exit_kind == "length_cap") ++stats_.sessions_length_cap;
    else ++stats_.sessions_error;
}

bool Gateway::shadow_due() {
    if (cfg_.shadow_baseline <= 0.0) return false;
    std::lock_guard<std::mutex> lk(stats_mu_);
    std::uint64_t n = ++shadow_sampled_;
    double f = cfg_.shadow_baseline;
    return std::floor(double(n) * f) > std::floor(double(n - 1) * f);
}

void Gateway::record_session(const Session& s) {
    if (cfg_.session_log_path.empty()) return;
    nlohmann::json j = {
        {"request_id", s.request_id},
        {"started_ms", s.started_ms},
        {"finished_ms", s.finished_ms},
        {"status", s.status},
        {"exit_kind", s.exit_kind},
        {"chunks_kept", s.chunks_kept},
        {"verifier_calls", s.verifier_calls},
        {"reasoning_tokens", s.reasoning_tokens},
        {"wasted_tokens", s.wasted_tokens},
        {"fail_open_count", s.fail_open_count},
    };
    if (s.efficiency) j["efficiency"] = *s.efficiency;
    if (!s.error.empty()) j["error"] = s.error;
    std::lock_guard<std::mutex> lk(log_mu_);
    std::ofstream out(cfg_.session_log_path, std::ios::app | std::ios::binary);
    if (out) out << j.dump() << "\n";
}

void Gateway::handle_chat_completion(const httplib::Request& req, httplib::Response& res) {
    Session session;
    session.request_id = "req-" + std::to_string(request_counter_.fetch_add(1) + 1);
    session.started_ms = now_ms();
    auto finish = [&](int status) {
        session.status = status;
        session.finished_ms = now_ms();
        record_session(session);
    };

    if (!cfg_.bearer_token.empty() &&
        req.get_header_value("Authorization") != "Bearer " + cfg_.bearer_token) {
        {
            std::lock_guard<std::mutex> lk(stats_mu_);
            ++stats_.sessions_invalid;
        }
        error_response(res, 401, "authentication_error", "bad bearer token");
        session.error = "unauthorized";
        finish(401);
        return;
    }

    ParsedRequest parsed;
    parsed.cfg = cfg_.run_defaults;
    parsed.visibility = cfg_.visibility;
    parsed.flashthink_enabled = cfg_.flashthink_enabled;
    try {
        nlohmann::json body = nlohmann::json::parse(req.body);
        if (!body.is_object()) throw InvalidConfig("body must be a JSON object");
        if (body.contains("messages")) {
            if (!body["messages"].is_array() || body["messages"].empty())
                throw InvalidConfig("'messages' must be a non-empty array");
            for (const auto& m : body["messages"]) {
                if (!m.contains("role") || !m.contains("content") || !m["role"].is_string() ||
                    !m["content"].is_string())
                    throw InvalidConfig("each message needs string 'role' and 'content'");
                parsed.prompt.messages.push_back(
                    {m["role"].get<std::string>(), m["content"].get<std::string>()});
                if (m["role"] == "user") parsed.prompt.question = m["content"];
            }
            if (parsed.prompt.question.empty())
                throw InvalidConfig("'messages' contains no user turn");
        } else if (body.contains("prompt") && body["prompt"].is_string()) {
            parsed.prompt.question = body["prompt"].get<std::string>();
            parsed.prompt.raw_context = body["prompt"].get<std::string>();
        } else {
            throw InvalidConfig("request needs 'messages' or 'prompt'");
        }
        if (body.contains("stream")) {
            if (!body["stream"].is_boolean()) throw InvalidConfig("'stream' must be boolean");
            parsed.stream = body["stream"].get<bool>();
        }

        auto allow = [&](const std::string& key) {
            if (!cfg_.override_allowlist.count(key))
                throw InvalidConfig("override '" + key + "' is not allowed");
        };
        if (body.contains("temperature")) {
            allow("temperature");
            parsed.cfg.temperature = body["temperature"].get<double>();
        }
        if (body.contains("max_tokens")) {
            allow("max_tokens");
            parsed.cfg.max_answer_tokens = body["max_tokens"].get<std::size_t>();
        }
        if (body.contains("flashthink")) {
            const auto& ft = body["flashthink"];
            if (!ft.is_object()) throw InvalidConfig("'flashthink' must be an object");
            for (const auto& [key, value] : ft.items()) {
                allow(key);
                if (key == "min_chunks_before_check")
                    parsed.cfg.min_chunks_before_check = value.get<std::size_t>();
                else if (key == "max_verifier_calls")
                    parsed.cfg.max_verifier_calls = value.get<std::size_t>();
                else if (key == "speculative")
                    parsed.cfg.speculative = value.get<bool>();
                else if (key == "reasoning_visibility")
                    parsed.visibility = visibility_from_name(value.get<std::string>());
                else if (key == "enabled")
                    parsed.flashthink_enabled = value.get<bool>();
                else if (key == "temperature")
                    parsed.cfg.temperature = value.get<double>();
                else if (key == "max_tokens")
                    parsed.cfg.max_answer_tokens = value.get<std::size_t>();
            }
        }
        parsed.cfg.validate();
    } catch (const std::exception& e) {
        {
            std::lock_guard<std::mutex> lk(stats_mu_);
            ++stats_.sessions_invalid;
        }
        error_response(res, 400, "invalid_request_error", e.what());
        session.error = e.what();
        finish(400);
        return;
    }

    // Reserve a slot first so the limit cannot be raced past, then admit or
    // roll back.
    std::size_t occupancy = active_.fetch_add(1) + 1;
    if (draining_.load() || occupancy > cfg_.concurrency_limit) {
        active_.fetch_sub(1);
        {
            std::lock_guard<std::mutex> lk(stats_mu_);
            ++stats_.sessions_rejected;
        }
        error_response(res, 503, "overloaded_error",
                       draining_.load() ? "shutting down" : "concurrency limit reached");
        session.error = "rejected";
        finish(503);
        return;
    }
    SlotRelease guard{active_};
    std::size_t prev_peak = peak_.load();
    while (occupancy > prev_peak && !peak_.compare_exchange_weak(prev_peak, occupancy)) {
    }

    if (parsed.flashthink_enabled && !verifier_) {
        error_response(res, 400, "invalid_request_error", "no verifier configured");
        session.error = "no verifier";
        finish(400);
        return;
    }

    // Pass-through: forward the request and echo the upstream text verbatim.
    if (!parsed.flashthink_enabled) {
        GenerationRequest up;
        if (parsed.prompt.raw_context)
            up.raw_context = parsed.prompt.raw_context;
        else
            up.messages = parsed.prompt.effective_messages();
        up.sampling.temperature = parsed.cfg.temperature;
        up.sampling.max_tokens = static_cast<int>(parsed.cfg.max_reasoning_tokens);
        up.request_id = session.request_id;
        std::string text;
        std::string upstream_error;
        std::size_t tokens = 0;
        reasoner_->stream_generate(up, [&](const StreamEvent& ev) {
            if (ev.kind == StreamEvent::Kind::TextDelta) text += ev.text;
            if (ev.kind == StreamEvent::Kind::UsageUpdate && ev.cumulative_tokens)
                tokens = *ev.cumulative_tokens;
            if (ev.kind == StreamEvent::Kind::UpstreamError)
                upstream_error = ev.error_category + ": " + ev.error_detail;
            return true;
        });
        if (!upstream_error.empty()) {
            bump_exit_counter("error");
            error_response(res, 502, "upstream_error", upstream_error);
            session.error = upstream_error;
            session.exit_kind = "error";
            finish(502);
            return;
        }
        if (tokens == 0) tokens = estimate_tokens(text);
        session.exit_kind = "natural_end";
        session.reasoning_tokens = 0;
        bump_exit_counter("natural_end");
        nlohmann::json out = {
            {"id", session.request_id},
            {"object", "chat.completion"},
            {"model", cfg_.reasoner.model},
            {"choices",
             {{{"index", 0},
               {"message", {{"role", "assistant"}, {"content", text}}},
               {"finish_reason", "stop"}}}},
            {"usage", {{"completion_tokens", tokens}}},
        };
        json_response(res, 200, out);
        finish(200);
        return;
    }

    FlashThinkResult result = run_flashthink(*reasoner_, *verifier_, tmpl_, parsed.prompt,
                                             parsed.cfg);
    session.exit_kind = exit_kind_name(result.exit_kind);
    session.chunks_kept = result.chunks_kept;
    session.verifier_calls = result.verifier_calls;
    session.reasoning_tokens = result.reasoning_tokens;
    session.wasted_tokens = result.wasted_tokens;
    session.fail_open_count = result.fail_open_count;

    if (result.exit_kind == ExitKind::Error) {
        bump_exit_counter("error");
        error_response(res, 502, "upstream_error",
                       result.error_detail.empty() ? "reasoner failed" : result.error_detail);
        session.error = result.error_detail;
        finish(502);
        return;
    }

    std::optional<double> shadow_eff;
    if (shadow_due()) {
        FlashThinkResult base = run_baseline(*reasoner_, parsed.prompt, parsed.cfg);
        if (base.exit_kind != ExitKind::Error && base.reasoning_tokens > 0) {
            shadow_eff = efficiency(base.reasoning_tokens, result.reasoning_tokens).efficiency;
            std::lock_guard<std::mutex> lk(stats_mu_);
            shadow_eff_sum_ += *shadow_eff;
            ++shadow_count_;
        }
    }
    session.efficiency = shadow_eff;

    bump_exit_counter(session.exit_kind);
    {
        std::lock_guard<std::mutex> lk(stats_mu_);
        stats_.reasoning_tokens_kept += result.reasoning_tokens;
        stats_.reasoning_tokens_wasted += result.wasted_tokens;
        stats_.verifier_calls += result.verifier_calls;
        stats_.fail_opens += result.fail_open_count;
    }

    nlohmann::json extension = {
        {"chunks_kept", result.chunks_kept},
        {"verifier_calls", result.verifier_calls},
        {"exit_kind", session.exit_kind},
        {"reasoning_tokens", result.reasoning_tokens},
        {"wasted_tokens", result.wasted_tokens},
        {"fail_open_count", result.fail_open_count},
    };
    if (shadow_eff) extension["efficiency"] = *shadow_eff;

    const char* finish_reason = result.exit_kind == ExitKind::LengthCap ? "length" : "stop";
    bool show_reasoning = parsed.visibility == ReasoningVisibility::FullKept;

    if (!parsed.stream) {
        nlohmann::json message = {{"role", "assistant"}, {"content", result.answer}};
        if (show_reasoning) message["reasoning_content"] = result.reasoning_content;
        nlohmann::json out = {
            {"id", session.request_id},
            {"object", "chat.completion"},
            {"model", cfg_.reasoner.model},
            {"choices",
             {{{"index", 0}, {"message", message}, {"finish_reason", finish_reason}}}},
            {"usage",
             {{"completion_tokens", result.reasoning_tokens + result.answer_tokens},
              {"reasoning_tokens", result.reasoning_tokens}}},
            {"flashthink", extension},
        };
        json_response(res, 200, out);
        finish(200);
        return;
    }

    // SSE: reasoning delta (when visible), answer delta, closing chunk with
    // the extension block, then the done marker.
    auto chunk = [&](const nlohmann::json& delta, const nlohmann::json* fin) {
        nlohmann::json c = {
            {"id", session.request_id},
            {"object", "chat.completion.chunk"},
            {"model", cfg_.reasoner.model},
            {"choices",
             {{{"index", 0},
               {"delta", delta},
               {"finish_reason", fin ? nlohmann::json(*fin) : nlohmann::json()}}}},
        };
        return "data: " + c.dump() + "\n\n";
    };
    std::string payload;
    payload += chunk({{"role", "assistant"}}, nullptr);
    if (show_reasoning && !result.reasoning_content.empty())
        payload += chunk({{"reasoning_content", result.reasoning_content}}, nullptr);
    if (!result.answer.empty()) payload += chunk({{"content", result.answer}}, nullptr);
    nlohmann::json fin = finish_reason;
    nlohmann::json last = {
        {"id", session.request_id},
        {"object", "chat.completion.chunk"},
        {"model", cfg_.reasoner.model},
        {"choices", {{{"index", 0}, {"delta", nlohmann::json::object()}, {"finish_reason", fin}}}},
        {"flashthink", extension},
    };
    payload += "data: " + last.dump() + "\n\n";
    payload += "data: [DONE]\n\n";
    res.status = 200;
    res.set_content(payload, "text/event-stream");
    finish(200);
}

void Gateway::handle_health(const httplib::Request&, httplib::Response& res) {
    bool reasoner_ok = reasoner_ && reasoner_->probe();
    bool verifier_ok = !cfg_.flashthink_enabled || (verifier_ && verifier_->probe());
    nlohmann::json body = {
        {"status", reasoner_ok && verifier_ok ? "ok" : "degraded"},
        {"reasoner_reachable", reasoner_ok},
        {"verifier_reachable", verifier_ok},
        {"active_sessions", active_.load()},
    };
    json_response(res, 200, body);
}

std::string Gateway::metrics_text() const {
    GatewayStats s = stats();
    std::ostringstream out;
    auto counter = [&](const char* name, std::uint64_t v, const char* labels = nullptr) {
        out << name;
        if (labels) out << "{" << labels << "}";
        out << " " << v << "\n";
    };
    counter("flashthink_sessions_total", s.sessions_early_exit, "exit_kind=\"early_exit\"");
    counter("flashthink_sessions_total", s.sessions_natural_end, "exit_kind=\"natural_end\"");
    counter("flashthink_sessions_total", s.sessions_length_cap, "exit_kind=\"length_cap\"");
    counter("flashthink_sessions_total", s.sessions_error, "exit_kind=\"error\"");
    counter("flashthink_sessions_rejected_total", s.sessions_rejected);
    counter("flashthink_sessions_invalid_total", s.sessions_invalid);
    counter("flashthink_reasoning_tokens_kept_total", s.reasoning_tokens_kept);
    counter("flashthink_reasoning_tokens_wasted_total", s.reasoning_tokens_wasted);
    counter("flashthink_verifier_calls_total", s.verifier_calls);
    counter("flashthink_fail_open_total", s.fail_opens);
    counter("flashthink_active_sessions", active_.load());
    counter("flashthink_shadow_sessions_total", s.shadow_sessions);
    if (s.shadow_sessions > 0)
        out << "flashthink_shadow_efficiency_mean " << s.shadow_efficiency_mean << "\n";
    return out.str();
}

void Gateway::handle_metrics(const httplib::Request&, httplib::Response& res) {
    res.status = 200;
    res.set_content(metrics_text(), "text/plain; version=0.0.4");
}

std::unique_ptr<Gateway> make_http_gateway(const GatewayConfig& cfg) {
    auto client_for = [&](const UpstreamConfig& up) {
        HttpClientConfig hc;
        hc.base_url = up.base_url;
        hc.model = up.model;
        if (!up.api_key_env.empty()) {
            const char* v = std::getenv(up.api_key_env.c_str());
            if (v) hc.api_key = v;
        }
        return std::make_shared<HttpClient>(hc);
    };
    if (cfg.reasoner.base_url.empty())
        throw InvalidConfig("gateway: reasoner upstream base_url is required");
    std::shared_ptr<ModelClient> verifier;
    if (cfg.flashthink_enabled) {
        if (cfg.verifier.base_url.empty())
            throw InvalidConfig("gateway: verifier upstream base_url is required");
        verifier = client_for(cfg.verifier);
    }
    return std::make_unique<Gateway>(cfg, client_for(cfg.reasoner), verifier);
}

}  // namespace flashthink
