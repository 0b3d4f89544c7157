#include <string>

#include "httplib.h"
#include "json.hpp"

#include "flashthink/client.hpp"
#include "flashthink/errors.hpp"

namespace flashthink {

namespace {

using nlohmann::json;

json build_body(const GenerationRequest& req, const std::string& model) {
    json body;
    body["model"] = model;
    if (req.raw_context) {
        body["prompt"] = *req.raw_context;
    } else {
        json msgs = json::array();
        for (const auto& m : req.messages) {
            msgs.push_back({{"role", m.role}, {"content", m.content}});
        }
        body["messages"] = msgs;
    }
    body["temperature"] = req.sampling.temperature;
    body["max_tokens"] = req.sampling.max_tokens;
    if (!req.sampling.stop.empty()) body["stop"] = req.sampling.stop;
    body["stream"] = req.stream;
    if (req.stream) {
        body["stream_options"] = {{"include_usage", true}};
    }
    return body;
}

std::string status_category(int status) {
    if (status >= 500) return "http_5xx";
    if (status >= 400) return "http_4xx";
    return "http_" + std::to_string(status);
}

std::string error_category(httplib::Error err) {
    switch (err) {
        case httplib::Error::Connection:
        case httplib::Error::ConnectionTimeout:
        case httplib::Error::SSLConnection:
            return "connection";
        case httplib::Error::Read:
        case httplib::Error::Write:
            return "timeout";
        default:
            return "connection";
    }
}

// Incremental SSE frame decoder plus delta normalization: deltas arriving in
// a dedicated reasoning field are re-framed as inline think-marker text so
// downstream segmentation sees one shape.
class SseState {
public:
    SseState(const HttpClientConfig& cfg, const StreamCallback& cb) : cfg_(cfg), cb_(cb) {}

    bool consume(const char* data, std::size_t len) {
        buffer_.append(data, len);
        std::size_t nl;
        while ((nl = buffer_.find('\n')) != std::string::npos) {
            std::string line = buffer_.substr(0, nl);
            buffer_.erase(0, nl + 1);
            if (!line.empty() && line.back() == '\r') line.pop_back();
            if (!handle_line(line)) return false;
        }
        return true;
    }

    bool saw_done() const { return saw_done_; }
    bool cancelled() const { return cancelled_; }
    bool emitted_text() const { return emitted_text_; }
    std::size_t text_bytes_tokens_estimate() const { return estimate_tokens(all_text_); }
    std::optional<std::size_t> reported_usage() const { return usage_; }
    bool in_reasoning() const { return reasoning_state_ == ReasoningState::Open; }

    bool emit(const StreamEvent& e) {
        if (e.kind == StreamEvent::Kind::TextDelta) {
            emitted_text_ = true;
            all_text_ += e.text;
        }
        if (!cb_(e)) {
            cancelled_ = true;
            return false;
        }
        return true;
    }

    bool emit_text(const std::string& t) {
        if (t.empty()) return true;
        return emit(StreamEvent::delta(t, usage_));
    }

    bool close_reasoning() {
        if (reasoning_state_ == ReasoningState::Open) {
            reasoning_state_ = ReasoningState::Closed;
            return emit_text(cfg_.close_marker);
        }
        return true;
    }

private:
    enum class ReasoningState { None, Open, Closed };

    bool handle_line(const std::string& line) {
        if (line.rfind("data:", 0) != 0) return true;  // comments/other fields ignored
        std::string payload = line.substr(5);
        if (!payload.empty() && payload.front() == ' ') payload.erase(0, 1);
        if (payload == "[DONE]") {
            saw_done_ = true;
            return true;
        }
        json j = json::parse(payload, nullptr, false);
        if (j.is_discarded()) return true;  // tolerate keep-alive noise

        if (j.contains("usage") && j["usage"].is_object() &&
            j["usage"].contains("completion_tokens")) {
            usage_ = j["usage"]["completion_tokens"].get<std::size_t>();
            if (!emit(StreamEvent::usage(*usage_))) return false;
        }
        if (!j.contains("choices") || !j["choices"].is_array() || j["choices"].empty()) {
            return true;
        }
        const json& delta = j["choices"][0].contains("delta") ? j["choices"][0]["delta"] : json::object();
        if (delta.contains("reasoning_content") && delta["reasoning_content"].is_string()) {
            std::string r = delta["reasoning_content"].get<std::string>();
            if (!r.empty()) {
                if (reasoning_state_ == ReasoningState::None) {
                    reasoning_state_ = ReasoningState::Open;
                    if (!emit_text(cfg_.open_marker)) return false;
                }
                if (!emit_text(r)) return false;
            }
        }
        if (delta.contains("content") && delta["content"].is_string()) {
            std::string c = delta["content"].get<std::string>();
            if (!c.empty()) {
                if (!close_reasoning()) return false;
                if (!emit_text(c)) return false;
            }
        }
        return true;
    }

    const HttpClientConfig& cfg_;
    const StreamCallback& cb_;
    std::string buffer_;
    std::string all_text_;
    std::optional<std::size_t> usage_;
    ReasoningState reasoning_state_ = ReasoningState::None;
    bool saw_done_ = false;
    bool cancelled_ = false;
    bool emitted_text_ = false;
};

}  // namespace

HttpClient::HttpClient(HttpClientConfig cfg) : cfg_(std::move(cfg)) {
    if (cfg_.base_url.empty()) throw InvalidConfig("http client needs a base_url");
}

bool HttpClient::probe() {
    httplib::Client cli(cfg_.base_url);
    cli.set_connection_timeout(5, 0);
    cli.set_read_timeout(5, 0);
    auto res = cli.Get("/healthz");
    if (!res) res = cli.Get("/v1/models");
    return static_cast<bool>(res);
}

void HttpClient::stream_generate(const GenerationRequest& req, const StreamCallback& cb) {
    req.validate();

    httplib::Client cli(cfg_.base_url);
    cli.set_connection_timeout(cfg_.connect_timeout_s, 0);
    cli.set_read_timeout(cfg_.read_timeout_s, 0);
    cli.set_write_timeout(cfg_.read_timeout_s, 0);

    httplib::Headers headers;
    if (!cfg_.api_key.empty()) {
        headers.emplace("Authorization", "Bearer " + cfg_.api_key);
    }

    std::string body = build_body(req, cfg_.model).dump();
    const std::string path = "/v1/chat/completions";

    if (!req.stream) {
        auto res = cli.Post(path, headers, body, "application/json");
        if (!res) {
            cb(StreamEvent::upstream_error(error_category(res.error()), httplib::to_string(res.error())));
            return;
        }
        if (res->status != 200) {
            cb(StreamEvent::upstream_error(status_category(res->status), res->body.substr(0, 300)));
            return;
        }
        json j = json::parse(res->body, nullptr, false);
        if (j.is_discarded() || !j.contains("choices") || j["choices"].empty()) {
            cb(StreamEvent::upstream_error("http_5xx", "malformed completion body"));
            return;
        }
        const json& msg = j["choices"][0].contains("message") ? j["choices"][0]["message"]
                                                              : j["choices"][0];
        std::string text;
        if (msg.contains("reasoning_content") && msg["reasoning_content"].is_string()) {
            text += cfg_.open_marker + msg["reasoning_content"].get<std::string>() + cfg_.close_marker;
        }
        if (msg.contains("content") && msg["content"].is_string()) {
            text += msg["content"].get<std::string>();
        } else if (msg.contains("text") && msg["text"].is_string()) {
            text += msg["text"].get<std::string>();
        }
        std::size_t tokens = estimate_tokens(text);
        if (j.contains("usage") && j["usage"].contains("completion_tokens")) {
            tokens = j["usage"]["completion_tokens"].get<std::size_t>();
        }
        if (!cb(StreamEvent::delta(text, tokens))) return;
        if (!cb(StreamEvent::usage(tokens))) return;
        cb(StreamEvent::done());
        return;
    }

    SseState sse(cfg_, cb);
    int status = 0;

    httplib::Request hreq;
    hreq.method = "POST";
    hreq.path = path;
    hreq.headers = headers;
    hreq.body = body;
    hreq.set_header("Content-Type", "application/json");
    hreq.set_header("Accept", "text/event-stream");
    hreq.response_handler = [&](const httplib::Response& res) {
        status = res.status;
        return true;
    };
    std::string error_body;
    hreq.content_receiver = [&](const char* data, std::size_t len, std::uint64_t, std::uint64_t) {
        if (status != 200) {
            if (error_body.size() < 300) {
                error_body.append(data, std::min<std::size_t>(len, 300 - error_body.size()));
            }
            return true;
        }
        return sse.consume(data, len);
    };

    auto res = cli.send(hreq);

    if (sse.cancelled()) return;  // consumer hung up; no terminal event owed
    if (status != 0 && status != 200) {
        cb(StreamEvent::upstream_error(status_category(status), error_body));
        return;
    }
    if (!res && res.error() != httplib::Error::Canceled) {
        cb(StreamEvent::upstream_error(error_category(res.error()), httplib::to_string(res.error())));
        return;
    }
    if (!sse.close_reasoning()) return;  // stream ended inside the reasoning field
    std::size_t final_tokens =
        sse.reported_usage() ? *sse.reported_usage() : sse.text_bytes_tokens_estimate();
    if (sse.emitted_text()) {
        if (!cb(StreamEvent::usage(final_tokens))) return;
    }
    cb(StreamEvent::done());
}

}  // namespace flashthink
