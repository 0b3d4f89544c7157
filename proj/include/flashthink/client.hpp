#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flashthink {

struct Message {
    std::string role;
    std::string content;
};

struct SamplingParams {
    double temperature = 0.7;
    int max_tokens = 32768;
    std::vector<std::string> stop;
};

// One generation request. Context is either a chat message list or a raw
// continuation string, never both.
struct GenerationRequest {
    std::vector<Message> messages;
    std::optional<std::string> raw_context;
    SamplingParams sampling;
    bool stream = true;
    std::string request_id;

    void validate() const;  // throws InvalidConfig
    // The text fixtures match against: raw_context verbatim, or the message
    // contents joined with newlines.
    std::string context_text() const;
};

struct StreamEvent {
    enum class Kind { TextDelta, UsageUpdate, Done, UpstreamError };
    Kind kind = Kind::Done;
    std::string text;                            // TextDelta payload
    std::optional<std::size_t> cumulative_tokens;  // non-decreasing when present
    std::string error_category;  // timeout | http_4xx | http_5xx | connection | unmatched
    std::string error_detail;

    static StreamEvent delta(std::string t, std::optional<std::size_t> cum = std::nullopt);
    static StreamEvent usage(std::size_t cum);
    static StreamEvent done();
    static StreamEvent upstream_error(std::string category, std::string detail);
};

// Return false to cancel the stream; no further events are delivered.
using StreamCallback = std::function<bool(const StreamEvent&)>;

class ModelClient {
public:
    virtual ~ModelClient() = default;
    // Emits zero or more TextDelta/UsageUpdate events followed by exactly one
    // Done or UpstreamError, unless the callback cancels.
    virtual void stream_generate(const GenerationRequest& req, const StreamCallback& cb) = 0;
    virtual bool probe() { return true; }
};

struct GenerationResult {
    std::string text;
    std::size_t tokens = 0;
};

// Accumulates the stream into a single result; throws BackendError on
// UpstreamError.
GenerationResult generate_text(ModelClient& client, const GenerationRequest& req);

// Crude whitespace-run token estimate, used only when a backend reports no
// usage figures.
std::size_t estimate_tokens(std::string_view text);

// ChatML-style rendering used to turn a message list into a raw continuation
// context, ending with an open assistant turn.
std::string render_chat_context(const std::vector<Message>& messages);

// --- scripted backend ---

struct FixtureEvent {
    std::string text;
    std::size_t tokens = 0;  // tokens carried by this delta
    int delay_ms = 0;
};

struct FixtureEntry {
    enum class MatchKind { Exact, Suffix, Contains };
    std::string key;
    MatchKind match_kind = MatchKind::Contains;
    std::string match_text;
    std::vector<FixtureEvent> events;      // replayed identically on every call
    std::vector<std::string> responses;    // per-call texts; last one repeats
    bool has_error = false;
    std::string error_category;
    std::string error_detail;
};

struct CallRecord {
    std::string key;  // empty when no entry matched
    std::string request_id;
    std::string context;
};

// Parses the line-delimited fixture format; throws FixtureFormatError with
// line diagnostics.
std::vector<FixtureEntry> load_fixture(const std::string& path);
std::vector<FixtureEntry> parse_fixture(const std::string& text, const std::string& origin);

class ScriptedClient : public ModelClient {
public:
    explicit ScriptedClient(std::vector<FixtureEntry> entries);
    static ScriptedClient from_file(const std::string& path);

    void stream_generate(const GenerationRequest& req, const StreamCallback& cb) override;

    std::vector<CallRecord> call_log() const;
    std::size_t calls_for(const std::string& key) const;

private:
    const FixtureEntry* match(const std::string& context) const;

    std::vector<FixtureEntry> entries_;
    mutable std::mutex mu_;
    std::vector<CallRecord> log_;
    std::map<std::string, std::size_t> per_key_calls_;
};

// --- HTTP backend (chat-completions wire format, SSE streaming) ---

struct HttpClientConfig {
    std::string base_url;  // e.g. http://127.0.0.1:8000
    std::string model;
    std::string api_key;            // resolved by the caller (env var)
    int connect_timeout_s = 120;
    int read_timeout_s = 120;
    // Markers used to frame reasoning_content deltas into inline think text.
    std::string open_marker = "<think>";
    std::string close_marker = "</think>";
};

class HttpClient : public ModelClient {
public:
    explicit HttpClient(HttpClientConfig cfg);
    void stream_generate(const GenerationRequest& req, const StreamCallback& cb) override;
    bool probe() override;

private:
    HttpClientConfig cfg_;
};

}  // namespace flashthink
