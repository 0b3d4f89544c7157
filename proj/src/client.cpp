#include "flashthink/client.hpp"

#include <cctype>
#include <chrono>
#include <fstream>
#include <sstream>
#include <thread>

#include "json.hpp"

#include "flashthink/errors.hpp"

namespace flashthink {

void GenerationRequest::validate() const {
    if (sampling.max_tokens <= 0) {
        throw InvalidConfig("max_tokens must be positive");
    }
    if (raw_context.has_value() == !messages.empty()) {
        throw InvalidConfig("request needs exactly one of messages or raw_context");
    }
}

std::string GenerationRequest::context_text() const {
    if (raw_context) return *raw_context;
    std::string out;
    for (std::size_t i = 0; i < messages.size(); ++i) {
        if (i > 0) out += '\n';
        out += messages[i].content;
    }
    return out;
}

StreamEvent StreamEvent::delta(std::string t, std::optional<std::size_t> cum) {
    StreamEvent e;
    e.kind = Kind::TextDelta;
    e.text = std::move(t);
    e.cumulative_tokens = cum;
    return e;
}

StreamEvent StreamEvent::usage(std::size_t cum) {
    StreamEvent e;
    e.kind = Kind::UsageUpdate;
    e.cumulative_tokens = cum;
    return e;
}

StreamEvent StreamEvent::done() {
    StreamEvent e;
    e.kind = Kind::Done;
    return e;
}

StreamEvent StreamEvent::upstream_error(std::string category, std::string detail) {
    StreamEvent e;
    e.kind = Kind::UpstreamError;
    e.error_category = std::move(category);
    e.error_detail = std::move(detail);
    return e;
}

GenerationResult generate_text(ModelClient& client, const GenerationRequest& req) {
    GenerationResult result;
    std::string err_category, err_detail;
    bool failed = false;
    client.stream_generate(req, [&](const StreamEvent& e) {
        switch (e.kind) {
            case StreamEvent::Kind::TextDelta:
                result.text += e.text;
                if (e.cumulative_tokens) result.tokens = *e.cumulative_tokens;
                break;
            case StreamEvent::Kind::UsageUpdate:
                if (e.cumulative_tokens) result.tokens = *e.cumulative_tokens;
                break;
            case StreamEvent::Kind::Done:
                break;
            case StreamEvent::Kind::UpstreamError:
                failed = true;
                err_category = e.error_category;
                err_detail = e.error_detail;
                break;
        }
        return true;
    });
    if (failed) {
        throw BackendError(err_category + ": " + err_detail);
    }
    if (result.tokens == 0 && !result.text.empty()) {
        result.tokens = estimate_tokens(result.text);
    }
    return result;
}

std::size_t estimate_tokens(std::string_view text) {
    std::size_t count = 0;
    bool in_run = false;
    for (char ch : text) {
        bool ws = std::isspace(static_cast<unsigned char>(ch)) != 0;
        if (!ws && !in_run) ++count;
        in_run = !ws;
    }
    return count;
}

std::string render_chat_context(const std::vector<Message>& messages) {
    std::string out;
    for (const auto& m : messages) {
        out += "<|im_start|>" + m.role + "\n" + m.content + "<|im_end|>\n";
    }
    out += "<|im_start|>assistant\n";
    return out;
}

namespace {

using nlohmann::json;

FixtureEntry parse_entry(const json& j, std::size_t line_no, const std::string& origin) {
    auto fail = [&](const std::string& what) {
        throw FixtureFormatError(origin + ":" + std::to_string(line_no) + ": " + what);
    };
    if (!j.is_object()) fail("entry must be a JSON object");

    FixtureEntry e;
    if (!j.contains("key") || !j["key"].is_string()) fail("missing string field 'key'");
    e.key = j["key"].get<std::string>();

    if (!j.contains("match") || !j["match"].is_object()) fail("missing object field 'match'");
    const json& m = j["match"];
    int matchers = 0;
    if (m.contains("prompt")) {
        e.match_kind = FixtureEntry::MatchKind::Exact;
        e.match_text = m["prompt"].get<std::string>();
        ++matchers;
    }
    if (m.contains("prompt_suffix")) {
        e.match_kind = FixtureEntry::MatchKind::Suffix;
        e.match_text = m["prompt_suffix"].get<std::string>();
        ++matchers;
    }
    if (m.contains("prompt_contains")) {
        e.match_kind = FixtureEntry::MatchKind::Contains;
        e.match_text = m["prompt_contains"].get<std::string>();
        ++matchers;
    }
    if (matchers != 1) fail("'match' needs exactly one of prompt, prompt_suffix, prompt_contains");

    int bodies = 0;
    if (j.contains("events")) {
        ++bodies;
        if (!j["events"].is_array()) fail("'events' must be an array");
        for (const auto& ev : j["events"]) {
            FixtureEvent fe;
            if (!ev.contains("text") || !ev["text"].is_string()) fail("event missing string 'text'");
            fe.text = ev["text"].get<std::string>();
            fe.tokens = ev.value("tokens", std::size_t{0});
            fe.delay_ms = ev.value("delay_ms", 0);
            e.events.push_back(std::move(fe));
        }
    }
    if (j.contains("responses")) {
        ++bodies;
        if (!j["responses"].is_array() || j["responses"].empty()) {
            fail("'responses' must be a non-empty array");
        }
        for (const auto& r : j["responses"]) {
            if (!r.is_string()) fail("'responses' entries must be strings");
            e.responses.push_back(r.get<std::string>());
        }
    }
    if (j.contains("error")) {
        ++bodies;
        const json& err = j["error"];
        e.has_error = true;
        e.error_category = err.value("category", "connection");
        e.error_detail = err.value("detail", "");
    }
    if (bodies != 1) fail("entry needs exactly one of events, responses, error");
    return e;
}

}  // namespace

std::vector<FixtureEntry> parse_fixture(const std::string& text, const std::string& origin) {
    std::vector<FixtureEntry> entries;
    std::istringstream in(text);
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& err) {
            throw FixtureFormatError(origin + ":" + std::to_string(line_no) + ": " + err.what());
        }
        FixtureEntry e = parse_entry(j, line_no, origin);
        for (const auto& existing : entries) {
            if (existing.key == e.key) {
                throw FixtureFormatError(origin + ":" + std::to_string(line_no) + ": duplicate key '" +
                                         e.key + "'");
            }
        }
        entries.push_back(std::move(e));
    }
    return entries;
}

std::vector<FixtureEntry> load_fixture(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FixtureFormatError(path + ": cannot open");
    }
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_fixture(buf.str(), path);
}

ScriptedClient::ScriptedClient(std::vector<FixtureEntry> entries) : entries_(std::move(entries)) {
    for (std::size_t i = 0; i < entries_.size(); ++i) {
        for (std::size_t k = i + 1; k < entries_.size(); ++k) {
            if (entries_[i].key == entries_[k].key) {
                throw FixtureFormatError("duplicate fixture key '" + entries_[i].key + "'");
            }
        }
    }
}

ScriptedClient ScriptedClient::from_file(const std::string& path) {
    return ScriptedClient(load_fixture(path));
}

const FixtureEntry* ScriptedClient::match(const std::string& context) const {
    for (const auto& e : entries_) {
        switch (e.match_kind) {
            case FixtureEntry::MatchKind::Exact:
                if (context == e.match_text) return &e;
                break;
            case FixtureEntry::MatchKind::Suffix:
                if (context.size() >= e.match_text.size() &&
                    context.compare(context.size() - e.match_text.size(), e.match_text.size(),
                                    e.match_text) == 0) {
                    return &e;
                }
                break;
            case FixtureEntry::MatchKind::Contains:
                if (context.find(e.match_text) != std::string::npos) return &e;
                break;
        }
    }
    return nullptr;
}

void ScriptedClient::stream_generate(const GenerationRequest& req, const StreamCallback& cb) {
    req.validate();
    std::string context = req.context_text();
    const FixtureEntry* entry = match(context);

    std::size_t call_index = 0;
    {
        std::lock_guard<std::mutex> lock(mu_);
        log_.push_back({entry ? entry->key : std::string(), req.request_id, context});
        if (entry) {
            call_index = per_key_calls_[entry->key]++;
        }
    }

    if (!entry) {
        cb(StreamEvent::upstream_error("unmatched", context.substr(0, 160)));
        return;
    }
    if (entry->has_error) {
        cb(StreamEvent::upstream_error(entry->error_category, entry->error_detail));
        return;
    }
    if (!entry->responses.empty()) {
        const std::string& text = entry->responses[std::min(call_index, entry->responses.size() - 1)];
        if (!cb(StreamEvent::delta(text, estimate_tokens(text)))) return;
        cb(StreamEvent::done());
        return;
    }
    bool declares_tokens = false;
    for (const auto& ev : entry->events) {
        if (ev.tokens > 0) declares_tokens = true;
    }
    std::size_t cumulative = 0;
    for (const auto& ev : entry->events) {
        if (ev.delay_ms > 0) {
            std::this_thread::sleep_for(std::chrono::milliseconds(ev.delay_ms));
        }
        cumulative += ev.tokens;
        std::optional<std::size_t> cum;
        if (declares_tokens) cum = cumulative;  // undeclared entries leave counting to the consumer
        if (!cb(StreamEvent::delta(ev.text, cum))) return;
    }
    cb(StreamEvent::done());
}

std::vector<CallRecord> ScriptedClient::call_log() const {
    std::lock_guard<std::mutex> lock(mu_);
    return log_;
}

std::size_t ScriptedClient::calls_for(const std::string& key) const {
    std::lock_guard<std::mutex> lock(mu_);
    auto it = per_key_calls_.find(key);
    return it == per_key_calls_.end() ? 0 : it->second;
}

}  // namespace flashthink
