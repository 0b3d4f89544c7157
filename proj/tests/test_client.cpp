#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <atomic>
#include <string>
#include <thread>
#include <vector>

#include "httplib.h"
#include "json.hpp"

#include "flashthink/client.hpp"
#include "flashthink/errors.hpp"

using namespace flashthink;
using nlohmann::json;

namespace {

std::vector<StreamEvent> collect(ModelClient& client, const GenerationRequest& req) {
    std::vector<StreamEvent> events;
    client.stream_generate(req, [&](const StreamEvent& e) {
        events.push_back(e);
        return true;
    });
    return events;
}

GenerationRequest raw_request(std::string context) {
    GenerationRequest req;
    req.raw_context = std::move(context);
    return req;
}

std::string concat_text(const std::vector<StreamEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        if (e.kind == StreamEvent::Kind::TextDelta) out += e.text;
    }
    return out;
}

bool grammar_ok(const std::vector<StreamEvent>& events) {
    if (events.empty()) return false;
    for (std::size_t i = 0; i + 1 < events.size(); ++i) {
        if (events[i].kind == StreamEvent::Kind::Done ||
            events[i].kind == StreamEvent::Kind::UpstreamError) {
            return false;
        }
    }
    auto last = events.back().kind;
    return last == StreamEvent::Kind::Done || last == StreamEvent::Kind::UpstreamError;
}

FixtureEntry contains_entry(std::string key, std::string needle) {
    FixtureEntry e;
    e.key = std::move(key);
    e.match_kind = FixtureEntry::MatchKind::Contains;
    e.match_text = std::move(needle);
    return e;
}

// Minimal chat-completions stub speaking SSE; each test configures the frame
// list it should send.
class StubServer {
public:
    explicit StubServer(std::vector<std::string> sse_frames, int status = 200)
        : frames_(std::move(sse_frames)), status_(status) {
        server_.Post("/v1/chat/completions", [this](const httplib::Request& req, httplib::Response& res) {
            last_body_ = req.body;
            ++hits_;
            if (status_ != 200) {
                res.status = status_;
                res.set_content("stub error", "text/plain");
                return;
            }
            std::string payload;
            for (const auto& f : frames_) payload += f;
            res.set_content(payload, "text/event-stream");
        });
        port_ = server_.bind_to_any_port("127.0.0.1");
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }

    ~StubServer() {
        server_.stop();
        thread_.join();
    }

    std::string base_url() const { return "http://127.0.0.1:" + std::to_string(port_); }
    std::string last_body() const { return last_body_; }
    int hits() const { return hits_; }

private:
    std::vector<std::string> frames_;
    int status_;
    httplib::Server server_;
    int port_ = 0;
    std::thread thread_;
    std::string last_body_;
    std::atomic<int> hits_{0};
};

std::string sse(const json& j) { return "data: " + j.dump() + "\n\n"; }

json delta_frame(const std::string& content) {
    return json{{"choices", json::array({json{{"delta", json{{"content", content}}}}})}};
}

json reasoning_frame(const std::string& reasoning) {
    return json{{"choices", json::array({json{{"delta", json{{"reasoning_content", reasoning}}}}})}};
}

}  // namespace

TEST_CASE("GenerationRequest: mode and sampling validation") {
    GenerationRequest both;
    both.messages = {{"user", "hi"}};
    both.raw_context = "raw";
    CHECK_THROWS_AS(both.validate(), InvalidConfig);

    GenerationRequest neither;
    CHECK_THROWS_AS(neither.validate(), InvalidConfig);

    GenerationRequest bad_tokens;
    bad_tokens.messages = {{"user", "hi"}};
    bad_tokens.sampling.max_tokens = 0;
    CHECK_THROWS_AS(bad_tokens.validate(), InvalidConfig);

    GenerationRequest ok;
    ok.messages = {{"user", "hi"}};
    CHECK_NOTHROW(ok.validate());
}

TEST_CASE("GenerationRequest: context text joins message contents") {
    GenerationRequest req;
    req.messages = {{"system", "be brief"}, {"user", "question"}};
    CHECK(req.context_text() == "be brief\nquestion");
    GenerationRequest raw = raw_request("exact context");
    CHECK(raw.context_text() == "exact context");
}

TEST_CASE("ScriptedClient: replays an entry identically twice") {
    auto e = contains_entry("K1", "hello");
    e.events = {{"Hel", 1, 0}, {"lo", 1, 0}};
    ScriptedClient client({e});

    auto first = collect(client, raw_request("say hello"));
    auto second = collect(client, raw_request("say hello"));
    REQUIRE(first.size() == 3);
    CHECK(grammar_ok(first));
    CHECK(concat_text(first) == "Hello");
    REQUIRE(second.size() == first.size());
    for (std::size_t i = 0; i < first.size(); ++i) {
        CHECK(first[i].kind == second[i].kind);
        CHECK(first[i].text == second[i].text);
        CHECK(first[i].cumulative_tokens == second[i].cumulative_tokens);
    }
}

TEST_CASE("ScriptedClient: token counts accumulate cumulatively") {
    auto e = contains_entry("tok", "count");
    e.events = {{"a", 137, 0}, {"b", 1700, 0}, {"c", 13, 0}};
    ScriptedClient client({e});
    auto events = collect(client, raw_request("count this"));
    REQUIRE(events.size() == 4);
    CHECK(*events[0].cumulative_tokens == 137);
    CHECK(*events[1].cumulative_tokens == 1837);
    CHECK(*events[2].cumulative_tokens == 1850);
}

TEST_CASE("ScriptedClient: unmatched context yields UpstreamError and is logged") {
    ScriptedClient client({contains_entry("only", "specific needle")});
    auto events = collect(client, raw_request("nothing matches this"));
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == StreamEvent::Kind::UpstreamError);
    CHECK(events[0].error_category == "unmatched");
    auto log = client.call_log();
    REQUIRE(log.size() == 1);
    CHECK(log[0].key.empty());
}

TEST_CASE("ScriptedClient: scripted error entry") {
    auto e = contains_entry("boom", "trigger");
    e.has_error = true;
    e.error_category = "timeout";
    e.error_detail = "too slow";
    ScriptedClient client({e});
    auto events = collect(client, raw_request("trigger it"));
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == StreamEvent::Kind::UpstreamError);
    CHECK(events[0].error_category == "timeout");
    CHECK_THROWS_AS(generate_text(client, raw_request("trigger it")), BackendError);
}

TEST_CASE("ScriptedClient: responses advance per call and the last repeats") {
    auto e = contains_entry("seq", "ask");
    e.responses = {"no", "no", "yes"};
    ScriptedClient client({e});
    CHECK(generate_text(client, raw_request("ask 1")).text == "no");
    CHECK(generate_text(client, raw_request("ask 2")).text == "no");
    CHECK(generate_text(client, raw_request("ask 3")).text == "yes");
    CHECK(generate_text(client, raw_request("ask 4")).text == "yes");
    CHECK(client.calls_for("seq") == 4);
}

TEST_CASE("ScriptedClient: match kinds and file order priority") {
    FixtureEntry exact;
    exact.key = "exact";
    exact.match_kind = FixtureEntry::MatchKind::Exact;
    exact.match_text = "the whole prompt";
    exact.responses = {"E"};
    FixtureEntry suffix;
    suffix.key = "suffix";
    suffix.match_kind = FixtureEntry::MatchKind::Suffix;
    suffix.match_text = "prompt";
    suffix.responses = {"S"};
    ScriptedClient client({exact, suffix});

    CHECK(generate_text(client, raw_request("the whole prompt")).text == "E");
    CHECK(generate_text(client, raw_request("another prompt")).text == "S");
}

TEST_CASE("ScriptedClient: cancellation stops the replay") {
    auto e = contains_entry("c", "go");
    e.events = {{"one", 1, 0}, {"two", 1, 0}, {"three", 1, 0}};
    ScriptedClient client({e});
    std::vector<StreamEvent> events;
    client.stream_generate(raw_request("go"), [&](const StreamEvent& ev) {
        events.push_back(ev);
        return events.size() < 2;
    });
    CHECK(events.size() == 2);  // no Done after cancel
    CHECK(events.back().kind == StreamEvent::Kind::TextDelta);
}

TEST_CASE("ScriptedClient: message-mode requests match on joined contents") {
    FixtureEntry e = contains_entry("m", "the question text");
    e.responses = {"ok"};
    ScriptedClient client({e});
    GenerationRequest req;
    req.messages = {{"system", "s"}, {"user", "here is the question text"}};
    CHECK(generate_text(client, req).text == "ok");
}

TEST_CASE("load_fixture: parses entries and rejects malformed files") {
    std::string good =
        R"({"key":"a","match":{"prompt_contains":"x"},"responses":["yes"]})"
        "\n"
        R"({"key":"b","match":{"prompt_suffix":"tail"},"events":[{"text":"t","tokens":2}]})"
        "\n\n"
        R"({"key":"c","match":{"prompt":"exact"},"error":{"category":"http_5xx","detail":"d"}})"
        "\n";
    auto entries = parse_fixture(good, "mem");
    REQUIRE(entries.size() == 3);
    CHECK(entries[0].match_kind == FixtureEntry::MatchKind::Contains);
    CHECK(entries[1].match_kind == FixtureEntry::MatchKind::Suffix);
    CHECK(entries[1].events.size() == 1);
    CHECK(entries[1].events[0].tokens == 2);
    CHECK(entries[2].has_error);

    CHECK_THROWS_AS(parse_fixture("not json\n", "mem"), FixtureFormatError);
    CHECK_THROWS_AS(
        parse_fixture(R"({"key":"a","match":{"prompt":"x"},"responses":["y"]})"
                      "\n"
                      R"({"key":"a","match":{"prompt":"z"},"responses":["n"]})"
                      "\n",
                      "mem"),
        FixtureFormatError);
    CHECK_THROWS_AS(parse_fixture(R"({"key":"a","match":{},"responses":["y"]})"
                                  "\n",
                                  "mem"),
                    FixtureFormatError);
    CHECK_THROWS_AS(parse_fixture(R"({"key":"a","match":{"prompt":"x"}})"
                                  "\n",
                                  "mem"),
                    FixtureFormatError);

    try {
        parse_fixture("{}\n{}\n[broken\n", "fixture.jsonl");
        FAIL("expected FixtureFormatError");
    } catch (const FixtureFormatError& err) {
        CHECK(std::string(err.what()).find("fixture.jsonl:1") != std::string::npos);
    }
}

TEST_CASE("estimate_tokens: whitespace runs") {
    CHECK(estimate_tokens("") == 0);
    CHECK(estimate_tokens("one") == 1);
    CHECK(estimate_tokens("a b  c\nd") == 4);
    CHECK(estimate_tokens("  padded  ") == 1);
}

TEST_CASE("render_chat_context: opens an assistant turn") {
    std::string ctx = render_chat_context({{"system", "s"}, {"user", "u"}});
    CHECK(ctx ==
          "<|im_start|>system\ns<|im_end|>\n<|im_start|>user\nu<|im_end|>\n<|im_start|>assistant\n");
}

TEST_CASE("HttpClient: streams SSE deltas then Done") {
    StubServer stub({
        sse(delta_frame("Hel")),
        sse(delta_frame("lo")),
        sse(json{{"choices", json::array()},
                 {"usage", json{{"completion_tokens", 2}}}}),
        "data: [DONE]\n\n",
    });
    HttpClient client({stub.base_url(), "test-model"});

    GenerationRequest req;
    req.messages = {{"user", "say hello"}};
    auto events = collect(client, req);
    CHECK(grammar_ok(events));
    CHECK(concat_text(events) == "Hello");
    CHECK(events.back().kind == StreamEvent::Kind::Done);

    json body = json::parse(stub.last_body());
    CHECK(body["model"] == "test-model");
    CHECK(body["stream"] == true);
    CHECK(body["messages"][0]["content"] == "say hello");

    // Transport equivalence: a scripted client configured with the same
    // logical completion produces the same concatenated text.
    auto e = contains_entry("same", "say hello");
    e.events = {{"Hel", 1, 0}, {"lo", 1, 0}};
    ScriptedClient scripted({e});
    auto scripted_events = collect(scripted, req);
    CHECK(concat_text(scripted_events) == concat_text(events));
}

TEST_CASE("HttpClient: frames reasoning_content deltas with think markers") {
    StubServer stub({
        sse(reasoning_frame("step one")),
        sse(reasoning_frame(" step two")),
        sse(delta_frame("the answer")),
        "data: [DONE]\n\n",
    });
    HttpClient client({stub.base_url(), "m"});
    GenerationRequest req;
    req.messages = {{"user", "q"}};
    auto events = collect(client, req);
    CHECK(grammar_ok(events));
    CHECK(concat_text(events) == "<think>step one step two</think>the answer");
}

TEST_CASE("HttpClient: stream ending inside reasoning still closes the frame") {
    StubServer stub({
        sse(reasoning_frame("unfinished")),
        "data: [DONE]\n\n",
    });
    HttpClient client({stub.base_url(), "m"});
    GenerationRequest req;
    req.messages = {{"user", "q"}};
    auto events = collect(client, req);
    CHECK(concat_text(events) == "<think>unfinished</think>");
}

TEST_CASE("HttpClient: http error statuses map to categories") {
    StubServer stub({}, 503);
    HttpClient client({stub.base_url(), "m"});
    GenerationRequest req;
    req.messages = {{"user", "q"}};
    auto events = collect(client, req);
    REQUIRE(!events.empty());
    CHECK(events.back().kind == StreamEvent::Kind::UpstreamError);
    CHECK(events.back().error_category == "http_5xx");
}

TEST_CASE("HttpClient: unreachable host is a connection error") {
    HttpClient client({"http://127.0.0.1:1", "m", "", 1, 1});
    GenerationRequest req;
    req.messages = {{"user", "q"}};
    auto events = collect(client, req);
    REQUIRE(events.size() == 1);
    CHECK(events[0].kind == StreamEvent::Kind::UpstreamError);
    CHECK(events[0].error_category == "connection");
}

TEST_CASE("HttpClient: unary mode returns one delta with usage") {
    httplib::Server server;
    json body = {
        {"choices",
         json::array({json{{"message", json{{"role", "assistant"}, {"content", "four"}}}}})},
        {"usage", json{{"completion_tokens", 1}}},
    };
    server.Post("/v1/chat/completions", [&](const httplib::Request&, httplib::Response& res) {
        res.set_content(body.dump(), "application/json");
    });
    int port = server.bind_to_any_port("127.0.0.1");
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    HttpClient client({"http://127.0.0.1:" + std::to_string(port), "m"});
    GenerationRequest req;
    req.messages = {{"user", "2+2?"}};
    req.stream = false;
    auto result = generate_text(client, req);
    CHECK(result.text == "four");
    CHECK(result.tokens == 1);

    server.stop();
    t.join();
}
