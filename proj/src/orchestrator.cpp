#include "flashthink/orchestrator.hpp"

#include <atomic>
#include <condition_variable>
#include <deque>
#include <mutex>
#include <thread>

#include "flashthink/errors.hpp"

namespace flashthink {

std::vector<Message> PromptRecord::effective_messages() const {
    if (!messages.empty()) return messages;
    return {{"user", question}};
}

const char* exit_kind_name(ExitKind k) {
    switch (k) {
        case ExitKind::EarlyExit: return "early_exit";
        case ExitKind::NaturalEnd: return "natural_end";
        case ExitKind::LengthCap: return "length_cap";
        case ExitKind::Error: return "error";
    }
    return "unknown";
}

void RunConfig::validate() const {
    if (max_reasoning_tokens == 0) throw InvalidConfig("max_reasoning_tokens must be positive");
    if (temperature < 0) throw InvalidConfig("temperature must be non-negative");
    if (min_chunks_before_check < 1) throw InvalidConfig("min_chunks_before_check must be >= 1");
    if (max_answer_tokens <= 0) throw InvalidConfig("max_answer_tokens must be positive");
    if (delimiters.delimiters.empty()) throw InvalidConfig("delimiter set must not be empty");
}

std::string continuation_context(const PromptRecord& x, const std::string& kept_reasoning,
                                 const RunConfig& cfg) {
    std::string base = x.raw_context ? *x.raw_context : render_chat_context(x.effective_messages());
    return base + cfg.markers.open_marker + kept_reasoning + cfg.markers.close_marker +
           cfg.answer_lead_in;
}

namespace {

GenerationResult force_answer_result(ModelClient& reasoner, const PromptRecord& x,
                                     const std::string& kept_reasoning, const RunConfig& cfg) {
    GenerationRequest req;
    req.raw_context = continuation_context(x, kept_reasoning, cfg);
    req.sampling.temperature = cfg.temperature;
    req.sampling.max_tokens = cfg.max_answer_tokens;
    req.sampling.stop = {cfg.markers.open_marker};
    req.stream = true;
    try {
        return generate_text(reasoner, req);
    } catch (const BackendError& e) {
        throw ReasonerError(e.what());
    }
}

GenerationRequest reasoner_request(const PromptRecord& x, const RunConfig& cfg) {
    GenerationRequest req;
    if (x.raw_context) {
        req.raw_context = x.raw_context;
    } else {
        req.messages = x.effective_messages();
    }
    req.sampling.temperature = cfg.temperature;
    req.sampling.max_tokens = static_cast<int>(cfg.max_reasoning_tokens);
    req.stream = true;
    return req;
}

struct VerifyJob {
    std::size_t chunk_index;
    std::string kept_prefix;
    std::size_t tokens_at_chunk;
};

// Sequential verification worker for speculative mode; processes chunk
// prefixes in order and records the first positive decision.
class VerifyWorker {
public:
    VerifyWorker(const std::string& question, const PromptTemplate& tmpl, ModelClient& client,
                 const VerifyParams& params)
        : question_(question), tmpl_(tmpl), client_(client), params_(params) {
        thread_ = std::thread([this] { loop(); });
    }

    ~VerifyWorker() { stop_and_join(); }

    void enqueue(VerifyJob job) {
        {
            std::lock_guard<std::mutex> lock(mu_);
            if (closed_) return;
            queue_.push_back(std::move(job));
        }
        cv_.notify_one();
    }

    // Abandons jobs not yet started and joins.
    void abandon() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            closed_ = true;
            queue_.clear();
        }
        cv_.notify_one();
        stop_and_join();
    }

    // Waits for every queued job to be processed (or a positive decision).
    void drain() {
        {
            std::unique_lock<std::mutex> lock(mu_);
            done_cv_.wait(lock, [this] { return (queue_.empty() && !busy_) || exit_found_; });
            closed_ = true;
        }
        cv_.notify_one();
        stop_and_join();
    }

    bool exit_found() const { return exit_found_.load(); }

    std::optional<VerifyJob> exit_job() {
        std::lock_guard<std::mutex> lock(mu_);
        return exit_job_;
    }

    std::size_t calls() const { return calls_.load(); }
    std::size_t fail_open() const { return fail_open_.load(); }

private:
    void loop() {
        while (true) {
            VerifyJob job;
            {
                std::unique_lock<std::mutex> lock(mu_);
                cv_.wait(lock, [this] { return closed_ || !queue_.empty(); });
                if (exit_found_ || (closed_ && queue_.empty())) break;
                if (queue_.empty()) break;
                job = std::move(queue_.front());
                queue_.pop_front();
                busy_ = true;
            }
            bool exit_now = false;
            ++calls_;
            try {
                VerifierDecision d = verify(question_, job.kept_prefix, tmpl_, client_, params_);
                if (d.parse_status == ParseStatus::Unparseable) ++fail_open_;
                exit_now = d.exit_now;
            } catch (const BackendError&) {
                ++fail_open_;
            }
            {
                std::lock_guard<std::mutex> lock(mu_);
                busy_ = false;
                if (exit_now && !exit_found_) {
                    exit_found_ = true;
                    exit_job_ = std::move(job);
                    queue_.clear();
                }
            }
            done_cv_.notify_all();
            if (exit_now) break;
        }
        {
            std::lock_guard<std::mutex> lock(mu_);
            busy_ = false;
        }
        done_cv_.notify_all();
    }

    void stop_and_join() {
        {
            std::lock_guard<std::mutex> lock(mu_);
            closed_ = true;
        }
        cv_.notify_one();
        if (thread_.joinable()) thread_.join();
    }

    const std::string& question_;
    const PromptTemplate& tmpl_;
    ModelClient& client_;
    const VerifyParams& params_;

    std::mutex mu_;
    std::condition_variable cv_;
    std::condition_variable done_cv_;
    std::deque<VerifyJob> queue_;
    bool closed_ = false;
    bool busy_ = false;
    std::optional<VerifyJob> exit_job_;
    std::atomic<bool> exit_found_{false};
    std::atomic<std::size_t> calls_{0};
    std::atomic<std::size_t> fail_open_{0};
    std::thread thread_;
};

// Shared per-run bookkeeping for both orchestrated and baseline runs. Token
// counts attach at delta granularity: the think-open overhead is measured as
// the cumulative count before the delta in which the think phase began, so
// fixtures that give marker deltas zero tokens get exact attribution.
struct RunState {
    std::string kept_text;
    std::string natural_answer;
    std::size_t chunks = 0;
    std::size_t last_cum_tokens = 0;
    std::size_t prev_cum_tokens = 0;  // cumulative before the delta being processed
    std::size_t tokens_at_think_open = 0;
    std::optional<std::size_t> tokens_at_think_close;
    bool natural_end = false;
    bool failed = false;
    std::string fail_detail;

    void note_tokens(const StreamEvent& e) {
        prev_cum_tokens = last_cum_tokens;
        if (e.cumulative_tokens) last_cum_tokens = *e.cumulative_tokens;
    }

    // Tokens streamed since the think phase opened.
    std::size_t think_tokens_at(std::size_t cum) const {
        return cum > tokens_at_think_open ? cum - tokens_at_think_open : 0;
    }

    void absorb_common(const SegmentEvent& ev) {
        switch (ev.kind) {
            case SegmentEvent::Kind::ChunkComplete:
                kept_text += ev.chunk.text;
                chunks = ev.chunk.index;
                break;
            case SegmentEvent::Kind::PhaseChange:
                if (ev.phase == Phase::InThink) {
                    tokens_at_think_open = prev_cum_tokens;
                } else if (ev.phase == Phase::AfterThink) {
                    natural_end = true;
                    tokens_at_think_close = think_tokens_at(last_cum_tokens);
                }
                break;
            case SegmentEvent::Kind::AnswerText:
                natural_answer += ev.text;
                break;
        }
    }
};

std::size_t tokens_or_estimate(std::size_t reported, const std::string& text) {
    return reported > 0 ? reported : estimate_tokens(text);
}

}  // namespace

std::string force_answer(ModelClient& reasoner, const PromptRecord& x,
                         const std::string& kept_reasoning, const RunConfig& cfg) {
    return force_answer_result(reasoner, x, kept_reasoning, cfg).text;
}

FlashThinkResult run_baseline(ModelClient& reasoner, const PromptRecord& x, const RunConfig& cfg) {
    cfg.validate();
    auto start = std::chrono::steady_clock::now();

    StreamSegmenter seg(cfg.delimiters, cfg.markers, cfg.implicit_think_start);
    RunState st;

    reasoner.stream_generate(reasoner_request(x, cfg), [&](const StreamEvent& e) {
        st.note_tokens(e);
        if (e.kind == StreamEvent::Kind::TextDelta) {
            for (const auto& ev : seg.feed(e.text)) st.absorb_common(ev);
        } else if (e.kind == StreamEvent::Kind::UpstreamError) {
            st.failed = true;
            st.fail_detail = e.error_category + ": " + e.error_detail;
        }
        return true;
    });
    if (!st.failed) {
        for (const auto& ev : seg.finish()) st.absorb_common(ev);
    }

    FlashThinkResult r;
    r.reasoning_content = st.kept_text;
    r.answer = st.natural_answer;
    r.chunks_kept = st.chunks;
    if (st.failed) {
        r.exit_kind = ExitKind::Error;
        r.error_detail = st.fail_detail;
        r.reasoning_tokens =
            st.kept_text.empty() ? 0 : tokens_or_estimate(st.think_tokens_at(st.last_cum_tokens), st.kept_text);
    } else if (st.natural_end) {
        r.exit_kind = ExitKind::NaturalEnd;
        r.reasoning_tokens = st.kept_text.empty() ? 0 : tokens_or_estimate(*st.tokens_at_think_close, st.kept_text);
        std::size_t total = tokens_or_estimate(st.think_tokens_at(st.last_cum_tokens),
                                               st.kept_text + st.natural_answer);
        r.answer_tokens = total > r.reasoning_tokens ? total - r.reasoning_tokens
                                                     : estimate_tokens(st.natural_answer);
    } else {
        r.exit_kind = ExitKind::LengthCap;
        r.reasoning_tokens =
            st.kept_text.empty() ? 0 : tokens_or_estimate(st.think_tokens_at(st.last_cum_tokens), st.kept_text);
    }
    r.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    return r;
}

FlashThinkResult run_flashthink(ModelClient& reasoner, ModelClient& verifier_client,
                                const PromptTemplate& tmpl, const PromptRecord& x,
                                const RunConfig& cfg) {
    cfg.validate();
    auto start = std::chrono::steady_clock::now();

    StreamSegmenter seg(cfg.delimiters, cfg.markers, cfg.implicit_think_start);
    RunState st;
    std::size_t verifier_calls = 0;
    std::size_t fail_open = 0;
    bool early_exit = false;
    std::size_t tokens_at_exit = 0;

    std::optional<VerifyWorker> worker;
    if (cfg.speculative) {
        worker.emplace(x.question, tmpl, verifier_client, cfg.verify_params);
    }

    auto verifier_budget_left = [&] {
        return !cfg.max_verifier_calls || verifier_calls < *cfg.max_verifier_calls;
    };

    // Synchronous check: the stream is paused (we simply do not return from
    // the callback) while the verifier runs.
    auto check_now = [&] {
        ++verifier_calls;
        try {
            VerifierDecision d =
                verify(x.question, st.kept_text, tmpl, verifier_client, cfg.verify_params);
            if (d.parse_status == ParseStatus::Unparseable) ++fail_open;
            if (d.exit_now) {
                early_exit = true;
                tokens_at_exit = st.think_tokens_at(st.last_cum_tokens);
            }
        } catch (const BackendError&) {
            ++fail_open;
        }
    };

    reasoner.stream_generate(reasoner_request(x, cfg), [&](const StreamEvent& e) {
        st.note_tokens(e);
        switch (e.kind) {
            case StreamEvent::Kind::TextDelta: {
                for (const auto& ev : seg.feed(e.text)) {
                    if (early_exit) break;  // in-flight events after the decision are discarded
                    st.absorb_common(ev);
                    bool checkable = ev.kind == SegmentEvent::Kind::ChunkComplete &&
                                     ev.chunk.terminated_by.has_value() && !st.natural_end &&
                                     ev.chunk.index >= cfg.min_chunks_before_check &&
                                     verifier_budget_left();
                    if (!checkable) continue;
                    if (cfg.speculative) {
                        worker->enqueue(
                            {ev.chunk.index, st.kept_text, st.think_tokens_at(st.last_cum_tokens)});
                    } else {
                        check_now();
                    }
                }
                break;
            }
            case StreamEvent::Kind::UsageUpdate:
                break;
            case StreamEvent::Kind::Done:
                break;
            case StreamEvent::Kind::UpstreamError:
                st.failed = true;
                st.fail_detail = e.error_category + ": " + e.error_detail;
                break;
        }
        if (cfg.speculative && worker->exit_found()) early_exit = true;
        return !early_exit;
    });

    if (cfg.speculative) {
        if (st.failed || st.natural_end) {
            worker->abandon();
        } else {
            worker->drain();
        }
        verifier_calls = worker->calls();
        fail_open = worker->fail_open();
        if (auto job = worker->exit_job()) {
            early_exit = true;
            st.kept_text = job->kept_prefix;
            st.chunks = job->chunk_index;
            tokens_at_exit = job->tokens_at_chunk;
        } else {
            early_exit = false;
        }
    }

    if (!early_exit && !st.failed) {
        for (const auto& ev : seg.finish()) st.absorb_common(ev);
    }

    FlashThinkResult r;
    r.verifier_calls = verifier_calls;
    r.fail_open_count = fail_open;
    r.reasoning_content = st.kept_text;
    r.chunks_kept = st.chunks;

    if (st.failed && !early_exit) {
        r.exit_kind = ExitKind::Error;
        r.error_detail = st.fail_detail;
        r.reasoning_tokens =
            st.kept_text.empty() ? 0
                                 : tokens_or_estimate(st.think_tokens_at(st.last_cum_tokens), st.kept_text);
    } else if (early_exit) {
        r.exit_kind = ExitKind::EarlyExit;
        r.reasoning_tokens = tokens_or_estimate(tokens_at_exit, st.kept_text);
        std::size_t received = tokens_or_estimate(st.think_tokens_at(st.last_cum_tokens), st.kept_text);
        r.wasted_tokens = received > r.reasoning_tokens ? received - r.reasoning_tokens : 0;
        try {
            GenerationResult ans = force_answer_result(reasoner, x, st.kept_text, cfg);
            r.answer = ans.text;
            r.answer_tokens = ans.tokens;
        } catch (const ReasonerError& e) {
            r.exit_kind = ExitKind::Error;
            r.error_detail = e.what();
        }
    } else if (st.natural_end) {
        r.exit_kind = ExitKind::NaturalEnd;
        r.answer = st.natural_answer;
        r.reasoning_tokens =
            st.kept_text.empty() ? 0 : tokens_or_estimate(*st.tokens_at_think_close, st.kept_text);
        std::size_t total = tokens_or_estimate(st.think_tokens_at(st.last_cum_tokens),
                                               st.kept_text + st.natural_answer);
        r.answer_tokens = total > r.reasoning_tokens ? total - r.reasoning_tokens
                                                     : estimate_tokens(st.natural_answer);
    } else {
        r.exit_kind = ExitKind::LengthCap;
        r.reasoning_tokens =
            st.kept_text.empty() ? 0
                                 : tokens_or_estimate(st.think_tokens_at(st.last_cum_tokens), st.kept_text);
        try {
            GenerationResult ans = force_answer_result(reasoner, x, st.kept_text, cfg);
            r.answer = ans.text;
            r.answer_tokens = ans.tokens;
        } catch (const ReasonerError& e) {
            r.exit_kind = ExitKind::Error;
            r.error_detail = e.what();
        }
    }

    r.wall_time = std::chrono::duration_cast<std::chrono::milliseconds>(
        std::chrono::steady_clock::now() - start);
    return r;
}

}  // namespace flashthink
