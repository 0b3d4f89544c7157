#pragma once

#include <chrono>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "flashthink/client.hpp"
#include "flashthink/segmenter.hpp"
#include "flashthink/verifier.hpp"

namespace flashthink {

// The caller's problem statement. `question` is the bare question text shown
// to the verification model; the reasoner sees `messages` (or `raw_context`),
// which default to a single user turn carrying the question.
struct PromptRecord {
    std::string question;
    std::vector<Message> messages;
    std::optional<std::string> raw_context;

    std::vector<Message> effective_messages() const;
};

enum class ExitKind { EarlyExit, NaturalEnd, LengthCap, Error };
const char* exit_kind_name(ExitKind k);

struct RunConfig {
    DelimiterSet delimiters = DelimiterSet::paragraph_breaks();
    ThinkMarkers markers;
    std::size_t max_reasoning_tokens = 32768;
    double temperature = 0.7;
    std::size_t min_chunks_before_check = 1;
    std::optional<std::size_t> max_verifier_calls;
    VerifyParams verify_params;
    std::string answer_lead_in = "\n\n";
    int max_answer_tokens = 8192;
    bool implicit_think_start = true;
    // When set, generation keeps streaming while a verification is in flight;
    // overrun past the triggering chunk is discarded and counted as waste.
    // Verifications left queued when the think phase closes naturally are
    // abandoned, so verifier_calls can be lower than in the default
    // synchronous mode.
    bool speculative = false;

    void validate() const;  // throws InvalidConfig
};

struct FlashThinkResult {
    std::string reasoning_content;  // concatenation of kept chunks
    std::string answer;
    std::size_t chunks_kept = 0;
    std::size_t verifier_calls = 0;
    std::size_t reasoning_tokens = 0;
    std::size_t answer_tokens = 0;
    std::optional<std::size_t> baseline_reasoning_tokens;
    ExitKind exit_kind = ExitKind::Error;
    std::chrono::milliseconds wall_time{0};
    std::size_t wasted_tokens = 0;   // streamed but discarded after the exit decision
    std::size_t fail_open_count = 0; // verifier errors/unparseable outputs treated as continue
    std::string error_detail;
};

// The continuation context used to elicit an answer from a kept reasoning
// prefix: caller context, then the full think span closed explicitly, then
// the answer lead-in.
std::string continuation_context(const PromptRecord& x, const std::string& kept_reasoning,
                                 const RunConfig& cfg);

// One continuation request against that context. Throws ReasonerError.
std::string force_answer(ModelClient& reasoner, const PromptRecord& x,
                         const std::string& kept_reasoning, const RunConfig& cfg);

// Streams reasoning, checks each completed chunk with the verification model,
// exits the think phase at the first positive decision, and elicits the
// answer from the kept prefix. Verifier failures are absorbed (continue);
// reasoner failures surface as exit_kind=Error with partial results.
FlashThinkResult run_flashthink(ModelClient& reasoner, ModelClient& verifier_client,
                                const PromptTemplate& tmpl, const PromptRecord& x,
                                const RunConfig& cfg);

// Unmodified pass-through generation; the efficiency denominator.
FlashThinkResult run_baseline(ModelClient& reasoner, const PromptRecord& x, const RunConfig& cfg);

}  // namespace flashthink
