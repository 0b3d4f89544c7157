#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace flashthink {

enum class Phase { BeforeThink, InThink, AfterThink };

const char* phase_name(Phase p);

// Candidate chunk-boundary strings. Order is preserved but matching is
// position-based: the leftmost occurrence wins, and among patterns matching
// at the same position the longest wins, so the stored order never affects
// the split.
struct DelimiterSet {
    std::vector<std::string> delimiters;

    // Validates and de-duplicates. Throws InvalidConfig on an empty set or an
    // empty-string element.
    static DelimiterSet make(std::vector<std::string> delims);

    static DelimiterSet paragraph_breaks() { return make({"\n\n"}); }
};

struct ThinkMarkers {
    std::string open_marker = "<think>";
    std::string close_marker = "</think>";
};

// One delimiter-bounded segment of reasoning content. `text` includes the
// terminating delimiter except for a trailing partial chunk, where
// `terminated_by` is empty.
struct Chunk {
    std::string text;
    std::size_t index = 0;  // 1-based ordinal
    std::optional<std::string> terminated_by;
};

struct SegmentEvent {
    enum class Kind { ChunkComplete, PhaseChange, AnswerText };
    Kind kind;
    Chunk chunk;           // ChunkComplete
    Phase phase = Phase::BeforeThink;  // PhaseChange
    std::string preamble;  // PhaseChange(InThink): text observed before the open marker
    std::string text;      // AnswerText

    static SegmentEvent chunk_complete(Chunk c);
    static SegmentEvent phase_change(Phase p, std::string preamble = {});
    static SegmentEvent answer_text(std::string t);
};

// Incremental splitter for a streamed reasoning-model output.
//
// Text is routed by phase: everything between the think markers is split
// into chunks at delimiter matches, everything after the close marker is
// passed through as answer text. A match that could still grow (the buffer
// ends in a proper prefix of a longer candidate) is deferred until more
// bytes arrive, so the emitted chunks are identical for every fragmentation
// of the same input. The close marker takes precedence over a delimiter
// matching at the same position.
//
// With `implicit_think_start` (default on), a stream that does not begin
// with the open marker is treated as already inside the think phase,
// matching DeepSeek-R1-style serving where reasoning is emitted first.
//
// Single-session, single-threaded. Safe to move between threads, not to
// share.
class StreamSegmenter {
public:
    StreamSegmenter(DelimiterSet delims, ThinkMarkers markers, bool implicit_think_start = true);

    // Consumes the next stream fragment. Any byte sequence is legal input.
    std::vector<SegmentEvent> feed(std::string_view fragment);

    // Flushes the trailing partial chunk (if any) and resolves matches that
    // only became decidable at end of input. The segmenter is finished
    // afterwards and must not be fed again.
    std::vector<SegmentEvent> finish();

    Phase phase() const { return phase_; }
    std::size_t chunks_emitted() const { return chunks_emitted_; }
    bool finished() const { return finished_; }
    const std::string& pending() const { return pending_; }

private:
    struct Scan {
        enum class Outcome { None, Deferred, Delimiter, Close };
        Outcome outcome = Outcome::None;
        std::size_t pos = 0;
        std::size_t len = 0;  // matched pattern length for Delimiter/Close
        std::size_t delim_index = 0;
    };

    Scan scan_pending(std::size_t from, bool finishing) const;
    void drain_think(std::vector<SegmentEvent>& out, bool finishing);
    void enter_think(std::vector<SegmentEvent>& out, std::string preamble, bool consumed_marker);
    Chunk take_chunk(std::size_t text_len, std::optional<std::string> terminator);

    DelimiterSet delims_;
    ThinkMarkers markers_;
    bool implicit_start_;

    Phase phase_ = Phase::BeforeThink;
    std::string pending_;
    std::size_t scan_from_ = 0;
    std::size_t chunks_emitted_ = 0;
    bool finished_ = false;
};

// Non-incremental splitter over a complete output string; same matching
// rules as StreamSegmenter. Convenience for callers that already hold the
// full text.
std::vector<SegmentEvent> segment_complete(const std::string& text, const DelimiterSet& delims,
                                           const ThinkMarkers& markers, bool implicit_think_start = true);

// Concatenation of all ChunkComplete texts in `events`.
std::string concat_chunks(const std::vector<SegmentEvent>& events);

}  // namespace flashthink
