#include "flashthink/segmenter.hpp"

#include <algorithm>
#include <stdexcept>

#include "flashthink/errors.hpp"

namespace flashthink {

const char* phase_name(Phase p) {
    switch (p) {
        case Phase::BeforeThink: return "before_think";
        case Phase::InThink: return "in_think";
        case Phase::AfterThink: return "after_think";
    }
    return "unknown";
}

DelimiterSet DelimiterSet::make(std::vector<std::string> delims) {
    if (delims.empty()) {
        throw InvalidConfig("delimiter set must not be empty");
    }
    DelimiterSet out;
    for (auto& d : delims) {
        if (d.empty()) {
            throw InvalidConfig("delimiter set must not contain the empty string");
        }
        if (std::find(out.delimiters.begin(), out.delimiters.end(), d) == out.delimiters.end()) {
            out.delimiters.push_back(std::move(d));
        }
    }
    return out;
}

SegmentEvent SegmentEvent::chunk_complete(Chunk c) {
    SegmentEvent e;
    e.kind = Kind::ChunkComplete;
    e.chunk = std::move(c);
    return e;
}

SegmentEvent SegmentEvent::phase_change(Phase p, std::string preamble) {
    SegmentEvent e;
    e.kind = Kind::PhaseChange;
    e.phase = p;
    e.preamble = std::move(preamble);
    return e;
}

SegmentEvent SegmentEvent::answer_text(std::string t) {
    SegmentEvent e;
    e.kind = Kind::AnswerText;
    e.text = std::move(t);
    return e;
}

namespace {

bool matches_at(const std::string& text, std::size_t pos, const std::string& pat) {
    return pos + pat.size() <= text.size() && text.compare(pos, pat.size(), pat) == 0;
}

// True when text[pos..end) is a proper prefix of pat, i.e. the pattern could
// still complete once more bytes arrive.
bool partial_at(const std::string& text, std::size_t pos, const std::string& pat) {
    std::size_t avail = text.size() - pos;
    return avail < pat.size() && pat.compare(0, avail, text, pos, avail) == 0;
}

}  // namespace

StreamSegmenter::StreamSegmenter(DelimiterSet delims, ThinkMarkers markers, bool implicit_think_start)
    : delims_(std::move(delims)), markers_(std::move(markers)), implicit_start_(implicit_think_start) {
    if (delims_.delimiters.empty()) {
        throw InvalidConfig("delimiter set must not be empty");
    }
    for (const auto& d : delims_.delimiters) {
        if (d.empty()) throw InvalidConfig("delimiter set must not contain the empty string");
    }
    if (markers_.open_marker.empty() || markers_.close_marker.empty()) {
        throw InvalidConfig("think markers must be non-empty");
    }
    if (markers_.open_marker == markers_.close_marker) {
        throw InvalidConfig("open and close markers must differ");
    }
}

// Finds the next actionable position in pending_. At a given position the
// close marker beats any delimiter; otherwise the longest complete delimiter
// wins. If a longer candidate could still complete there (or the close marker
// could), the decision is deferred until more bytes arrive, unless
// `finishing`, when incomplete candidates are dead.
StreamSegmenter::Scan StreamSegmenter::scan_pending(std::size_t from, bool finishing) const {
    const std::string& close = markers_.close_marker;
    for (std::size_t p = from; p < pending_.size(); ++p) {
        if (matches_at(pending_, p, close)) {
            return {Scan::Outcome::Close, p, close.size(), 0};
        }
        bool pending_longer = !finishing && partial_at(pending_, p, close);

        std::size_t best_len = 0;
        std::size_t best_idx = 0;
        for (std::size_t i = 0; i < delims_.delimiters.size(); ++i) {
            const auto& d = delims_.delimiters[i];
            if (d.size() > best_len && matches_at(pending_, p, d)) {
                best_len = d.size();
                best_idx = i;
            }
        }
        if (!finishing) {
            for (const auto& d : delims_.delimiters) {
                if (d.size() > best_len && partial_at(pending_, p, d)) {
                    pending_longer = true;
                    break;
                }
            }
        }
        if (pending_longer) {
            return {Scan::Outcome::Deferred, p, 0, 0};
        }
        if (best_len > 0) {
            return {Scan::Outcome::Delimiter, p, best_len, best_idx};
        }
    }
    return {Scan::Outcome::None, pending_.size(), 0, 0};
}

Chunk StreamSegmenter::take_chunk(std::size_t text_len, std::optional<std::string> terminator) {
    Chunk c;
    c.text = pending_.substr(0, text_len);
    c.index = ++chunks_emitted_;
    c.terminated_by = std::move(terminator);
    pending_.erase(0, text_len);
    scan_from_ = 0;
    return c;
}

void StreamSegmenter::drain_think(std::vector<SegmentEvent>& out, bool finishing) {
    while (true) {
        Scan s = scan_pending(scan_from_, finishing);
        switch (s.outcome) {
            case Scan::Outcome::None:
                scan_from_ = pending_.size();
                return;
            case Scan::Outcome::Deferred:
                scan_from_ = s.pos;
                return;
            case Scan::Outcome::Delimiter:
                out.push_back(SegmentEvent::chunk_complete(
                    take_chunk(s.pos + s.len, delims_.delimiters[s.delim_index])));
                break;
            case Scan::Outcome::Close: {
                if (s.pos > 0) {
                    out.push_back(SegmentEvent::chunk_complete(take_chunk(s.pos, std::nullopt)));
                }
                pending_.erase(0, markers_.close_marker.size());
                scan_from_ = 0;
                phase_ = Phase::AfterThink;
                out.push_back(SegmentEvent::phase_change(Phase::AfterThink));
                if (!pending_.empty()) {
                    out.push_back(SegmentEvent::answer_text(std::move(pending_)));
                    pending_.clear();
                }
                return;
            }
        }
    }
}

void StreamSegmenter::enter_think(std::vector<SegmentEvent>& out, std::string preamble, bool consumed_marker) {
    if (consumed_marker) {
        pending_.erase(0, preamble.size() + markers_.open_marker.size());
    } else {
        pending_.erase(0, preamble.size());
    }
    scan_from_ = 0;
    phase_ = Phase::InThink;
    out.push_back(SegmentEvent::phase_change(Phase::InThink, std::move(preamble)));
}

std::vector<SegmentEvent> StreamSegmenter::feed(std::string_view fragment) {
    if (finished_) {
        throw std::logic_error("feed after finish");
    }
    std::vector<SegmentEvent> out;
    if (fragment.empty()) return out;

    if (phase_ == Phase::AfterThink) {
        out.push_back(SegmentEvent::answer_text(std::string(fragment)));
        return out;
    }

    pending_.append(fragment);

    if (phase_ == Phase::BeforeThink) {
        const std::string& open = markers_.open_marker;
        if (implicit_start_) {
            // Head-anchored: the stream either starts with the open marker or
            // is already inside the think phase.
            if (partial_at(pending_, 0, open)) {
                return out;  // undecided, wait for more bytes
            }
            if (matches_at(pending_, 0, open)) {
                enter_think(out, "", true);
            } else {
                enter_think(out, "", false);
            }
        } else {
            std::size_t at = pending_.find(open);
            if (at == std::string::npos) {
                return out;  // keep buffering preamble
            }
            enter_think(out, pending_.substr(0, at), true);
        }
    }

    if (phase_ == Phase::InThink) {
        drain_think(out, false);
    }
    return out;
}

std::vector<SegmentEvent> StreamSegmenter::finish() {
    std::vector<SegmentEvent> out;
    if (finished_) return out;
    finished_ = true;

    if (phase_ == Phase::BeforeThink) {
        if (implicit_start_ && !pending_.empty()) {
            // Stream ended on an undecided prefix of the open marker; under
            // implicit start that text is reasoning content.
            if (matches_at(pending_, 0, markers_.open_marker)) {
                enter_think(out, "", true);
            } else {
                enter_think(out, "", false);
            }
        } else {
            pending_.clear();
            return out;
        }
    }

    if (phase_ == Phase::InThink) {
        drain_think(out, true);
    }
    if (phase_ == Phase::InThink && !pending_.empty()) {
        out.push_back(SegmentEvent::chunk_complete(take_chunk(pending_.size(), std::nullopt)));
    }
    pending_.clear();
    return out;
}

std::vector<SegmentEvent> segment_complete(const std::string& text, const DelimiterSet& delims,
                                           const ThinkMarkers& markers, bool implicit_think_start) {
    StreamSegmenter seg(delims, markers, implicit_think_start);
    std::vector<SegmentEvent> events = seg.feed(text);
    for (auto& e : seg.finish()) {
        events.push_back(std::move(e));
    }
    return events;
}

std::string concat_chunks(const std::vector<SegmentEvent>& events) {
    std::string out;
    for (const auto& e : events) {
        if (e.kind == SegmentEvent::Kind::ChunkComplete) {
            out += e.chunk.text;
        }
    }
    return out;
}

}  // namespace flashthink
