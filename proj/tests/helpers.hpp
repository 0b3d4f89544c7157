#pragma once

// Shared test utilities. The segmentation oracle here is written as an
// independent single-pass splitter over the complete text so streaming
// results can be checked against it.

#include <cstdint>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "flashthink/segmenter.hpp"

namespace testutil {

using flashthink::Chunk;
using flashthink::DelimiterSet;
using flashthink::Phase;
using flashthink::SegmentEvent;
using flashthink::StreamSegmenter;
using flashthink::ThinkMarkers;

inline bool starts_with_at(const std::string& text, std::size_t pos, const std::string& pat) {
    return pos + pat.size() <= text.size() && text.compare(pos, pat.size(), pat) == 0;
}

// Reference splitter: sees the whole text at once, no incremental state.
// Precedence at a position: close marker, then longest delimiter; positions
// scanned left to right.
inline std::vector<SegmentEvent> oracle_segment(const std::string& text,
                                                const std::vector<std::string>& delims,
                                                const std::string& open, const std::string& close,
                                                bool implicit_think_start) {
    std::vector<SegmentEvent> out;
    if (text.empty()) return out;

    std::size_t think_begin = 0;
    std::string preamble;
    if (implicit_think_start) {
        if (starts_with_at(text, 0, open)) think_begin = open.size();
    } else {
        std::size_t at = text.find(open);
        if (at == std::string::npos) return out;  // no think phase ever started
        preamble = text.substr(0, at);
        think_begin = at + open.size();
    }
    out.push_back(SegmentEvent::phase_change(Phase::InThink, preamble));

    std::size_t chunk_start = think_begin;
    std::size_t index = 0;
    std::size_t i = think_begin;
    while (i < text.size()) {
        if (starts_with_at(text, i, close)) {
            if (i > chunk_start) {
                Chunk c;
                c.text = text.substr(chunk_start, i - chunk_start);
                c.index = ++index;
                out.push_back(SegmentEvent::chunk_complete(std::move(c)));
            }
            out.push_back(SegmentEvent::phase_change(Phase::AfterThink));
            std::size_t rest = i + close.size();
            if (rest < text.size()) {
                out.push_back(SegmentEvent::answer_text(text.substr(rest)));
            }
            return out;
        }
        std::size_t best_len = 0;
        std::size_t best_idx = 0;
        for (std::size_t d = 0; d < delims.size(); ++d) {
            if (delims[d].size() > best_len && starts_with_at(text, i, delims[d])) {
                best_len = delims[d].size();
                best_idx = d;
            }
        }
        if (best_len > 0) {
            Chunk c;
            c.text = text.substr(chunk_start, i + best_len - chunk_start);
            c.index = ++index;
            c.terminated_by = delims[best_idx];
            out.push_back(SegmentEvent::chunk_complete(std::move(c)));
            i += best_len;
            chunk_start = i;
        } else {
            ++i;
        }
    }
    if (chunk_start < text.size()) {
        Chunk c;
        c.text = text.substr(chunk_start);
        c.index = ++index;
        out.push_back(SegmentEvent::chunk_complete(std::move(c)));
    }
    return out;
}

// Streaming can emit the post-think text in several AnswerText events where
// the oracle emits one; coalesce runs so the two are comparable.
inline std::vector<SegmentEvent> coalesce_answer_text(const std::vector<SegmentEvent>& events) {
    std::vector<SegmentEvent> out;
    for (const auto& e : events) {
        if (e.kind == SegmentEvent::Kind::AnswerText && !out.empty() &&
            out.back().kind == SegmentEvent::Kind::AnswerText) {
            out.back().text += e.text;
        } else if (!(e.kind == SegmentEvent::Kind::AnswerText && e.text.empty())) {
            out.push_back(e);
        }
    }
    return out;
}

inline bool events_equal(const SegmentEvent& a, const SegmentEvent& b) {
    if (a.kind != b.kind) return false;
    switch (a.kind) {
        case SegmentEvent::Kind::ChunkComplete:
            return a.chunk.text == b.chunk.text && a.chunk.index == b.chunk.index &&
                   a.chunk.terminated_by == b.chunk.terminated_by;
        case SegmentEvent::Kind::PhaseChange:
            return a.phase == b.phase && a.preamble == b.preamble;
        case SegmentEvent::Kind::AnswerText:
            return a.text == b.text;
    }
    return false;
}

inline bool events_equal(const std::vector<SegmentEvent>& a, const std::vector<SegmentEvent>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!events_equal(a[i], b[i])) return false;
    }
    return true;
}

inline std::string escape_for_dump(const std::string& s) {
    std::string out;
    for (char ch : s) {
        if (ch == '\n') out += "\\n";
        else if (ch == '\t') out += "\\t";
        else out += ch;
    }
    return out;
}

inline std::string dump_events(const std::vector<SegmentEvent>& events) {
    std::ostringstream os;
    for (const auto& e : events) {
        switch (e.kind) {
            case SegmentEvent::Kind::ChunkComplete:
                os << "Chunk#" << e.chunk.index << "(\"" << escape_for_dump(e.chunk.text) << "\", term="
                   << (e.chunk.terminated_by ? "\"" + escape_for_dump(*e.chunk.terminated_by) + "\"" : "none")
                   << ") ";
                break;
            case SegmentEvent::Kind::PhaseChange:
                os << "Phase(" << flashthink::phase_name(e.phase);
                if (!e.preamble.empty()) os << ", pre=\"" << escape_for_dump(e.preamble) << "\"";
                os << ") ";
                break;
            case SegmentEvent::Kind::AnswerText:
                os << "Answer(\"" << escape_for_dump(e.text) << "\") ";
                break;
        }
    }
    return os.str();
}

// Feeds the text to a fresh segmenter in the given pieces and returns every
// event including those from finish().
inline std::vector<SegmentEvent> run_fragments(const std::vector<std::string>& fragments,
                                               const std::vector<std::string>& delims,
                                               const std::string& open, const std::string& close,
                                               bool implicit_think_start) {
    StreamSegmenter seg(DelimiterSet::make(delims), ThinkMarkers{open, close}, implicit_think_start);
    std::vector<SegmentEvent> events;
    for (const auto& f : fragments) {
        for (auto& e : seg.feed(f)) events.push_back(std::move(e));
    }
    for (auto& e : seg.finish()) events.push_back(std::move(e));
    return events;
}

// All 2^(n-1) ways to cut text into contiguous non-empty pieces. Only call
// for short strings.
inline std::vector<std::vector<std::string>> all_fragmentations(const std::string& text) {
    std::vector<std::vector<std::string>> out;
    if (text.empty()) {
        out.push_back({});
        return out;
    }
    std::size_t cuts = text.size() - 1;
    for (std::uint64_t mask = 0; mask < (1ull << cuts); ++mask) {
        std::vector<std::string> frags;
        std::size_t start = 0;
        for (std::size_t i = 0; i < cuts; ++i) {
            if (mask & (1ull << i)) {
                frags.push_back(text.substr(start, i + 1 - start));
                start = i + 1;
            }
        }
        frags.push_back(text.substr(start));
        out.push_back(std::move(frags));
    }
    return out;
}

inline std::vector<std::string> random_fragmentation(const std::string& text, std::mt19937& rng) {
    std::vector<std::string> frags;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::uniform_int_distribution<std::size_t> dist(1, std::min<std::size_t>(8, text.size() - pos));
        std::size_t n = dist(rng);
        frags.push_back(text.substr(pos, n));
        pos += n;
    }
    return frags;
}

}  // namespace testutil
