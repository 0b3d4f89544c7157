#pragma once

#include <stdexcept>
#include <string>

namespace flashthink {

// Invalid construction-time configuration (empty delimiter set, bad markers, ...).
struct InvalidConfig : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// A prompt template is missing a required placeholder or has duplicates.
struct TemplateError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A fixture file failed to parse; message carries line/field diagnostics.
struct FixtureFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Verification request failed at the transport level. Callers treat this as
// "continue reasoning" and count it as a fail-open event.
struct BackendError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// The reasoning model stream failed; the orchestrator surfaces it as
// ExitKind::Error with a partial result.
struct ReasonerError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct IoError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// A benchmark record failed to parse; message carries line/field diagnostics.
struct DatasetFormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Efficiency is undefined for a zero-token baseline.
struct ZeroBaseline : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Aggregation over an empty score list.
struct EmptySet : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

}  // namespace flashthink
