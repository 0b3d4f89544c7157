#pragma once

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "flashthink/orchestrator.hpp"
#include "flashthink/segmenter.hpp"
#include "flashthink/verifier.hpp"

namespace flashthink {

// One forced continuation from a chunk prefix.
struct PrefixResult {
    std::size_t prefix_len = 0;  // i: number of chunks kept
    std::string prefix_text;     // concat of chunks 1..i, delimiters included
    std::string answer;
    double score = 0.0;
    bool correct = false;
    std::string error;  // set when the continuation request failed; sample skipped
};

enum class Label { Positive, Negative };

const char* label_name(Label label);

struct Provenance {
    std::string benchmark;
    std::string item_id;
    std::size_t prefix_len = 0;
    bool baseline_correct = false;
    bool prefix_correct = false;
};

struct TrainingSample {
    std::string question;
    std::string thought_prefix;
    Label label = Label::Positive;
    Provenance provenance;
};

// Positive iff the prefix answer scores consistently with the baseline answer,
// or is itself correct. The only Negative cell is (prefix wrong, baseline right).
Label label_for(bool prefix_correct, bool baseline_correct);

// Graded form: consistent means |prefix_score - baseline_score| <= epsilon.
// With 0/1 scores and epsilon 0 this reduces to label_for.
Label label_for_graded(double prefix_score, double baseline_score, bool prefix_correct,
                       double epsilon);

struct Ft2Options {
    std::size_t stride = 1;          // keep prefixes i = 1, 1+stride, 1+2*stride, ...
    double epsilon = 0.0;            // graded consistency band
    double correct_threshold = 1.0;  // score >= threshold counts as correct
};

using AnswerScorer = std::function<double(const std::string& answer)>;

// One continuation request per kept prefix, scored by the caller's metric.
// Upstream failures are recorded on the result and skipped; the run continues.
// Serial within an item so scripted call logs stay ordered; callers parallelize
// across items.
std::vector<PrefixResult> generate_prefix_answers(ModelClient& reasoner, const PromptRecord& x,
                                                  const std::vector<Chunk>& chunks,
                                                  const RunConfig& cfg, const AnswerScorer& scorer,
                                                  const Ft2Options& opts = {});

TrainingSample label_sample(const std::string& question, const PrefixResult& prefix,
                            bool baseline_correct, const std::string& benchmark = "",
                            const std::string& item_id = "");

TrainingSample label_sample_graded(const std::string& question, const PrefixResult& prefix,
                                   double baseline_score, bool baseline_correct, double epsilon,
                                   const std::string& benchmark = "",
                                   const std::string& item_id = "");

// Writes one JSON object per line: the rendered verifier prompt as "input",
// "yes"/"no" as "target", and the provenance under "meta". Deterministic bytes
// for identical inputs. Throws IoError when the path cannot be written.
std::size_t emit_dataset(const std::vector<TrainingSample>& samples, const PromptTemplate& tmpl,
                         const std::string& path);

}  // namespace flashthink
